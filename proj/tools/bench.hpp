#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taseg/exact.hpp"
#include "taseg/fifa.hpp"

namespace taseg::bench {

struct BenchOptions {
    std::string scenario;
    std::string instances_dir;
    std::string output_path = "-";      // "-" writes to stdout
    std::string length_model_path;      // empty: estimate from the instance labels
    std::vector<double> grid;           // empty: scenario default
    std::vector<int> background;
    int repeats = 1;
    int threads = 1;
    std::uint64_t seed = 0;             // recorded per row
    exact::ExactConfig exact_cfg;
    fifa::FifaConfig fifa_cfg;
    fifa::InitMode init_mode = fifa::InitMode::from_model;
};

extern const char* const kCsvHeader;

void run_bench(const BenchOptions& opts);

}  // namespace taseg::bench
