#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "taseg/metrics.hpp"
#include "taseg/types.hpp"

namespace taseg::data {

enum class ProbFormat { csv, packed_f32 };

// Picks csv for .csv, packed_f32 for .segp.
ProbFormat prob_format_from_path(const std::string& path);

// CSV: one frame per line, comma-separated probabilities.
// packed_f32: magic "SEGP", u32 frame count, u32 class count, then
// row-major float32, all little-endian.
// Class names live in an optional sidecar ("<path>.names.json", a JSON
// array) so the matrix file stays binary; load_probs picks the sidecar up
// when it exists.
ProbMatrix load_probs(const std::string& path, ProbFormat format,
                      double floor = kDefaultProbFloor);
void save_probs(const std::string& path, const ProbMatrix& probs, ProbFormat format);

std::vector<std::string> load_class_names(const std::string& path);
void save_class_names(const std::string& path, const std::vector<std::string>& names);

// One integer label per line.
Segmentation load_segmentation(const std::string& path);
void save_segmentation(const std::string& path, const Segmentation& seg);

// Single line of space-separated integer labels.
Transcript load_transcript(const std::string& path);
void save_transcript(const std::string& path, const Transcript& transcript);

// JSON object {"family": ..., "expected": [...], "scale": [...]}; scale is
// optional and defaults to 1 per class.
LengthModel load_length_model(const std::string& path);
void save_length_model(const std::string& path, const LengthModel& model);

void save_metric_report(const std::string& path, const metrics::MetricReport& report);
metrics::MetricReport load_metric_report(const std::string& path);

// Mean segment length per class over the training segmentations. Every
// class in [0, num_classes) must occur; the error lists the missing ones.
LengthModel estimate_length_model(const std::vector<Segmentation>& train, int num_classes,
                                  LengthFamily family);

struct SynthConfig {
    int num_frames = 200;          // T
    int num_segments = 5;          // N
    int num_classes = 10;          // C
    double noise_temp = 1.0;       // softmax temperature, 0 = one-hot rows
    double confusion_prob = 0.0;   // chance a frame's argmax is swapped away
    double dirichlet_alpha = 3.0;  // concentration of the length composition
    double class_length_spread = 0.0;  // 0 = every class has the same expected share
    std::uint64_t seed = 0;

    void validate() const;
};

struct ProblemInstance {
    ProbMatrix probs;
    std::optional<Segmentation> gt;
    std::optional<Transcript> transcript;
    std::string video_id;
};

// Deterministic per seed. Samples a transcript without adjacent repeats
// and a Dirichlet-proportional composition of the video length, then emits
// per-frame probability rows: one-hot at the true label softened by the
// temperature, with a confusion_prob chance of swapping the argmax to a
// random other class.
ProblemInstance synth_instance(const SynthConfig& cfg);

}  // namespace taseg::data
