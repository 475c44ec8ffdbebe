#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace taseg {

enum class errc {
    validation,
    infeasible,
    io,
    parse,
    unsupported,
    guard,
    runtime,
};

const char* errc_name(errc kind);

class error : public std::runtime_error {
public:
    error(errc kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    errc kind() const { return kind_; }

private:
    errc kind_;
};

// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), v(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    double* row(std::size_t r) { return v.data() + r * cols; }
    const double* row(std::size_t r) const { return v.data() + r * cols; }

    bool operator==(const Matrix&) const = default;
};

using Transcript = std::vector<int>;    // ordered action labels c_1..c_N
using Segmentation = std::vector<int>;  // per-frame labels y_1..y_T

constexpr double kDefaultProbFloor = 1e-8;
constexpr double kRowSumTolerance = 1e-4;

// Frame-wise class probabilities p(class|x_t), one row per frame.
// Rows must sum to 1 within kRowSumTolerance. A positive floor keeps
// every entry away from zero so -log stays finite; rows the floor
// touched are renormalized.
struct ProbMatrix {
    int num_frames = 0;   // T
    int num_classes = 0;  // C
    Matrix probs;
    std::vector<std::string> class_names;

    static ProbMatrix from_rows(Matrix raw, double floor = kDefaultProbFloor,
                                std::vector<std::string> names = {});

    double at(int t, int c) const {
        return probs.at(static_cast<std::size_t>(t), static_cast<std::size_t>(c));
    }
};

enum class LengthFamily { poisson, laplace, gaussian };

const char* length_family_name(LengthFamily family);
LengthFamily length_family_from_name(const std::string& name);

// Per-class segment length prior.
struct LengthModel {
    LengthFamily family = LengthFamily::poisson;
    std::vector<double> expected;  // mean segment length per class, frames
    std::vector<double> scale;     // width parameter per class (laplace/gaussian)

    int num_classes() const { return static_cast<int>(expected.size()); }
    void validate() const;
};

struct EnergyBreakdown {
    double observation = 0.0;  // nats
    double length = 0.0;       // nats
    double total = 0.0;        // observation + beta * length
};

struct DecodeResult {
    std::vector<int> lengths;          // integral, sums to T
    std::vector<double> real_lengths;  // gradient-based path only
    double log_prob = std::numeric_limits<double>::quiet_NaN();  // exact path
    std::optional<EnergyBreakdown> energy;                       // gradient path
    double elapsed_seconds = 0.0;
};

}  // namespace taseg
