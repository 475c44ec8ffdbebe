#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "taseg/kernels.hpp"
#include "taseg/types.hpp"

namespace taseg::fifa {

struct PlateauParams {
    double center = 0.0;     // frames
    double half_width = 1.0; // frames
    double sharpness = 1.0;  // dimensionless
};

enum class Optimizer { sgd, adam };

const char* optimizer_name(Optimizer opt);
Optimizer optimizer_from_name(const std::string& name);

enum class InitMode { from_model, equal };

struct FifaConfig {
    int steps = 50;
    Optimizer optimizer = Optimizer::adam;
    double learning_rate = 0.3;
    double sharpness = 1.75;
    double beta = 0.05;  // length energy multiplier
    LengthFamily length_family = LengthFamily::laplace;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    // Normalize mask columns to a per-frame soft assignment. Without the
    // normalization the observation energy of any strictly positive nll
    // is minimized by shrinking every mask to nothing, and only the
    // length energy holds the segments open; the normalized objective
    // has no such degenerate minimum.
    bool normalize_mask = true;

    void validate() const;
};

struct OptimTrace {
    struct Entry {
        int step = 0;
        std::vector<double> log_lengths;
        EnergyBreakdown energy;
    };
    std::vector<Entry> entries;         // steps + 1 entries, entry 0 is the initial state
    std::vector<double> final_lengths;  // real-valued
    double elapsed_seconds = 0.0;

    // CSV columns: step,total,e_obs,e_len,len_1..len_N
    void write_csv(std::ostream& os) const;
};

// Raised when the optimization produces a non-finite energy or gradient;
// carries everything recorded up to the failing step.
class optimization_error : public error {
public:
    optimization_error(const std::string& message, OptimTrace trace)
        : error(errc::runtime, message), trace_(std::move(trace)) {}

    const OptimTrace& trace() const { return trace_; }

private:
    OptimTrace trace_;
};

struct FifaResult {
    DecodeResult decode;
    OptimTrace trace;
};

// Smooth plateau indicator, a product of two logistic edges. Symmetric
// about the center, close to 1 inside [center - half_width, center +
// half_width] and close to 0 outside once sharpness * half_width is large.
double plateau(double t, const PlateauParams& params);

// One plateau row per segment, evaluated at integer frame coordinates
// 0..num_frames-1. Segment n is centered on its span with half-width
// len_n / 2.
Matrix mask_from_lengths(const std::vector<double>& lengths, int num_frames, double sharpness);

// P[n, t] = -log p(c_n | x_t).
Matrix nll_matrix(const ProbMatrix& probs, const Transcript& transcript,
                  Exec exec = Exec::serial);

// sum_{n,t} mask(n,t) * nll(n,t) with an explicit mask matrix.
double observation_energy(const Matrix& nll, const Matrix& mask);

// Deviation of each segment's length from its class's expected length,
// penalized linearly (laplace) or quadratically (gaussian), scaled by the
// per-class width parameter.
double length_energy(const std::vector<double>& lengths, const Transcript& transcript,
                     const LengthModel& model, LengthFamily family);

EnergyBreakdown total_energy(const std::vector<double>& lengths, const ProbMatrix& probs,
                             const Transcript& transcript, const LengthModel& model,
                             const FifaConfig& cfg, Exec exec = Exec::serial);

// Analytic d(total energy)/d(log len_n). Moving one length shifts every
// later segment, so each coordinate aggregates edge sensitivities from
// all downstream masks.
std::vector<double> energy_gradient(const std::vector<double>& log_lengths,
                                    const ProbMatrix& probs, const Transcript& transcript,
                                    const LengthModel& model, const FifaConfig& cfg,
                                    Exec exec = Exec::serial);

struct EnergyGradient {
    EnergyBreakdown energy;
    std::vector<double> grad_log_lengths;
};

// Fused evaluation against a precomputed nll matrix; the inner loop of
// fifa_align.
EnergyGradient energy_and_gradient(const std::vector<double>& log_lengths, const Matrix& nll,
                                   const Transcript& transcript, const LengthModel& model,
                                   const FifaConfig& cfg, Exec exec = Exec::serial);

// Initial length estimates: proportional to the per-class expected
// lengths, or uniform, rescaled to sum to num_frames.
std::vector<double> init_lengths(InitMode mode, const Transcript& transcript,
                                 const LengthModel& model, int num_frames);

// Rescale the expected lengths so they sum to num_frames over this
// transcript; the energy then anchors at the same values the from-model
// initialization starts from.
LengthModel anchored_model(const LengthModel& model, const Transcript& transcript, int num_frames);

// Uninformative model: every class expects the same length.
LengthModel uniform_length_model(int num_classes, double mean_length,
                                 LengthFamily family = LengthFamily::poisson);

// Minimize the approximate energy over log-lengths for cfg.steps
// optimizer steps. Returns rounded integral lengths for metric use, the
// final energy evaluated at the real-valued lengths, and the per-step
// trace. Deterministic for fixed inputs and exec policy.
FifaResult fifa_align(const ProbMatrix& probs, const Transcript& transcript,
                      const std::vector<double>& init, const LengthModel& model,
                      const FifaConfig& cfg, Exec exec = Exec::serial);

// Run fifa_align per candidate and keep the lowest final total energy;
// ties go to the lowest index. Fails only if every candidate fails.
std::pair<int, FifaResult> select_transcript_fifa(const ProbMatrix& probs,
                                                  const std::vector<Transcript>& candidates,
                                                  const LengthModel& model, const FifaConfig& cfg,
                                                  InitMode init_mode = InitMode::from_model,
                                                  Exec exec = Exec::serial);

}  // namespace taseg::fifa
