#pragma once

#include <cmath>
#include <vector>

#include "taseg/types.hpp"

// Inner loops of the gradient-based inference. Each kernel exists twice:
// a plain serial reference used by the tests, and a blocked version whose
// frame range is split into fixed-size chunks that OpenMP threads work on
// independently before the partials are combined in chunk order. The
// blocked summation order is a function of the problem size only, so the
// blocked kernels return bit-identical results for any thread count.

namespace taseg::fifa {

enum class Exec { serial, parallel };

// Frames per reduction chunk in the blocked kernels.
constexpr std::size_t kKernelBlock = 2048;

// Logistic factor of the plateau; the argument is clamped to +-500 so the
// exponential cannot overflow.
inline double plateau_sigmoid(double x) {
    if (x > 500.0) x = 500.0;
    if (x < -500.0) x = -500.0;
    return 1.0 / (1.0 + std::exp(-x));
}

// Segment starts b_n (prefix sums) and ends e_n = b_n + len_n.
struct SegmentEdges {
    std::vector<double> start;
    std::vector<double> end;
};

SegmentEdges segment_edges(const std::vector<double>& lengths);

// log of the plateau value, stable for any argument size.
inline double plateau_log_sigmoid(double x) {
    if (x > 500.0) x = 500.0;
    if (x < -500.0) x = -500.0;
    return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}

// sum_{n,t} mask(n,t) * nll(n,t) with mask rows the plateau of segment n
// evaluated at integer frame coordinates. nll is N x T.
double observation_energy_kernel(const Matrix& nll, const std::vector<double>& lengths,
                                 double sharpness, Exec exec);

double observation_energy_reference(const Matrix& nll, const std::vector<double>& lengths,
                                    double sharpness);

// Same sum with the mask columns normalized to 1, i.e. a per-frame soft
// assignment over segments. Every frame's cost is then paid by exactly
// one unit of mask weight, so shrinking the masks cannot remove cost
// from the objective.
double observation_energy_normalized_kernel(const Matrix& nll, const std::vector<double>& lengths,
                                            double sharpness, Exec exec);

double observation_energy_normalized_reference(const Matrix& nll,
                                               const std::vector<double>& lengths,
                                               double sharpness);

struct ObsEnergyGrad {
    double energy = 0.0;
    std::vector<double> d_start;  // dE/db_n
    std::vector<double> d_end;    // dE/de_n
};

// Forward energy plus the sensitivity of the energy to each segment's
// start and end edge, fused in one pass over the matrix.
ObsEnergyGrad observation_energy_grad_kernel(const Matrix& nll, const std::vector<double>& lengths,
                                             double sharpness, Exec exec);

ObsEnergyGrad observation_energy_grad_reference(const Matrix& nll,
                                                const std::vector<double>& lengths,
                                                double sharpness);

ObsEnergyGrad observation_energy_grad_normalized_kernel(const Matrix& nll,
                                                        const std::vector<double>& lengths,
                                                        double sharpness, Exec exec);

ObsEnergyGrad observation_energy_grad_normalized_reference(const Matrix& nll,
                                                           const std::vector<double>& lengths,
                                                           double sharpness);

// -log p(c_n|x_t), N x T. Cells are independent, so the parallel variant
// is deterministic without any reduction bookkeeping.
Matrix nll_matrix_kernel(const ProbMatrix& probs, const Transcript& transcript, Exec exec);

}  // namespace taseg::fifa
