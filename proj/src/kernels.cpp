#include "taseg/kernels.hpp"

#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace taseg::fifa {

SegmentEdges segment_edges(const std::vector<double>& lengths) {
    SegmentEdges edges;
    const std::size_t n = lengths.size();
    edges.start.resize(n);
    edges.end.resize(n);
    double b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        edges.start[i] = b;
        b += lengths[i];
        edges.end[i] = b;
    }
    return edges;
}

namespace {

// Plateau row n over frames [t0, t1): partial energy sum.
double energy_block(const double* nll_row, std::size_t t0, std::size_t t1, double b, double e,
                    double sharpness) {
    double acc = 0.0;
    for (std::size_t t = t0; t < t1; ++t) {
        const double td = static_cast<double>(t);
        const double rise = plateau_sigmoid(sharpness * (td - b));
        const double fall = plateau_sigmoid(sharpness * (e - td));
        acc += rise * fall * nll_row[t];
    }
    return acc;
}

struct GradBlock {
    double energy = 0.0;
    double d_start = 0.0;
    double d_end = 0.0;
};

GradBlock grad_block(const double* nll_row, std::size_t t0, std::size_t t1, double b, double e,
                     double sharpness) {
    GradBlock out;
    for (std::size_t t = t0; t < t1; ++t) {
        const double td = static_cast<double>(t);
        const double rise = plateau_sigmoid(sharpness * (td - b));
        const double fall = plateau_sigmoid(sharpness * (e - td));
        const double p = nll_row[t];
        out.energy += rise * fall * p;
        // d rise/db = -sharpness * rise * (1 - rise); d fall/de = sharpness * fall * (1 - fall)
        out.d_start += p * fall * rise * (1.0 - rise) * (-sharpness);
        out.d_end += p * rise * fall * (1.0 - fall) * sharpness;
    }
    return out;
}

// Soft per-frame assignment over segments: softmax of the log plateau
// values of column t. Returns the assigned cost; optionally accumulates
// the edge sensitivities of the normalized energy.
struct NormScratch {
    std::vector<double> log_mask;
    std::vector<double> rise_arg;
    std::vector<double> fall_arg;
};

// Outside |x| < 500 the logistic saturates to these exact doubles, so the
// fast column path only evaluates exp near the mask edges.
const double kSigmoidFloor = 1.0 / (1.0 + std::exp(500.0));

inline double zone_sigmoid(double x) {
    if (x >= 500.0) return 1.0;  // 1/(1 + e^-500) rounds to 1
    if (x <= -500.0) return kSigmoidFloor;
    return 1.0 / (1.0 + std::exp(-x));
}

double normalized_column(const Matrix& nll, std::size_t t, const SegmentEdges& edges,
                         double sharpness, NormScratch& scratch, double* d_start, double* d_end) {
    const std::size_t n_rows = nll.rows;
    const double td = static_cast<double>(t);
    double max_lm = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < n_rows; ++n) {
        const double u = sharpness * (td - edges.start[n]);
        const double v = sharpness * (edges.end[n] - td);
        scratch.rise_arg[n] = u;
        scratch.fall_arg[n] = v;
        scratch.log_mask[n] = plateau_log_sigmoid(u) + plateau_log_sigmoid(v);
        if (scratch.log_mask[n] > max_lm) max_lm = scratch.log_mask[n];
    }
    double denom = 0.0;
    for (std::size_t n = 0; n < n_rows; ++n) {
        scratch.log_mask[n] = std::exp(scratch.log_mask[n] - max_lm);
        denom += scratch.log_mask[n];
    }
    double assigned = 0.0;
    for (std::size_t n = 0; n < n_rows; ++n) {
        scratch.log_mask[n] /= denom;
        assigned += scratch.log_mask[n] * nll.at(n, t);
    }
    if (d_start != nullptr) {
        for (std::size_t n = 0; n < n_rows; ++n) {
            const double common = scratch.log_mask[n] * (nll.at(n, t) - assigned);
            // d logM_n / d b_n = -sharpness * sigmoid(-u); likewise for the end edge
            const double sig_neg_u = std::exp(plateau_log_sigmoid(-scratch.rise_arg[n]));
            const double sig_neg_v = std::exp(plateau_log_sigmoid(-scratch.fall_arg[n]));
            d_start[n] += common * -sharpness * sig_neg_u;
            d_end[n] += common * sharpness * sig_neg_v;
        }
    }
    return assigned;
}

// Linear-space variant of normalized_column. The sigmoids are exact
// constants away from the edges, so exp only runs near them; columns
// whose mask weights all underflow fall back to the log-space path where
// the softmax is still well defined.
double normalized_column_fast(const Matrix& nll, std::size_t t, const SegmentEdges& edges,
                              double sharpness, NormScratch& scratch, double* d_start,
                              double* d_end) {
    const std::size_t n_rows = nll.rows;
    const double td = static_cast<double>(t);
    double denom = 0.0;
    double weighted = 0.0;
    for (std::size_t n = 0; n < n_rows; ++n) {
        const double s_u = zone_sigmoid(sharpness * (td - edges.start[n]));
        const double s_v = zone_sigmoid(sharpness * (edges.end[n] - td));
        const double m = s_u * s_v;
        scratch.rise_arg[n] = s_u;
        scratch.fall_arg[n] = s_v;
        scratch.log_mask[n] = m;
        denom += m;
        weighted += m * nll.at(n, t);
    }
    if (denom < 1e-280) {
        return normalized_column(nll, t, edges, sharpness, scratch, d_start, d_end);
    }
    const double inv_denom = 1.0 / denom;
    const double assigned = weighted * inv_denom;
    if (d_start != nullptr) {
        for (std::size_t n = 0; n < n_rows; ++n) {
            const double weight = scratch.log_mask[n] * inv_denom;
            const double common = weight * (nll.at(n, t) - assigned);
            d_start[n] += common * -sharpness * (1.0 - scratch.rise_arg[n]);
            d_end[n] += common * sharpness * (1.0 - scratch.fall_arg[n]);
        }
    }
    return assigned;
}

}  // namespace

double observation_energy_reference(const Matrix& nll, const std::vector<double>& lengths,
                                    double sharpness) {
    const SegmentEdges edges = segment_edges(lengths);
    double acc = 0.0;
    for (std::size_t n = 0; n < nll.rows; ++n) {
        acc += energy_block(nll.row(n), 0, nll.cols, edges.start[n], edges.end[n], sharpness);
    }
    return acc;
}

double observation_energy_kernel(const Matrix& nll, const std::vector<double>& lengths,
                                 double sharpness, Exec exec) {
    const SegmentEdges edges = segment_edges(lengths);
    const std::size_t n_rows = nll.rows;
    const std::size_t n_blocks = (nll.cols + kKernelBlock - 1) / kKernelBlock;
    std::vector<double> partial(n_rows * n_blocks, 0.0);

    const std::int64_t tasks = static_cast<std::int64_t>(n_rows * n_blocks);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
#endif
    for (std::int64_t k = 0; k < tasks; ++k) {
        const std::size_t n = static_cast<std::size_t>(k) / n_blocks;
        const std::size_t blk = static_cast<std::size_t>(k) % n_blocks;
        const std::size_t t0 = blk * kKernelBlock;
        const std::size_t t1 = std::min(t0 + kKernelBlock, nll.cols);
        partial[k] = energy_block(nll.row(n), t0, t1, edges.start[n], edges.end[n], sharpness);
    }

    double acc = 0.0;
    for (std::size_t k = 0; k < partial.size(); ++k) acc += partial[k];
    return acc;
}

ObsEnergyGrad observation_energy_grad_reference(const Matrix& nll,
                                                const std::vector<double>& lengths,
                                                double sharpness) {
    const SegmentEdges edges = segment_edges(lengths);
    ObsEnergyGrad out;
    out.d_start.assign(nll.rows, 0.0);
    out.d_end.assign(nll.rows, 0.0);
    for (std::size_t n = 0; n < nll.rows; ++n) {
        const GradBlock g =
            grad_block(nll.row(n), 0, nll.cols, edges.start[n], edges.end[n], sharpness);
        out.energy += g.energy;
        out.d_start[n] = g.d_start;
        out.d_end[n] = g.d_end;
    }
    return out;
}

ObsEnergyGrad observation_energy_grad_kernel(const Matrix& nll, const std::vector<double>& lengths,
                                             double sharpness, Exec exec) {
    const SegmentEdges edges = segment_edges(lengths);
    const std::size_t n_rows = nll.rows;
    const std::size_t n_blocks = (nll.cols + kKernelBlock - 1) / kKernelBlock;
    std::vector<GradBlock> partial(n_rows * n_blocks);

    const std::int64_t tasks = static_cast<std::int64_t>(n_rows * n_blocks);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
#endif
    for (std::int64_t k = 0; k < tasks; ++k) {
        const std::size_t n = static_cast<std::size_t>(k) / n_blocks;
        const std::size_t blk = static_cast<std::size_t>(k) % n_blocks;
        const std::size_t t0 = blk * kKernelBlock;
        const std::size_t t1 = std::min(t0 + kKernelBlock, nll.cols);
        partial[k] = grad_block(nll.row(n), t0, t1, edges.start[n], edges.end[n], sharpness);
    }

    ObsEnergyGrad out;
    out.d_start.assign(n_rows, 0.0);
    out.d_end.assign(n_rows, 0.0);
    for (std::size_t n = 0; n < n_rows; ++n) {
        for (std::size_t blk = 0; blk < n_blocks; ++blk) {
            const GradBlock& g = partial[n * n_blocks + blk];
            out.energy += g.energy;
            out.d_start[n] += g.d_start;
            out.d_end[n] += g.d_end;
        }
    }
    return out;
}

double observation_energy_normalized_reference(const Matrix& nll,
                                               const std::vector<double>& lengths,
                                               double sharpness) {
    const SegmentEdges edges = segment_edges(lengths);
    NormScratch scratch;
    scratch.log_mask.resize(nll.rows);
    scratch.rise_arg.resize(nll.rows);
    scratch.fall_arg.resize(nll.rows);
    double acc = 0.0;
    for (std::size_t t = 0; t < nll.cols; ++t) {
        acc += normalized_column(nll, t, edges, sharpness, scratch, nullptr, nullptr);
    }
    return acc;
}

ObsEnergyGrad observation_energy_grad_normalized_reference(const Matrix& nll,
                                                           const std::vector<double>& lengths,
                                                           double sharpness) {
    const SegmentEdges edges = segment_edges(lengths);
    NormScratch scratch;
    scratch.log_mask.resize(nll.rows);
    scratch.rise_arg.resize(nll.rows);
    scratch.fall_arg.resize(nll.rows);
    ObsEnergyGrad out;
    out.d_start.assign(nll.rows, 0.0);
    out.d_end.assign(nll.rows, 0.0);
    for (std::size_t t = 0; t < nll.cols; ++t) {
        out.energy += normalized_column(nll, t, edges, sharpness, scratch, out.d_start.data(),
                                        out.d_end.data());
    }
    return out;
}

double observation_energy_normalized_kernel(const Matrix& nll, const std::vector<double>& lengths,
                                            double sharpness, Exec exec) {
    const SegmentEdges edges = segment_edges(lengths);
    const std::size_t n_blocks = (nll.cols + kKernelBlock - 1) / kKernelBlock;
    std::vector<double> partial(n_blocks, 0.0);

    const std::int64_t tasks = static_cast<std::int64_t>(n_blocks);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
#endif
    for (std::int64_t blk = 0; blk < tasks; ++blk) {
        NormScratch scratch;
        scratch.log_mask.resize(nll.rows);
        scratch.rise_arg.resize(nll.rows);
        scratch.fall_arg.resize(nll.rows);
        const std::size_t t0 = static_cast<std::size_t>(blk) * kKernelBlock;
        const std::size_t t1 = std::min(t0 + kKernelBlock, nll.cols);
        double acc = 0.0;
        for (std::size_t t = t0; t < t1; ++t) {
            acc += normalized_column_fast(nll, t, edges, sharpness, scratch, nullptr, nullptr);
        }
        partial[blk] = acc;
    }

    double acc = 0.0;
    for (double p : partial) acc += p;
    return acc;
}

ObsEnergyGrad observation_energy_grad_normalized_kernel(const Matrix& nll,
                                                        const std::vector<double>& lengths,
                                                        double sharpness, Exec exec) {
    const SegmentEdges edges = segment_edges(lengths);
    const std::size_t n_rows = nll.rows;
    const std::size_t n_blocks = (nll.cols + kKernelBlock - 1) / kKernelBlock;
    const std::size_t width = 1 + 2 * n_rows;  // energy, d_start, d_end per block
    std::vector<double> partial(n_blocks * width, 0.0);

    const std::int64_t tasks = static_cast<std::int64_t>(n_blocks);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
#endif
    for (std::int64_t blk = 0; blk < tasks; ++blk) {
        NormScratch scratch;
        scratch.log_mask.resize(n_rows);
        scratch.rise_arg.resize(n_rows);
        scratch.fall_arg.resize(n_rows);
        double* slot = partial.data() + static_cast<std::size_t>(blk) * width;
        const std::size_t t0 = static_cast<std::size_t>(blk) * kKernelBlock;
        const std::size_t t1 = std::min(t0 + kKernelBlock, nll.cols);
        for (std::size_t t = t0; t < t1; ++t) {
            slot[0] += normalized_column_fast(nll, t, edges, sharpness, scratch, slot + 1,
                                              slot + 1 + n_rows);
        }
    }

    ObsEnergyGrad out;
    out.d_start.assign(n_rows, 0.0);
    out.d_end.assign(n_rows, 0.0);
    for (std::size_t blk = 0; blk < n_blocks; ++blk) {
        const double* slot = partial.data() + blk * width;
        out.energy += slot[0];
        for (std::size_t n = 0; n < n_rows; ++n) {
            out.d_start[n] += slot[1 + n];
            out.d_end[n] += slot[1 + n_rows + n];
        }
    }
    return out;
}

Matrix nll_matrix_kernel(const ProbMatrix& probs, const Transcript& transcript, Exec exec) {
    const std::size_t n_rows = transcript.size();
    const std::size_t n_cols = static_cast<std::size_t>(probs.num_frames);
    Matrix out(n_rows, n_cols);

    const std::int64_t tasks = static_cast<std::int64_t>(n_rows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
#endif
    for (std::int64_t n = 0; n < tasks; ++n) {
        const int c = transcript[static_cast<std::size_t>(n)];
        double* row = out.row(static_cast<std::size_t>(n));
        for (std::size_t t = 0; t < n_cols; ++t) {
            row[t] = -std::log(probs.at(static_cast<int>(t), c));
        }
    }
    return out;
}

}  // namespace taseg::fifa
