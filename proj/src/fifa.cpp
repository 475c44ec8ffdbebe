#include "taseg/fifa.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <string>

#include "taseg/core.hpp"

namespace taseg::fifa {

const char* optimizer_name(Optimizer opt) {
    return opt == Optimizer::sgd ? "sgd" : "adam";
}

Optimizer optimizer_from_name(const std::string& name) {
    if (name == "sgd") return Optimizer::sgd;
    if (name == "adam") return Optimizer::adam;
    throw error(errc::parse, "unknown optimizer: " + name);
}

void FifaConfig::validate() const {
    if (steps < 0) throw error(errc::validation, "step count must be >= 0");
    if (!(learning_rate > 0.0)) throw error(errc::validation, "learning rate must be positive");
    if (!(sharpness > 0.0)) throw error(errc::validation, "mask sharpness must be positive");
    if (beta < 0.0) throw error(errc::validation, "length energy multiplier must be >= 0");
    if (length_family == LengthFamily::poisson) {
        throw error(errc::unsupported,
                    "gradient-based inference needs a real-valued length family (laplace or gaussian)");
    }
}

double plateau(double t, const PlateauParams& params) {
    const double rise = plateau_sigmoid(params.sharpness * (t - (params.center - params.half_width)));
    const double fall = plateau_sigmoid(params.sharpness * ((params.center + params.half_width) - t));
    return rise * fall;
}

Matrix mask_from_lengths(const std::vector<double>& lengths, int num_frames, double sharpness) {
    const SegmentEdges edges = segment_edges(lengths);
    Matrix mask(lengths.size(), static_cast<std::size_t>(num_frames));
    for (std::size_t n = 0; n < lengths.size(); ++n) {
        double* row = mask.row(n);
        for (int t = 0; t < num_frames; ++t) {
            const double rise = plateau_sigmoid(sharpness * (t - edges.start[n]));
            const double fall = plateau_sigmoid(sharpness * (edges.end[n] - t));
            row[t] = rise * fall;
        }
    }
    return mask;
}

Matrix nll_matrix(const ProbMatrix& probs, const Transcript& transcript, Exec exec) {
    validate_transcript(transcript, probs.num_classes);
    return nll_matrix_kernel(probs, transcript, exec);
}

double observation_energy(const Matrix& nll, const Matrix& mask) {
    if (nll.rows != mask.rows || nll.cols != mask.cols) {
        throw error(errc::validation, "nll and mask shapes differ");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < nll.v.size(); ++i) acc += nll.v[i] * mask.v[i];
    return acc;
}

namespace {

double sign_of(double x) {
    if (x > 0.0) return 1.0;
    if (x < 0.0) return -1.0;
    return 0.0;
}

// Per-segment length energy term and its derivative with respect to the
// (absolute) length.
struct LengthTerm {
    double energy = 0.0;
    double d_len = 0.0;
};

LengthTerm length_term(double len, double expected, double scale, LengthFamily family) {
    LengthTerm out;
    const double dev = (len - expected) / scale;
    if (family == LengthFamily::laplace) {
        out.energy = std::abs(dev);
        out.d_len = sign_of(dev) / scale;
    } else {
        out.energy = dev * dev;
        out.d_len = 2.0 * dev / scale;
    }
    return out;
}

void check_model_for(const Transcript& transcript, const LengthModel& model) {
    model.validate();
    validate_transcript(transcript, model.num_classes());
}

}  // namespace

double length_energy(const std::vector<double>& lengths, const Transcript& transcript,
                     const LengthModel& model, LengthFamily family) {
    if (lengths.size() != transcript.size()) {
        throw error(errc::validation, "transcript and length counts differ");
    }
    check_model_for(transcript, model);
    double acc = 0.0;
    for (std::size_t n = 0; n < lengths.size(); ++n) {
        const int c = transcript[n];
        acc += length_term(lengths[n], model.expected[c], model.scale[c], family).energy;
    }
    return acc;
}

EnergyBreakdown total_energy(const std::vector<double>& lengths, const ProbMatrix& probs,
                             const Transcript& transcript, const LengthModel& model,
                             const FifaConfig& cfg, Exec exec) {
    const Matrix nll = nll_matrix(probs, transcript, exec);
    EnergyBreakdown out;
    out.observation = cfg.normalize_mask
                          ? observation_energy_normalized_kernel(nll, lengths, cfg.sharpness, exec)
                          : observation_energy_kernel(nll, lengths, cfg.sharpness, exec);
    out.length = length_energy(lengths, transcript, model, cfg.length_family);
    out.total = out.observation + cfg.beta * out.length;
    return out;
}

EnergyGradient energy_and_gradient(const std::vector<double>& log_lengths, const Matrix& nll,
                                   const Transcript& transcript, const LengthModel& model,
                                   const FifaConfig& cfg, Exec exec) {
    const std::size_t n_seg = log_lengths.size();
    if (nll.rows != n_seg || transcript.size() != n_seg) {
        throw error(errc::validation, "transcript, nll and length counts differ");
    }
    check_model_for(transcript, model);

    std::vector<double> lengths(n_seg);
    for (std::size_t n = 0; n < n_seg; ++n) lengths[n] = std::exp(log_lengths[n]);

    const ObsEnergyGrad obs =
        cfg.normalize_mask
            ? observation_energy_grad_normalized_kernel(nll, lengths, cfg.sharpness, exec)
            : observation_energy_grad_kernel(nll, lengths, cfg.sharpness, exec);

    // Length k moves the start of every later segment and the end of
    // segment k onward: dE/dlen_k = sum_{n>k} dE/db_n + sum_{n>=k} dE/de_n.
    std::vector<double> suffix_start(n_seg + 1, 0.0);
    std::vector<double> suffix_end(n_seg + 1, 0.0);
    for (std::size_t n = n_seg; n-- > 0;) {
        suffix_start[n] = suffix_start[n + 1] + obs.d_start[n];
        suffix_end[n] = suffix_end[n + 1] + obs.d_end[n];
    }

    EnergyGradient out;
    out.energy.observation = obs.energy;
    out.grad_log_lengths.resize(n_seg);
    double len_energy = 0.0;
    for (std::size_t n = 0; n < n_seg; ++n) {
        const int c = transcript[n];
        const LengthTerm lt = length_term(lengths[n], model.expected[c], model.scale[c],
                                          cfg.length_family);
        len_energy += lt.energy;
        const double d_len = suffix_start[n + 1] + suffix_end[n] + cfg.beta * lt.d_len;
        out.grad_log_lengths[n] = lengths[n] * d_len;
    }
    out.energy.length = len_energy;
    out.energy.total = out.energy.observation + cfg.beta * len_energy;
    return out;
}

std::vector<double> energy_gradient(const std::vector<double>& log_lengths,
                                    const ProbMatrix& probs, const Transcript& transcript,
                                    const LengthModel& model, const FifaConfig& cfg, Exec exec) {
    const Matrix nll = nll_matrix(probs, transcript, exec);
    return energy_and_gradient(log_lengths, nll, transcript, model, cfg, exec).grad_log_lengths;
}

std::vector<double> init_lengths(InitMode mode, const Transcript& transcript,
                                 const LengthModel& model, int num_frames) {
    const std::size_t n_seg = transcript.size();
    if (n_seg == 0) throw error(errc::validation, "transcript is empty");
    if (static_cast<int>(n_seg) > num_frames) {
        throw error(errc::infeasible,
                    std::to_string(n_seg) + " segments cannot fit in " +
                        std::to_string(num_frames) + " frames");
    }
    std::vector<double> out(n_seg);
    if (mode == InitMode::equal) {
        const double each = static_cast<double>(num_frames) / static_cast<double>(n_seg);
        for (auto& len : out) len = each;
        return out;
    }
    check_model_for(transcript, model);
    double sum = 0.0;
    for (std::size_t n = 0; n < n_seg; ++n) {
        out[n] = model.expected[transcript[n]];
        sum += out[n];
    }
    for (auto& len : out) len *= static_cast<double>(num_frames) / sum;
    return out;
}

LengthModel anchored_model(const LengthModel& model, const Transcript& transcript,
                           int num_frames) {
    check_model_for(transcript, model);
    double sum = 0.0;
    for (int label : transcript) sum += model.expected[label];
    LengthModel out = model;
    const double factor = static_cast<double>(num_frames) / sum;
    for (double& mean : out.expected) mean *= factor;
    return out;
}

LengthModel uniform_length_model(int num_classes, double mean_length, LengthFamily family) {
    if (num_classes < 1) throw error(errc::validation, "class count must be >= 1");
    if (!(mean_length > 0.0)) throw error(errc::validation, "mean length must be positive");
    LengthModel out;
    out.family = family;
    out.expected.assign(num_classes, mean_length);
    out.scale.assign(num_classes, 1.0);
    return out;
}

namespace {

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    int t = 0;
};

void optimizer_step(std::vector<double>& z, const std::vector<double>& grad,
                    const FifaConfig& cfg, AdamState& adam) {
    if (cfg.optimizer == Optimizer::sgd) {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] -= cfg.learning_rate * grad[i];
        return;
    }
    ++adam.t;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, adam.t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, adam.t);
    for (std::size_t i = 0; i < z.size(); ++i) {
        adam.m[i] = cfg.adam_beta1 * adam.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
        adam.v[i] = cfg.adam_beta2 * adam.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
        const double m_hat = adam.m[i] / bc1;
        const double v_hat = adam.v[i] / bc2;
        z[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
}

bool all_finite(const std::vector<double>& xs) {
    for (double x : xs) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool finite_energy(const EnergyBreakdown& e) {
    return std::isfinite(e.observation) && std::isfinite(e.length) && std::isfinite(e.total);
}

}  // namespace

FifaResult fifa_align(const ProbMatrix& probs, const Transcript& transcript,
                      const std::vector<double>& init, const LengthModel& model,
                      const FifaConfig& cfg, Exec exec) {
    cfg.validate();
    check_model_for(transcript, model);
    if (static_cast<int>(transcript.size()) > probs.num_frames) {
        throw error(errc::infeasible,
                    std::to_string(transcript.size()) + " segments cannot fit in " +
                        std::to_string(probs.num_frames) + " frames");
    }
    if (init.size() != transcript.size()) {
        throw error(errc::validation, "transcript and initial length counts differ");
    }
    for (std::size_t n = 0; n < init.size(); ++n) {
        if (!(init[n] > 0.0) || !std::isfinite(init[n])) {
            throw error(errc::validation,
                        "initial length for segment " + std::to_string(n) + " must be positive");
        }
    }

    const auto t_begin = std::chrono::steady_clock::now();
    const Matrix nll = nll_matrix(probs, transcript, exec);

    std::vector<double> z(init.size());
    for (std::size_t n = 0; n < init.size(); ++n) z[n] = std::log(init[n]);

    OptimTrace trace;
    trace.entries.reserve(static_cast<std::size_t>(cfg.steps) + 1);
    AdamState adam;
    adam.m.assign(z.size(), 0.0);
    adam.v.assign(z.size(), 0.0);

    EnergyGradient eval = energy_and_gradient(z, nll, transcript, model, cfg, exec);
    trace.entries.push_back({0, z, eval.energy});
    std::size_t best = 0;

    for (int step = 1; step <= cfg.steps; ++step) {
        if (!finite_energy(eval.energy) || !all_finite(eval.grad_log_lengths)) {
            trace.elapsed_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
            throw optimization_error(
                "non-finite energy or gradient before step " + std::to_string(step),
                std::move(trace));
        }
        optimizer_step(z, eval.grad_log_lengths, cfg, adam);
        eval = energy_and_gradient(z, nll, transcript, model, cfg, exec);
        trace.entries.push_back({step, z, eval.energy});
        if (eval.energy.total < trace.entries[best].energy.total) {
            best = trace.entries.size() - 1;
        }
    }
    if (!finite_energy(trace.entries[best].energy)) {
        trace.elapsed_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
        throw optimization_error("non-finite energy after final step", std::move(trace));
    }

    // The update rule can step away from a minimum it already visited, so
    // the lowest-energy iterate is the decode, not the last one.
    const std::vector<double>& best_z = trace.entries[best].log_lengths;
    std::vector<double> real_lengths(best_z.size());
    for (std::size_t n = 0; n < best_z.size(); ++n) real_lengths[n] = std::exp(best_z[n]);

    // The energy never observes the last segment past the end of the
    // video, so its optimized length carries no information beyond the
    // start of the segment. Every trailing frame belongs to the last mask
    // under an argmax reading, so the decoded length fills the remainder.
    std::vector<double> decoded = real_lengths;
    double last_start = 0.0;
    for (std::size_t n = 0; n + 1 < decoded.size(); ++n) last_start += decoded[n];
    const double remainder = static_cast<double>(probs.num_frames) - last_start;
    if (remainder >= 1.0) decoded.back() = remainder;

    FifaResult out;
    out.decode.lengths = round_lengths(decoded, probs.num_frames);
    out.decode.real_lengths = real_lengths;
    out.decode.energy = trace.entries[best].energy;
    out.decode.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();

    trace.final_lengths = real_lengths;
    trace.elapsed_seconds = out.decode.elapsed_seconds;
    out.trace = std::move(trace);
    return out;
}

std::pair<int, FifaResult> select_transcript_fifa(const ProbMatrix& probs,
                                                  const std::vector<Transcript>& candidates,
                                                  const LengthModel& model, const FifaConfig& cfg,
                                                  InitMode init_mode, Exec exec) {
    if (candidates.empty()) {
        throw error(errc::validation, "candidate transcript list is empty");
    }
    int best = -1;
    FifaResult best_result;
    std::string failures;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        try {
            const std::vector<double> init =
                init_lengths(init_mode, candidates[i], model, probs.num_frames);
            FifaResult result = fifa_align(probs, candidates[i], init, model, cfg, exec);
            if (best < 0 || result.decode.energy->total < best_result.decode.energy->total) {
                best = static_cast<int>(i);
                best_result = std::move(result);
            }
        } catch (const error& e) {
            failures += "candidate " + std::to_string(i) + ": " + e.what() + "; ";
        }
    }
    if (best < 0) {
        throw error(errc::infeasible, "every candidate transcript failed: " + failures);
    }
    return {best, std::move(best_result)};
}

void OptimTrace::write_csv(std::ostream& os) const {
    const std::size_t n_seg = entries.empty() ? 0 : entries.front().log_lengths.size();
    os << "step,total,e_obs,e_len";
    for (std::size_t n = 0; n < n_seg; ++n) os << ",len_" << (n + 1);
    os << "\n";
    os.precision(17);
    for (const Entry& entry : entries) {
        os << entry.step << "," << entry.energy.total << "," << entry.energy.observation << ","
           << entry.energy.length;
        for (double z : entry.log_lengths) os << "," << std::exp(z);
        os << "\n";
    }
}

}  // namespace taseg::fifa
