#include "taseg/exact.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "taseg/core.hpp"

namespace taseg::exact {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_alignment_inputs(const ProbMatrix& probs, const Transcript& transcript,
                            const LengthModel& model) {
    model.validate();
    validate_transcript(transcript, probs.num_classes);
    if (model.num_classes() < probs.num_classes) {
        throw error(errc::validation, "length model covers fewer classes than the probabilities");
    }
    if (static_cast<int>(transcript.size()) > probs.num_frames) {
        throw error(errc::infeasible,
                    std::to_string(transcript.size()) + " segments cannot fit in " +
                        std::to_string(probs.num_frames) + " frames");
    }
}

struct AlignTables {
    std::vector<std::vector<double>> obs;     // per segment, log p(c_n|x_t)
    std::vector<std::vector<double>> len_lp;  // per segment, log-prior for lengths 1..cap
};

AlignTables build_tables(const ProbMatrix& probs, const Transcript& transcript,
                         const LengthModel& model, int cap) {
    AlignTables tables;
    const int n_seg = static_cast<int>(transcript.size());
    tables.obs.resize(n_seg);
    tables.len_lp.resize(n_seg);
    for (int n = 0; n < n_seg; ++n) {
        tables.obs[n].resize(static_cast<std::size_t>(probs.num_frames));
        for (int t = 0; t < probs.num_frames; ++t) {
            tables.obs[n][t] = std::log(probs.at(t, transcript[n]));
        }
        tables.len_lp[n].assign(static_cast<std::size_t>(cap) + 1, kNegInf);
        for (int len = 1; len <= cap; ++len) {
            tables.len_lp[n][len] = poisson_log_pmf(len, model.expected[transcript[n]]);
        }
    }
    return tables;
}

struct Terminal {
    double log_prob = kNegInf;
    int last_len = 0;
};

DecodeResult backtrack(const Terminal& terminal, const std::vector<int>& best_prev_len,
                       int n_frames, int n_seg) {
    if (terminal.log_prob == kNegInf) {
        throw error(errc::infeasible, "no feasible alignment under the segment length cap");
    }
    DecodeResult out;
    out.lengths.assign(n_seg, 0);
    out.lengths[n_seg - 1] = terminal.last_len;
    int start = n_frames - terminal.last_len;
    for (int n = n_seg - 1; n >= 1; --n) {
        const int prev_len = best_prev_len[static_cast<std::size_t>(start) * n_seg + n];
        out.lengths[n - 1] = prev_len;
        start -= prev_len;
    }
    out.log_prob = terminal.log_prob;
    return out;
}

// Dense sweep over every running length up to the cap. O(cap * N) per frame.
DecodeResult viterbi_dense(const ProbMatrix& probs, const Transcript& transcript,
                           const AlignTables& tables, int cap) {
    const int n_frames = probs.num_frames;
    const int n_seg = static_cast<int>(transcript.size());
    const std::size_t stride = static_cast<std::size_t>(cap) + 1;

    std::vector<double> prev(static_cast<std::size_t>(n_seg) * stride, kNegInf);
    std::vector<double> cur(static_cast<std::size_t>(n_seg) * stride, kNegInf);
    std::vector<int> best_prev_len(static_cast<std::size_t>(n_frames) * n_seg, 0);

    prev[0 * stride + 1] = tables.obs[0][0];

    for (int t = 1; t < n_frames; ++t) {
        const int reach = std::min(cap, t);  // longest running length at frame t-1
        for (int n = 0; n < n_seg; ++n) {
            const double o = tables.obs[n][t];
            const double* prev_row = prev.data() + static_cast<std::size_t>(n) * stride;
            double* cur_row = cur.data() + static_cast<std::size_t>(n) * stride;
            const int grow_cap = std::min(cap, t + 1);
            for (int len = 2; len <= grow_cap; ++len) {
                cur_row[len] = prev_row[len - 1] + o;
            }
            for (int len = grow_cap + 1; len <= cap; ++len) cur_row[len] = kNegInf;

            if (n > 0) {
                const double* up_row = prev.data() + static_cast<std::size_t>(n - 1) * stride;
                const double* lp = tables.len_lp[n - 1].data();
                double best = kNegInf;
                int best_len = 0;
                for (int len = 1; len <= reach; ++len) {
                    const double cand = up_row[len] + lp[len];
                    if (cand > best) {
                        best = cand;
                        best_len = len;
                    }
                }
                cur_row[1] = best + o;
                best_prev_len[static_cast<std::size_t>(t) * n_seg + n] = best_len;
            } else {
                cur_row[1] = kNegInf;
            }
        }
        std::swap(prev, cur);
    }

    Terminal terminal;
    const double* last_row = prev.data() + static_cast<std::size_t>(n_seg - 1) * stride;
    for (int len = 1; len <= cap; ++len) {
        const double cand = last_row[len] + tables.len_lp[n_seg - 1][len];
        if (cand > terminal.log_prob) {
            terminal.log_prob = cand;
            terminal.last_len = len;
        }
    }
    return backtrack(terminal, best_prev_len, n_frames, n_seg);
}

// Beamed sweep: each segment keeps only the beam_width best running
// lengths alive, so a frame costs O(beam * N). Approximate by design.
DecodeResult viterbi_beam(const ProbMatrix& probs, const Transcript& transcript,
                          const AlignTables& tables, int cap, int beam_width) {
    const int n_frames = probs.num_frames;
    const int n_seg = static_cast<int>(transcript.size());

    struct Hyp {
        int len;
        double score;
    };
    std::vector<std::vector<Hyp>> prev(n_seg), cur(n_seg);
    for (auto& row : prev) row.reserve(beam_width + 1);
    for (auto& row : cur) row.reserve(beam_width + 1);
    std::vector<int> best_prev_len(static_cast<std::size_t>(n_frames) * n_seg, 0);

    prev[0].push_back({1, tables.obs[0][0]});

    for (int t = 1; t < n_frames; ++t) {
        for (int n = 0; n < n_seg; ++n) {
            const double o = tables.obs[n][t];
            cur[n].clear();
            if (n > 0 && !prev[n - 1].empty()) {
                const double* lp = tables.len_lp[n - 1].data();
                double best = kNegInf;
                int best_len = 0;
                for (const Hyp& hyp : prev[n - 1]) {
                    const double cand = hyp.score + lp[hyp.len];
                    if (cand > best) {
                        best = cand;
                        best_len = hyp.len;
                    }
                }
                cur[n].push_back({1, best + o});
                best_prev_len[static_cast<std::size_t>(t) * n_seg + n] = best_len;
            }
            for (const Hyp& hyp : prev[n]) {
                if (hyp.len + 1 <= cap) cur[n].push_back({hyp.len + 1, hyp.score + o});
            }
            if (static_cast<int>(cur[n].size()) > beam_width) {
                auto worst = std::min_element(
                    cur[n].begin(), cur[n].end(),
                    [](const Hyp& a, const Hyp& b) { return a.score < b.score; });
                cur[n].erase(worst);
            }
        }
        std::swap(prev, cur);
    }

    Terminal terminal;
    for (const Hyp& hyp : prev[n_seg - 1]) {
        const double cand = hyp.score + tables.len_lp[n_seg - 1][hyp.len];
        if (cand > terminal.log_prob) {
            terminal.log_prob = cand;
            terminal.last_len = hyp.len;
        }
    }
    return backtrack(terminal, best_prev_len, n_frames, n_seg);
}

}  // namespace

void ExactConfig::validate() const {
    if (max_segment_len < 1) throw error(errc::validation, "max segment length must be >= 1");
    if (frame_sample_stride < 1) throw error(errc::validation, "frame sample stride must be >= 1");
    if (beam_width < 0) throw error(errc::validation, "beam width must be >= 0");
}

double poisson_log_pmf(int length, double mean) {
    return length * std::log(mean) - mean - std::lgamma(static_cast<double>(length) + 1.0);
}

DecodeResult viterbi_align(const ProbMatrix& probs, const Transcript& transcript,
                           const LengthModel& model, const ExactConfig& cfg) {
    cfg.validate();
    check_alignment_inputs(probs, transcript, model);
    if (model.family != LengthFamily::poisson) {
        throw error(errc::unsupported,
                    "exact inference supports only the poisson length family, got " +
                        std::string(length_family_name(model.family)));
    }
    const int n_frames = probs.num_frames;
    const int n_seg = static_cast<int>(transcript.size());
    const int cap = std::min(cfg.max_segment_len, n_frames);
    if (static_cast<long long>(n_seg) * cap < n_frames) {
        throw error(errc::infeasible,
                    std::to_string(n_frames) + " frames cannot be covered by " +
                        std::to_string(n_seg) + " segments of at most " + std::to_string(cap) +
                        " frames");
    }

    const auto t_begin = std::chrono::steady_clock::now();
    const AlignTables tables = build_tables(probs, transcript, model, cap);
    DecodeResult out = cfg.beam_width > 0
                           ? viterbi_beam(probs, transcript, tables, cap, cfg.beam_width)
                           : viterbi_dense(probs, transcript, tables, cap);
    out.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return out;
}

namespace {

struct BruteState {
    const ProbMatrix* probs = nullptr;
    const Transcript* transcript = nullptr;
    const LengthModel* model = nullptr;
    std::vector<std::vector<double>> obs_prefix;  // per segment, prefix sums of log p
    std::vector<int> lengths;
    std::vector<int> best_lengths;
    double best = kNegInf;
};

void brute_recurse(BruteState& st, int n, int start, double acc) {
    const int n_seg = static_cast<int>(st.transcript->size());
    const int n_frames = st.probs->num_frames;
    if (n == n_seg - 1) {
        const int len = n_frames - start;
        const double seg_obs = st.obs_prefix[n][n_frames] - st.obs_prefix[n][start];
        const double total =
            acc + seg_obs + poisson_log_pmf(len, st.model->expected[(*st.transcript)[n]]);
        if (total > st.best) {
            st.best = total;
            st.lengths[n] = len;
            st.best_lengths = st.lengths;
        }
        return;
    }
    const int remaining_segments = n_seg - n - 1;
    const int max_len = n_frames - start - remaining_segments;
    for (int len = 1; len <= max_len; ++len) {
        const double seg_obs = st.obs_prefix[n][start + len] - st.obs_prefix[n][start];
        const double prior = poisson_log_pmf(len, st.model->expected[(*st.transcript)[n]]);
        st.lengths[n] = len;
        brute_recurse(st, n + 1, start + len, acc + seg_obs + prior);
    }
}

double composition_count(int total, int parts) {
    // C(total - 1, parts - 1), bailing out well above the guard threshold.
    double count = 1.0;
    for (int i = 1; i < parts; ++i) {
        count *= static_cast<double>(total - i) / static_cast<double>(i);
        if (count > 1e12) return count;
    }
    return count;
}

}  // namespace

DecodeResult brute_force_align(const ProbMatrix& probs, const Transcript& transcript,
                               const LengthModel& model) {
    check_alignment_inputs(probs, transcript, model);
    if (model.family != LengthFamily::poisson) {
        throw error(errc::unsupported, "exact inference supports only the poisson length family");
    }
    const int n_seg = static_cast<int>(transcript.size());
    if (composition_count(probs.num_frames, n_seg) > 1e6) {
        throw error(errc::guard, "instance too large for exhaustive enumeration");
    }

    const auto t_begin = std::chrono::steady_clock::now();
    BruteState st;
    st.probs = &probs;
    st.transcript = &transcript;
    st.model = &model;
    st.obs_prefix.resize(n_seg);
    for (int n = 0; n < n_seg; ++n) {
        st.obs_prefix[n].assign(static_cast<std::size_t>(probs.num_frames) + 1, 0.0);
        for (int t = 0; t < probs.num_frames; ++t) {
            st.obs_prefix[n][t + 1] = st.obs_prefix[n][t] + std::log(probs.at(t, transcript[n]));
        }
    }
    st.lengths.assign(n_seg, 0);
    brute_recurse(st, 0, 0, 0.0);

    DecodeResult out;
    out.lengths = st.best_lengths;
    out.log_prob = st.best;
    out.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return out;
}

DecodeResult viterbi_with_sampling(const ProbMatrix& probs, const Transcript& transcript,
                                   const LengthModel& model, const ExactConfig& cfg) {
    cfg.validate();
    const int s = cfg.frame_sample_stride;
    if (s == 1) return viterbi_align(probs, transcript, model, cfg);

    check_alignment_inputs(probs, transcript, model);
    const int n_frames = probs.num_frames;
    const int sampled_frames = (n_frames + s - 1) / s;
    if (sampled_frames < static_cast<int>(transcript.size())) {
        throw error(errc::infeasible,
                    "stride " + std::to_string(s) + " leaves fewer sampled frames than segments");
    }

    const auto t_begin = std::chrono::steady_clock::now();

    Matrix sampled(static_cast<std::size_t>(sampled_frames),
                   static_cast<std::size_t>(probs.num_classes));
    for (int i = 0; i < sampled_frames; ++i) {
        const double* src = probs.probs.row(static_cast<std::size_t>(i) * s);
        std::copy(src, src + probs.num_classes, sampled.row(i));
    }
    ProbMatrix sub;
    sub.num_frames = sampled_frames;
    sub.num_classes = probs.num_classes;
    sub.probs = std::move(sampled);
    sub.class_names = probs.class_names;

    LengthModel scaled = model;
    for (double& mean : scaled.expected) mean /= static_cast<double>(s);

    ExactConfig sub_cfg = cfg;
    sub_cfg.frame_sample_stride = 1;
    sub_cfg.max_segment_len = std::max(1, (cfg.max_segment_len + s - 1) / s);

    const DecodeResult coarse = viterbi_align(sub, transcript, scaled, sub_cfg);

    std::vector<double> upscaled(coarse.lengths.size());
    for (std::size_t n = 0; n < coarse.lengths.size(); ++n) {
        upscaled[n] = static_cast<double>(coarse.lengths[n]) * s;
    }

    DecodeResult out;
    out.lengths = round_lengths(upscaled, n_frames);
    out.log_prob = coarse.log_prob;
    out.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return out;
}

std::pair<int, DecodeResult> select_transcript_exact(const ProbMatrix& probs,
                                                     const std::vector<Transcript>& candidates,
                                                     const LengthModel& model,
                                                     const ExactConfig& cfg) {
    if (candidates.empty()) {
        throw error(errc::validation, "candidate transcript list is empty");
    }
    int best = -1;
    DecodeResult best_result;
    std::string failures;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        try {
            DecodeResult result = viterbi_with_sampling(probs, candidates[i], model, cfg);
            if (best < 0 || result.log_prob > best_result.log_prob) {
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

}  // namespace taseg::exact
