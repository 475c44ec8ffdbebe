#include <chrono>
#include <cmath>
#include <random>

#include "doctest.h"
#include "taseg/core.hpp"
#include "taseg/exact.hpp"
#include "test_util.hpp"

using namespace taseg;
using testutil::one_hot;
using testutil::perturbed_one_hot;
using testutil::poisson_model;
using testutil::random_probs;

namespace {

constexpr int A = 0;
constexpr int B = 1;

void check_matches_brute_force(const ProbMatrix& probs, const Transcript& transcript,
                               const LengthModel& model) {
    exact::ExactConfig cfg;
    cfg.max_segment_len = probs.num_frames;  // cap never binds
    const DecodeResult dp = exact::viterbi_align(probs, transcript, model, cfg);
    const DecodeResult brute = exact::brute_force_align(probs, transcript, model);
    CHECK(dp.lengths == brute.lengths);
    CHECK(dp.log_prob == doctest::Approx(brute.log_prob).epsilon(1e-12));
}

}  // namespace

TEST_CASE("brute force enumerates compositions") {
    const LengthModel model = poisson_model({2.0, 2.0});

    const DecodeResult single = exact::brute_force_align(one_hot({A, A, A}, 2), {A}, model);
    CHECK(single.lengths == std::vector<int>{3});

    // T=4, two segments: splits (1,3), (2,2), (3,1)
    Matrix raw(4, 2);
    const double pa[4] = {0.9, 0.9, 0.2, 0.1};
    for (int t = 0; t < 4; ++t) {
        raw.at(t, 0) = pa[t];
        raw.at(t, 1) = 1.0 - pa[t];
    }
    const ProbMatrix probs = ProbMatrix::from_rows(raw);
    const DecodeResult brute = exact::brute_force_align(probs, {A, B}, model);
    CHECK(brute.lengths == std::vector<int>{2, 2});
    CHECK(brute.log_prob == doctest::Approx(-3.152930737167798).epsilon(1e-9));

    std::mt19937 rng(1);
    CHECK_THROWS_AS(
        static_cast<void>(exact::brute_force_align(random_probs(3, 2, rng), {A, B, A, B}, model)),
        error);  // 4 segments in 3 frames
}

TEST_CASE("brute force is guarded against huge instances") {
    std::mt19937 rng(2);
    const ProbMatrix probs = random_probs(500, 2, rng);
    const Transcript transcript{A, B, A, B, A};
    CHECK_THROWS_AS(
        static_cast<void>(exact::brute_force_align(probs, transcript, poisson_model({5, 5}))),
        error);
}

TEST_CASE("viterbi recovers a noiseless alignment") {
    const ProbMatrix probs = one_hot({A, A, B}, 2);
    exact::ExactConfig cfg;
    const DecodeResult result = exact::viterbi_align(probs, {A, B}, poisson_model({2.0, 1.0}), cfg);
    CHECK(result.lengths == std::vector<int>{2, 1});
    // the observation part is the total minus the two length priors
    const double obs = result.log_prob - exact::poisson_log_pmf(2, 2.0) -
                       exact::poisson_log_pmf(1, 1.0);
    CHECK(obs == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(std::isfinite(result.log_prob));
}

TEST_CASE("viterbi picks the best split on a noisy video") {
    Matrix raw(4, 2);
    const double pa[4] = {0.9, 0.9, 0.2, 0.1};
    for (int t = 0; t < 4; ++t) {
        raw.at(t, 0) = pa[t];
        raw.at(t, 1) = 1.0 - pa[t];
    }
    const ProbMatrix probs = ProbMatrix::from_rows(raw);
    exact::ExactConfig cfg;
    const DecodeResult result = exact::viterbi_align(probs, {A, B}, poisson_model({2.0, 2.0}), cfg);
    CHECK(result.lengths == std::vector<int>{2, 2});
    CHECK(result.log_prob == doctest::Approx(-3.152930737167798).epsilon(1e-9));
}

TEST_CASE("viterbi equals brute force on an exhaustive small grid") {
    // Adjacent equal labels make split points non-identifiable (every
    // composition of the merged run scores the same), so transcripts here
    // follow the run-length convention of having none.
    for (int n_frames = 1; n_frames <= 12; ++n_frames) {
        for (int n_seg = 1; n_seg <= std::min(3, n_frames); ++n_seg) {
            for (int n_classes = 1; n_classes <= 3; ++n_classes) {
                if (n_classes == 1 && n_seg > 1) continue;
                std::vector<Transcript> transcripts;
                Transcript cycled(n_seg);
                for (int n = 0; n < n_seg; ++n) cycled[n] = n % n_classes;
                transcripts.push_back(cycled);
                if (n_classes >= 2) {
                    Transcript zigzag(n_seg);  // non-adjacent repeats
                    for (int n = 0; n < n_seg; ++n) zigzag[n] = n % 2;
                    transcripts.push_back(zigzag);
                }
                for (const Transcript& transcript : transcripts) {
                    std::vector<int> lengths(n_seg, n_frames / n_seg);
                    lengths[0] += n_frames - (n_frames / n_seg) * n_seg;
                    const Segmentation gt = to_framewise(transcript, lengths);
                    const ProbMatrix probs = perturbed_one_hot(gt, n_classes, 0.3);

                    std::vector<double> expected(n_classes, 1.5);
                    for (int c = 0; c < n_classes; ++c) expected[c] += 0.7 * c;
                    check_matches_brute_force(probs, transcript, poisson_model(expected));
                }
            }
        }
    }
}

TEST_CASE("viterbi equals brute force on random instances") {
    std::mt19937 rng(42);
    for (int it = 0; it < 200; ++it) {
        const int n_classes = 2 + static_cast<int>(rng() % 2);
        const int n_seg = 1 + static_cast<int>(rng() % 3);
        const int n_frames = n_seg + static_cast<int>(rng() % (13 - n_seg));
        const ProbMatrix probs = random_probs(n_frames, n_classes, rng);
        Transcript transcript(n_seg);
        for (int n = 0; n < n_seg; ++n) {
            transcript[n] = static_cast<int>(rng() % static_cast<unsigned>(n_classes));
            if (n > 0 && transcript[n] == transcript[n - 1]) {
                transcript[n] = (transcript[n] + 1) % n_classes;
            }
        }
        std::vector<double> expected(n_classes);
        std::uniform_real_distribution<double> mean(0.5, 6.0);
        for (auto& m : expected) m = mean(rng);
        check_matches_brute_force(probs, transcript, poisson_model(expected));
    }
}

TEST_CASE("raising the segment cap never lowers the optimum") {
    std::mt19937 rng(3);
    const int n_frames = 20;
    const ProbMatrix probs = random_probs(n_frames, 3, rng);
    const Transcript transcript{0, 1, 2};
    const LengthModel model = poisson_model({6.0, 7.0, 8.0});
    double last = -std::numeric_limits<double>::infinity();
    for (int cap = 7; cap <= n_frames; ++cap) {
        exact::ExactConfig cfg;
        cfg.max_segment_len = cap;
        const DecodeResult result = exact::viterbi_align(probs, transcript, model, cfg);
        CHECK(result.log_prob >= last - 1e-12);
        last = result.log_prob;
    }
    exact::ExactConfig uncapped;
    uncapped.max_segment_len = n_frames;
    CHECK(exact::viterbi_align(probs, transcript, model, uncapped).log_prob ==
          doctest::Approx(exact::brute_force_align(probs, transcript, model).log_prob));
}

TEST_CASE("infeasible and unsupported decode requests fail loudly") {
    const ProbMatrix probs = one_hot({A, A, B}, 2);
    exact::ExactConfig cfg;
    CHECK_THROWS_AS(
        static_cast<void>(exact::viterbi_align(probs, {A, B, A, B}, poisson_model({1, 1}), cfg)),
        error);

    exact::ExactConfig tight;
    tight.max_segment_len = 1;
    CHECK_THROWS_AS(
        static_cast<void>(exact::viterbi_align(probs, {A, B}, poisson_model({1, 1}), tight)),
        error);  // 3 frames, two segments of at most 1 frame

    LengthModel laplace = poisson_model({2, 2});
    laplace.family = LengthFamily::laplace;
    CHECK_THROWS_AS(static_cast<void>(exact::viterbi_align(probs, {A, B}, laplace, cfg)), error);
}

TEST_CASE("a wide beam is exact and a narrow beam is admissible") {
    std::mt19937 rng(9);
    for (int it = 0; it < 20; ++it) {
        const int n_frames = 10 + static_cast<int>(rng() % 8);
        const ProbMatrix probs = random_probs(n_frames, 2, rng);
        const Transcript transcript{A, B, A};
        const LengthModel model = poisson_model({4.0, 5.0});

        exact::ExactConfig dense;
        dense.max_segment_len = n_frames;
        const DecodeResult exact_result = exact::viterbi_align(probs, transcript, model, dense);

        exact::ExactConfig wide = dense;
        wide.beam_width = n_frames;
        const DecodeResult wide_result = exact::viterbi_align(probs, transcript, model, wide);
        CHECK(wide_result.lengths == exact_result.lengths);
        CHECK(wide_result.log_prob == doctest::Approx(exact_result.log_prob));

        exact::ExactConfig narrow = dense;
        narrow.beam_width = 2;
        const DecodeResult narrow_result = exact::viterbi_align(probs, transcript, model, narrow);
        CHECK(narrow_result.log_prob <= exact_result.log_prob + 1e-12);
        CHECK(total_length(narrow_result.lengths) == n_frames);
    }
}

TEST_CASE("stride one sampling is the identity") {
    std::mt19937 rng(4);
    const ProbMatrix probs = random_probs(24, 3, rng);
    const Transcript transcript{0, 1, 2};
    const LengthModel model = poisson_model({8, 8, 8});
    exact::ExactConfig cfg;
    const DecodeResult plain = exact::viterbi_align(probs, transcript, model, cfg);
    const DecodeResult sampled = exact::viterbi_with_sampling(probs, transcript, model, cfg);
    CHECK(plain.lengths == sampled.lengths);
    CHECK(plain.log_prob == doctest::Approx(sampled.log_prob));
}

TEST_CASE("stride two recovers even-length noiseless segments") {
    // 6 frames, segments of lengths 2 and 4; sampled frames 0, 2, 4
    const Segmentation gt = to_framewise({A, B}, {2, 4});
    const ProbMatrix probs = one_hot(gt, 2);
    exact::ExactConfig cfg;
    cfg.frame_sample_stride = 2;
    const DecodeResult result =
        exact::viterbi_with_sampling(probs, {A, B}, poisson_model({2.0, 4.0}), cfg);
    CHECK(result.lengths == std::vector<int>{2, 4});
}

TEST_CASE("oversampling fails when segments outnumber samples") {
    const ProbMatrix probs = one_hot({A, B, A, B}, 2);
    exact::ExactConfig cfg;
    cfg.frame_sample_stride = 2;
    CHECK_THROWS_AS(static_cast<void>(exact::viterbi_with_sampling(probs, {A, B, A},
                                                                   poisson_model({1, 1}), cfg)),
                    error);
}

TEST_CASE("sampling trades accuracy for wall-clock time") {
    std::mt19937 rng(6);
    const int n_frames = 4000;
    const ProbMatrix probs = random_probs(n_frames, 4, rng);
    const Transcript transcript{0, 1, 2, 3, 0};
    const LengthModel model = poisson_model({800, 800, 800, 800});
    exact::ExactConfig cfg;
    cfg.max_segment_len = 2000;
    const DecodeResult full = exact::viterbi_align(probs, transcript, model, cfg);
    exact::ExactConfig strided = cfg;
    strided.frame_sample_stride = 4;
    const DecodeResult coarse = exact::viterbi_with_sampling(probs, transcript, model, strided);
    CHECK(total_length(coarse.lengths) == n_frames);
    CHECK(coarse.elapsed_seconds < full.elapsed_seconds);
}

TEST_CASE("transcript selection keeps the most likely candidate") {
    const ProbMatrix all_a = one_hot({A, A, A}, 2);
    const LengthModel model = poisson_model({2.0, 2.0});
    exact::ExactConfig cfg;

    const auto [first, unused] = exact::select_transcript_exact(all_a, {{A}, {B}}, model, cfg);
    CHECK(first == 0);

    const ProbMatrix aab = one_hot({A, A, B}, 2);
    const auto [second, result] = exact::select_transcript_exact(aab, {{A, B}, {B, A}}, model, cfg);
    CHECK(second == 0);
    CHECK(result.lengths == std::vector<int>{2, 1});
    // both candidates scored by brute force agree with the selection
    const double score_ab = exact::brute_force_align(aab, {A, B}, model).log_prob;
    const double score_ba = exact::brute_force_align(aab, {B, A}, model).log_prob;
    CHECK(score_ab > score_ba);

    const auto [single, ignored] = exact::select_transcript_exact(aab, {{A, B}}, model, cfg);
    CHECK(single == 0);

    CHECK_THROWS_WITH_AS(
        static_cast<void>(exact::select_transcript_exact(aab, {{A, B, A, B}, {B, A, B, A}}, model, cfg)),
        doctest::Contains("candidate 1"), error);
}

TEST_CASE("decode time grows linearly in the video length") {
    std::mt19937 rng(8);
    // keep the cap small next to every video length, so the ramp-in
    // region where running lengths are still shorter than the cap stays
    // a negligible share of the work
    const int n_seg = 70;
    const int cap = 250;
    const Transcript transcript = [&] {
        Transcript t(n_seg);
        for (int n = 0; n < n_seg; ++n) t[n] = n % 4;
        return t;
    }();

    std::vector<double> log_t, log_time;
    for (const int n_frames : {2000, 4000, 8000, 16000}) {
        const ProbMatrix probs = random_probs(n_frames, 4, rng);
        const LengthModel model = poisson_model(std::vector<double>(4, n_frames / double(n_seg)));
        exact::ExactConfig cfg;
        cfg.max_segment_len = cap;
        double best = std::numeric_limits<double>::max();
        for (int rep = 0; rep < 3; ++rep) {
            const DecodeResult result = exact::viterbi_align(probs, transcript, model, cfg);
            best = std::min(best, result.elapsed_seconds);
        }
        log_t.push_back(std::log(static_cast<double>(n_frames)));
        log_time.push_back(std::log(best));
    }
    // least-squares slope over the four sizes
    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < log_t.size(); ++i) {
        mean_x += log_t[i];
        mean_y += log_time[i];
    }
    mean_x /= log_t.size();
    mean_y /= log_time.size();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < log_t.size(); ++i) {
        num += (log_t[i] - mean_x) * (log_time[i] - mean_y);
        den += (log_t[i] - mean_x) * (log_t[i] - mean_x);
    }
    const double slope = num / den;
    CHECK(slope > 0.8);
    CHECK(slope < 1.2);
}
