#include <random>

#include "doctest.h"
#include "taseg/core.hpp"

using namespace taseg;

namespace {
constexpr int A = 0;
constexpr int B = 1;
}  // namespace

TEST_CASE("alpha maps frames to segment labels") {
    CHECK(alpha(0, {A, B}, {3, 2}) == A);
    CHECK(alpha(3, {A, B}, {3, 2}) == B);  // boundary frame starts the next segment
    // cumulative starts are 0, 2, 4
    CHECK(alpha(4, {A, B, A}, {2, 2, 2}) == A);

    CHECK_THROWS_AS(alpha(5, {A, B}, {3, 2}), error);
    CHECK_THROWS_AS(alpha(-1, {A, B}, {3, 2}), error);
    CHECK_THROWS_AS(alpha(0, {A, B}, {3, 0}), error);
    CHECK_THROWS_AS(alpha(0, {A, B}, {3}), error);
}

TEST_CASE("to_framewise expands segments") {
    CHECK(to_framewise({A, B}, {2, 2}) == Segmentation{A, A, B, B});
    CHECK(to_framewise({A}, {5}) == Segmentation{A, A, A, A, A});
    CHECK(to_framewise({A, B, A}, {1, 2, 1}) == Segmentation{A, B, B, A});
    CHECK_THROWS_AS(to_framewise({A}, {0}), error);
}

TEST_CASE("to_segmentwise run-length encodes") {
    auto [labels, lengths] = to_segmentwise({A, A, B, B});
    CHECK(labels == Transcript{A, B});
    CHECK(lengths == std::vector<int>{2, 2});

    auto [l1, n1] = to_segmentwise({A});
    CHECK(l1 == Transcript{A});
    CHECK(n1 == std::vector<int>{1});

    auto [l2, n2] = to_segmentwise({A, B, B, A});
    CHECK(l2 == Transcript{A, B, A});
    CHECK(n2 == std::vector<int>{1, 2, 1});

    CHECK_THROWS_AS(to_segmentwise({}), error);
}

TEST_CASE("round_lengths apportions by largest remainder") {
    CHECK(round_lengths({2.5, 2.5}, 5) == std::vector<int>{3, 2});  // tie goes to the earlier one
    CHECK(round_lengths({1.0, 1.0, 1.0}, 3) == std::vector<int>{1, 1, 1});
    CHECK(round_lengths({10.2, 4.9, 4.9}, 20) == std::vector<int>{10, 5, 5});
    // tiny segments still get one frame
    CHECK(round_lengths({0.01, 10.0}, 5) == std::vector<int>{1, 4});

    CHECK_THROWS_AS(round_lengths({1.0, 1.0, 1.0}, 2), error);
    CHECK_THROWS_AS(round_lengths({1.0, -1.0}, 5), error);
    CHECK_THROWS_AS(round_lengths({}, 5), error);
}

TEST_CASE("framewise and segmentwise representations round-trip") {
    std::mt19937 rng(7);
    for (int it = 0; it < 200; ++it) {
        const int n_seg = 1 + static_cast<int>(rng() % 6);
        Transcript transcript(n_seg);
        std::vector<int> lengths(n_seg);
        for (int n = 0; n < n_seg; ++n) {
            // no adjacent repeats, so the run-length encoding is exact
            transcript[n] = n == 0 ? static_cast<int>(rng() % 4)
                                   : (transcript[n - 1] + 1 + static_cast<int>(rng() % 3)) % 4;
            if (n > 0 && transcript[n] == transcript[n - 1]) transcript[n] = (transcript[n] + 1) % 4;
            lengths[n] = 1 + static_cast<int>(rng() % 9);
        }
        const Segmentation frames = to_framewise(transcript, lengths);
        const auto [labels2, lengths2] = to_segmentwise(frames);
        CHECK(labels2 == transcript);
        CHECK(lengths2 == lengths);
        // with repeats allowed, only the frame-wise view is preserved
        Transcript repeated = transcript;
        repeated.push_back(repeated.back());
        std::vector<int> rep_lengths = lengths;
        rep_lengths.push_back(3);
        const Segmentation rep_frames = to_framewise(repeated, rep_lengths);
        const auto [rl, rn] = to_segmentwise(rep_frames);
        CHECK(to_framewise(rl, rn) == rep_frames);
    }
}

TEST_CASE("alpha starts each segment at its boundary frame") {
    std::mt19937 rng(11);
    for (int it = 0; it < 50; ++it) {
        const int n_seg = 1 + static_cast<int>(rng() % 5);
        Transcript transcript(n_seg);
        std::vector<int> lengths(n_seg);
        for (int n = 0; n < n_seg; ++n) {
            transcript[n] = static_cast<int>(rng() % 5);
            lengths[n] = 1 + static_cast<int>(rng() % 7);
        }
        int boundary = 0;
        for (int n = 0; n < n_seg; ++n) {
            CHECK(alpha(boundary, transcript, lengths) == transcript[n]);
            boundary += lengths[n];
        }
    }
}

TEST_CASE("round_lengths keeps the sum and near-order") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> len(0.05, 40.0);
    for (int it = 0; it < 200; ++it) {
        const int n_seg = 1 + static_cast<int>(rng() % 8);
        const int total = n_seg + static_cast<int>(rng() % 300);
        std::vector<double> real(n_seg);
        for (auto& x : real) x = len(rng);
        const std::vector<int> rounded = round_lengths(real, total);
        int sum = 0;
        for (int x : rounded) {
            CHECK(x >= 1);
            sum += x;
        }
        CHECK(sum == total);
        for (int i = 0; i < n_seg; ++i) {
            for (int j = 0; j < n_seg; ++j) {
                if (real[i] < real[j]) CHECK(rounded[i] <= rounded[j] + 1);
            }
        }
    }
}

TEST_CASE("probability rows are validated, floored and renormalized") {
    Matrix raw(2, 2);
    raw.at(0, 0) = 0.9;
    raw.at(0, 1) = 0.1;
    raw.at(1, 0) = 1.0;
    raw.at(1, 1) = 0.0;
    const ProbMatrix pm = ProbMatrix::from_rows(raw);
    CHECK(pm.num_frames == 2);
    CHECK(pm.num_classes == 2);
    CHECK(pm.at(0, 0) == 0.9);  // untouched row
    CHECK(pm.at(1, 1) > 0.0);   // floored
    CHECK(pm.at(1, 0) + pm.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));

    Matrix bad(1, 2);
    bad.at(0, 0) = 0.5;
    bad.at(0, 1) = 0.4;  // sums to 0.9
    CHECK_THROWS_WITH_AS(static_cast<void>(ProbMatrix::from_rows(bad)),
                         doctest::Contains("row 0"), error);

    Matrix negative(1, 2);
    negative.at(0, 0) = 1.2;
    negative.at(0, 1) = -0.2;
    CHECK_THROWS_AS(static_cast<void>(ProbMatrix::from_rows(negative)), error);
}
