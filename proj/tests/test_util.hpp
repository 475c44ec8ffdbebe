#pragma once

#include <random>
#include <vector>

#include "taseg/core.hpp"
#include "taseg/types.hpp"

namespace testutil {

// One-hot probabilities for a ground-truth segmentation; the probability
// floor keeps every entry positive.
inline taseg::ProbMatrix one_hot(const taseg::Segmentation& gt, int num_classes) {
    taseg::Matrix raw(gt.size(), static_cast<std::size_t>(num_classes));
    for (std::size_t t = 0; t < gt.size(); ++t) raw.at(t, static_cast<std::size_t>(gt[t])) = 1.0;
    return taseg::ProbMatrix::from_rows(std::move(raw));
}

// One-hot plus a deterministic asymmetric perturbation, so equally scored
// alignments cannot arise from symmetry.
inline taseg::ProbMatrix perturbed_one_hot(const taseg::Segmentation& gt, int num_classes,
                                           double weight) {
    taseg::Matrix raw(gt.size(), static_cast<std::size_t>(num_classes));
    for (std::size_t t = 0; t < gt.size(); ++t) {
        double sum = 0.0;
        for (int c = 0; c < num_classes; ++c) {
            const double bump = weight * (((t * 31 + static_cast<std::size_t>(c) * 17) % 7) + 1) / 7.0;
            const double p = (static_cast<int>(gt[t]) == c ? 1.0 : 0.0) + bump;
            raw.at(t, static_cast<std::size_t>(c)) = p;
            sum += p;
        }
        for (int c = 0; c < num_classes; ++c) raw.at(t, static_cast<std::size_t>(c)) /= sum;
    }
    return taseg::ProbMatrix::from_rows(std::move(raw));
}

inline taseg::ProbMatrix random_probs(int num_frames, int num_classes, std::mt19937& rng) {
    std::uniform_real_distribution<double> unit(0.01, 1.0);
    taseg::Matrix raw(static_cast<std::size_t>(num_frames), static_cast<std::size_t>(num_classes));
    for (int t = 0; t < num_frames; ++t) {
        double sum = 0.0;
        for (int c = 0; c < num_classes; ++c) {
            const double p = unit(rng);
            raw.at(t, c) = p;
            sum += p;
        }
        for (int c = 0; c < num_classes; ++c) raw.at(t, c) /= sum;
    }
    return taseg::ProbMatrix::from_rows(std::move(raw));
}

inline taseg::LengthModel poisson_model(std::vector<double> expected) {
    taseg::LengthModel model;
    model.family = taseg::LengthFamily::poisson;
    model.scale.assign(expected.size(), 1.0);
    model.expected = std::move(expected);
    return model;
}

inline taseg::Transcript random_transcript(int n_seg, int num_classes, std::mt19937& rng) {
    taseg::Transcript transcript(n_seg);
    for (int n = 0; n < n_seg; ++n) {
        transcript[n] = static_cast<int>(rng() % static_cast<unsigned>(num_classes));
    }
    return transcript;
}

}  // namespace testutil
