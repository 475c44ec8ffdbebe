#include "taseg/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace taseg {

const char* errc_name(errc kind) {
    switch (kind) {
        case errc::validation: return "validation";
        case errc::infeasible: return "infeasible";
        case errc::io: return "io";
        case errc::parse: return "parse";
        case errc::unsupported: return "unsupported";
        case errc::guard: return "guard";
        case errc::runtime: return "runtime";
    }
    return "unknown";
}

const char* length_family_name(LengthFamily family) {
    switch (family) {
        case LengthFamily::poisson: return "poisson";
        case LengthFamily::laplace: return "laplace";
        case LengthFamily::gaussian: return "gaussian";
    }
    return "unknown";
}

LengthFamily length_family_from_name(const std::string& name) {
    if (name == "poisson") return LengthFamily::poisson;
    if (name == "laplace") return LengthFamily::laplace;
    if (name == "gaussian") return LengthFamily::gaussian;
    throw error(errc::parse, "unknown length family: " + name);
}

ProbMatrix ProbMatrix::from_rows(Matrix raw, double floor, std::vector<std::string> names) {
    if (raw.rows < 1 || raw.cols < 1) {
        throw error(errc::validation, "probability matrix must have at least one frame and one class");
    }
    if (!(floor > 0.0)) {
        throw error(errc::validation, "probability floor must be positive");
    }
    if (!names.empty() && names.size() != raw.cols) {
        throw error(errc::validation, "class name count does not match class count");
    }
    for (std::size_t t = 0; t < raw.rows; ++t) {
        double* row = raw.row(t);
        double sum = 0.0;
        for (std::size_t c = 0; c < raw.cols; ++c) {
            const double p = row[c];
            if (!std::isfinite(p) || p < 0.0 || p > 1.0 + kRowSumTolerance) {
                throw error(errc::validation,
                            "probability out of range at row " + std::to_string(t) +
                                ", column " + std::to_string(c));
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            throw error(errc::validation,
                        "row " + std::to_string(t) + " sums to " + std::to_string(sum) +
                            ", expected 1 within " + std::to_string(kRowSumTolerance));
        }
        bool floored = false;
        for (std::size_t c = 0; c < raw.cols; ++c) {
            if (row[c] < floor) {
                row[c] = floor;
                floored = true;
            }
        }
        if (floored) {
            double s = 0.0;
            for (std::size_t c = 0; c < raw.cols; ++c) s += row[c];
            for (std::size_t c = 0; c < raw.cols; ++c) row[c] /= s;
        }
    }
    ProbMatrix out;
    out.num_frames = static_cast<int>(raw.rows);
    out.num_classes = static_cast<int>(raw.cols);
    out.probs = std::move(raw);
    if (names.empty()) {
        out.class_names.reserve(out.num_classes);
        for (int c = 0; c < out.num_classes; ++c) out.class_names.push_back("c" + std::to_string(c));
    } else {
        out.class_names = std::move(names);
    }
    return out;
}

void LengthModel::validate() const {
    if (expected.empty()) {
        throw error(errc::validation, "length model has no classes");
    }
    if (scale.size() != expected.size()) {
        throw error(errc::validation, "length model scale count does not match expected count");
    }
    for (std::size_t c = 0; c < expected.size(); ++c) {
        if (!std::isfinite(expected[c]) || expected[c] <= 0.0) {
            throw error(errc::validation,
                        "length model expected length for class " + std::to_string(c) +
                            " must be positive");
        }
        if (!std::isfinite(scale[c]) || scale[c] <= 0.0) {
            throw error(errc::validation,
                        "length model scale for class " + std::to_string(c) + " must be positive");
        }
    }
}

void validate_transcript(const Transcript& transcript, int num_classes) {
    if (transcript.empty()) {
        throw error(errc::validation, "transcript is empty");
    }
    for (std::size_t n = 0; n < transcript.size(); ++n) {
        if (transcript[n] < 0 || transcript[n] >= num_classes) {
            throw error(errc::validation,
                        "transcript label " + std::to_string(transcript[n]) + " at position " +
                            std::to_string(n) + " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

int total_length(const std::vector<int>& lengths) {
    if (lengths.empty()) {
        throw error(errc::validation, "length configuration is empty");
    }
    int total = 0;
    for (std::size_t n = 0; n < lengths.size(); ++n) {
        if (lengths[n] < 1) {
            throw error(errc::validation,
                        "segment " + std::to_string(n) + " has non-positive length");
        }
        total += lengths[n];
    }
    return total;
}

int alpha(int t, const Transcript& transcript, const std::vector<int>& lengths) {
    if (transcript.size() != lengths.size()) {
        throw error(errc::validation, "transcript and length counts differ");
    }
    const int total = total_length(lengths);
    if (t < 0 || t >= total) {
        throw error(errc::validation, "frame index " + std::to_string(t) + " outside video");
    }
    int boundary = 0;
    for (std::size_t n = 0; n < lengths.size(); ++n) {
        boundary += lengths[n];
        if (t < boundary) return transcript[n];
    }
    return transcript.back();  // unreachable, t < total
}

Segmentation to_framewise(const Transcript& transcript, const std::vector<int>& lengths) {
    if (transcript.size() != lengths.size()) {
        throw error(errc::validation, "transcript and length counts differ");
    }
    const int total = total_length(lengths);
    Segmentation out;
    out.reserve(total);
    for (std::size_t n = 0; n < lengths.size(); ++n) {
        out.insert(out.end(), lengths[n], transcript[n]);
    }
    return out;
}

std::pair<Transcript, std::vector<int>> to_segmentwise(const Segmentation& seg) {
    if (seg.empty()) {
        throw error(errc::validation, "segmentation is empty");
    }
    Transcript labels;
    std::vector<int> lengths;
    int run = 1;
    for (std::size_t t = 1; t <= seg.size(); ++t) {
        if (t < seg.size() && seg[t] == seg[t - 1]) {
            ++run;
        } else {
            labels.push_back(seg[t - 1]);
            lengths.push_back(run);
            run = 1;
        }
    }
    return {std::move(labels), std::move(lengths)};
}

std::vector<int> round_lengths(const std::vector<double>& real_lengths, int total_frames) {
    const int n = static_cast<int>(real_lengths.size());
    if (n == 0) {
        throw error(errc::validation, "length configuration is empty");
    }
    if (n > total_frames) {
        throw error(errc::infeasible,
                    std::to_string(n) + " segments cannot fit in " +
                        std::to_string(total_frames) + " frames");
    }
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(real_lengths[i]) || real_lengths[i] <= 0.0) {
            throw error(errc::validation,
                        "segment " + std::to_string(i) + " has non-positive length");
        }
        sum += real_lengths[i];
    }

    std::vector<int> out(n);
    std::vector<double> remainder(n);
    int assigned = 0;
    for (int i = 0; i < n; ++i) {
        const double share = real_lengths[i] * static_cast<double>(total_frames) / sum;
        out[i] = static_cast<int>(std::floor(share));
        remainder[i] = share - out[i];
        assigned += out[i];
    }

    // Hand out the leftover frames to the largest remainders, earlier
    // segments first on ties.
    int leftover = total_frames - assigned;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int k = 0; k < leftover; ++k) {
        ++out[order[k % n]];  // leftover < n in exact arithmetic; modulo guards fp drift
    }

    // Enforce the minimum segment length of one frame, taking frames from
    // the largest segments (earliest largest on ties).
    for (int i = 0; i < n; ++i) {
        while (out[i] < 1) {
            int donor = -1;
            for (int j = 0; j < n; ++j) {
                if (out[j] > 1 && (donor < 0 || out[j] > out[donor])) donor = j;
            }
            if (donor < 0) {
                throw error(errc::infeasible, "cannot keep every segment at least one frame long");
            }
            --out[donor];
            ++out[i];
        }
    }
    return out;
}

}  // namespace taseg
