#pragma once

#include <utility>
#include <vector>

#include "taseg/types.hpp"

namespace taseg::exact {

struct ExactConfig {
    int max_segment_len = 2000;   // cap L on any hypothesized segment
    int frame_sample_stride = 1;  // decode every s-th frame, 1 = no sampling
    int beam_width = 0;           // keep this many length hypotheses per segment, 0 = dense

    void validate() const;
};

// log P(length | class) under a Poisson with the given mean; length >= 1.
double poisson_log_pmf(int length, double mean);

// Dynamic program over (frame, running segment length, segment index):
// either the current segment grows by one frame, or a new segment starts
// and the finished one pays its length prior. The last segment's prior is
// applied when the final frame is scored. Backtracking the maximizing
// previous-segment lengths recovers the alignment.
DecodeResult viterbi_align(const ProbMatrix& probs, const Transcript& transcript,
                           const LengthModel& model, const ExactConfig& cfg);

// Enumerates every composition of the video length into one segment per
// transcript entry and scores it directly. Guarded to at most 10^6
// compositions; intended as the oracle for the dynamic program.
DecodeResult brute_force_align(const ProbMatrix& probs, const Transcript& transcript,
                               const LengthModel& model);

// Decode on every s-th frame with the expected lengths scaled by 1/s,
// then scale the result back and repair the sum with round_lengths.
DecodeResult viterbi_with_sampling(const ProbMatrix& probs, const Transcript& transcript,
                                   const LengthModel& model, const ExactConfig& cfg);

// Best alignment log-probability across candidates; ties go to the lowest
// index. Fails only if every candidate fails.
std::pair<int, DecodeResult> select_transcript_exact(const ProbMatrix& probs,
                                                     const std::vector<Transcript>& candidates,
                                                     const LengthModel& model,
                                                     const ExactConfig& cfg);

}  // namespace taseg::exact
