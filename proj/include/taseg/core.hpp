#pragma once

#include <utility>

#include "taseg/types.hpp"

namespace taseg {

void validate_transcript(const Transcript& transcript, int num_classes);

// Sum of an integral length configuration; validates positivity.
int total_length(const std::vector<int>& lengths);

// Label of frame t under the segment-wise representation. Segment n covers
// frames [b_n, b_n + len_n) with b_n the cumulative sum of the earlier
// lengths, so a boundary frame belongs to the segment that starts there.
int alpha(int t, const Transcript& transcript, const std::vector<int>& lengths);

Segmentation to_framewise(const Transcript& transcript, const std::vector<int>& lengths);

// Run-length encoding; adjacent equal labels merge into one segment.
std::pair<Transcript, std::vector<int>> to_segmentwise(const Segmentation& seg);

// Largest-remainder apportionment of total_frames proportional to
// real_lengths. Remainder ties go to the earlier segment. Every output
// length is >= 1 and the sum is exactly total_frames.
std::vector<int> round_lengths(const std::vector<double>& real_lengths, int total_frames);

}  // namespace taseg
