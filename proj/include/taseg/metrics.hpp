#pragma once

#include <string>
#include <utility>
#include <vector>

#include "taseg/types.hpp"

namespace taseg::metrics {

struct MetricReport {
    double mof = 0.0;
    double mof_bg = 0.0;
    double iou = 0.0;
    double iod = 0.0;
    double edit = 0.0;
    double f1_10 = 0.0;
    double f1_25 = 0.0;
    double f1_50 = 0.0;

    // Fixed key names: mof, mof_bg, iou, iod, edit, f1_10, f1_25, f1_50.
    std::string to_json() const;
};

// Fraction of frames whose predicted label matches the ground truth.
double mof(const Segmentation& pred, const Segmentation& gt);

// Same, restricted to frames whose ground-truth label is not background.
// Defined as 1 when every ground-truth frame is background.
double mof_bg(const Segmentation& pred, const Segmentation& gt,
              const std::vector<int>& background);

// Per ground-truth segment, match the same-label predicted segment with
// the largest intersection; average intersection-over-union and
// intersection-over-detection over non-background ground-truth segments.
std::pair<double, double> iou_iod(const Segmentation& pred, const Segmentation& gt,
                                  const std::vector<int>& background);

// 1 - normalized Levenshtein distance between the run-length transcripts,
// normalized by the longer transcript.
double edit_score(const Segmentation& pred, const Segmentation& gt);

// Segmental F1: a predicted segment is a true positive when it is greedily
// matched to an unmatched same-label ground-truth segment with
// intersection-over-union >= threshold. Background segments are excluded
// on both sides.
double f1_at(const Segmentation& pred, const Segmentation& gt, double threshold,
             const std::vector<int>& background);

MetricReport evaluate(const Segmentation& pred, const Segmentation& gt,
                      const std::vector<int>& background);

}  // namespace taseg::metrics
