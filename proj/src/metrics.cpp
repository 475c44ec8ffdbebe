#include "taseg/metrics.hpp"

#include <algorithm>
#include <sstream>

#include "taseg/core.hpp"

#include "json.hpp"

namespace taseg::metrics {

namespace {

struct Segment {
    int label = 0;
    int start = 0;
    int len = 0;
    int end() const { return start + len; }
};

std::vector<Segment> segments_of(const Segmentation& seg) {
    const auto [labels, lengths] = to_segmentwise(seg);
    std::vector<Segment> out;
    out.reserve(labels.size());
    int start = 0;
    for (std::size_t n = 0; n < labels.size(); ++n) {
        out.push_back({labels[n], start, lengths[n]});
        start += lengths[n];
    }
    return out;
}

bool is_background(int label, const std::vector<int>& background) {
    return std::find(background.begin(), background.end(), label) != background.end();
}

void check_same_length(const Segmentation& pred, const Segmentation& gt) {
    if (pred.empty() || gt.empty()) {
        throw error(errc::validation, "segmentation is empty");
    }
    if (pred.size() != gt.size()) {
        throw error(errc::validation,
                    "prediction has " + std::to_string(pred.size()) + " frames, ground truth has " +
                        std::to_string(gt.size()));
    }
}

int intersection(const Segment& a, const Segment& b) {
    return std::max(0, std::min(a.end(), b.end()) - std::max(a.start, b.start));
}

double segment_iou(const Segment& a, const Segment& b) {
    const int inter = intersection(a, b);
    const int uni = a.len + b.len - inter;
    return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

}  // namespace

double mof(const Segmentation& pred, const Segmentation& gt) {
    check_same_length(pred, gt);
    std::size_t hits = 0;
    for (std::size_t t = 0; t < gt.size(); ++t) {
        if (pred[t] == gt[t]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(gt.size());
}

double mof_bg(const Segmentation& pred, const Segmentation& gt,
              const std::vector<int>& background) {
    check_same_length(pred, gt);
    std::size_t hits = 0;
    std::size_t considered = 0;
    for (std::size_t t = 0; t < gt.size(); ++t) {
        if (is_background(gt[t], background)) continue;
        ++considered;
        if (pred[t] == gt[t]) ++hits;
    }
    if (considered == 0) return 1.0;
    return static_cast<double>(hits) / static_cast<double>(considered);
}

std::pair<double, double> iou_iod(const Segmentation& pred, const Segmentation& gt,
                                  const std::vector<int>& background) {
    check_same_length(pred, gt);
    const std::vector<Segment> gt_segs = segments_of(gt);
    const std::vector<Segment> pred_segs = segments_of(pred);

    double iou_sum = 0.0;
    double iod_sum = 0.0;
    int considered = 0;
    for (const Segment& g : gt_segs) {
        if (is_background(g.label, background)) continue;
        ++considered;
        const Segment* matched = nullptr;
        int best_inter = 0;
        for (const Segment& p : pred_segs) {
            if (p.label != g.label) continue;
            const int inter = intersection(g, p);
            if (inter > best_inter) {
                best_inter = inter;
                matched = &p;
            }
        }
        if (matched == nullptr) continue;  // contributes zero to both
        const int uni = g.len + matched->len - best_inter;
        iou_sum += static_cast<double>(best_inter) / uni;
        iod_sum += static_cast<double>(best_inter) / matched->len;
    }
    if (considered == 0) return {1.0, 1.0};
    return {iou_sum / considered, iod_sum / considered};
}

double edit_score(const Segmentation& pred, const Segmentation& gt) {
    if (pred.empty() || gt.empty()) {
        throw error(errc::validation, "segmentation is empty");
    }
    const Transcript a = to_segmentwise(pred).first;
    const Transcript b = to_segmentwise(gt).first;
    const std::size_t m = a.size();
    const std::size_t n = b.size();

    std::vector<int> prev(n + 1), cur(n + 1);
    for (std::size_t j = 0; j <= n; ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= m; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= n; ++j) {
            const int subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
        }
        std::swap(prev, cur);
    }
    const double dist = prev[n];
    return 1.0 - dist / static_cast<double>(std::max(m, n));
}

double f1_at(const Segmentation& pred, const Segmentation& gt, double threshold,
             const std::vector<int>& background) {
    check_same_length(pred, gt);
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw error(errc::validation, "overlap threshold must be in (0, 1)");
    }
    std::vector<Segment> gt_segs;
    for (const Segment& g : segments_of(gt)) {
        if (!is_background(g.label, background)) gt_segs.push_back(g);
    }
    std::vector<Segment> pred_segs;
    for (const Segment& p : segments_of(pred)) {
        if (!is_background(p.label, background)) pred_segs.push_back(p);
    }

    std::vector<bool> used(gt_segs.size(), false);
    int tp = 0;
    int fp = 0;
    for (const Segment& p : pred_segs) {
        double best_iou = 0.0;
        int best = -1;
        for (std::size_t j = 0; j < gt_segs.size(); ++j) {
            if (gt_segs[j].label != p.label) continue;
            const double iou = segment_iou(p, gt_segs[j]);
            if (iou > best_iou) {
                best_iou = iou;
                best = static_cast<int>(j);
            }
        }
        if (best >= 0 && best_iou >= threshold && !used[best]) {
            used[best] = true;
            ++tp;
        } else {
            ++fp;
        }
    }
    const int fn = static_cast<int>(gt_segs.size()) - tp;
    if (tp + fp + fn == 0) return 1.0;
    return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

MetricReport evaluate(const Segmentation& pred, const Segmentation& gt,
                      const std::vector<int>& background) {
    MetricReport report;
    report.mof = mof(pred, gt);
    report.mof_bg = mof_bg(pred, gt, background);
    std::tie(report.iou, report.iod) = iou_iod(pred, gt, background);
    report.edit = edit_score(pred, gt);
    report.f1_10 = f1_at(pred, gt, 0.10, background);
    report.f1_25 = f1_at(pred, gt, 0.25, background);
    report.f1_50 = f1_at(pred, gt, 0.50, background);
    return report;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["mof"] = mof;
    j["mof_bg"] = mof_bg;
    j["iou"] = iou;
    j["iod"] = iod;
    j["edit"] = edit;
    j["f1_10"] = f1_10;
    j["f1_25"] = f1_25;
    j["f1_50"] = f1_50;
    return j.dump(2);
}

}  // namespace taseg::metrics
