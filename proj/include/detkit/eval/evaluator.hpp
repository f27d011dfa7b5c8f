#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "detkit/core/detection.hpp"

namespace detkit {

enum class EvalMode { bbox, segm };

struct AreaRange {
    std::string name;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
};

struct EvalConfig {
    std::vector<double> iou_thresholds;  // strictly increasing, in (0, 1]
    int recall_points = 101;
    std::vector<AreaRange> area_ranges;  // first entry is the unrestricted range
    int max_dets = 100;                  // per image and class
    EvalMode mode = EvalMode::bbox;

    static EvalConfig defaults(EvalMode mode = EvalMode::bbox);
};

void validate_eval_config(const EvalConfig& cfg);

struct EvalSummary {
    std::optional<double> ap, ap50, ap75, ap_s, ap_m, ap_l;
};

struct EvalResult {
    EvalSummary summary;
    std::map<int, EvalSummary> per_class;
};

// Greedy matching of score-sorted detections to same-class ground truth:
// each detection takes the highest-IoU unmatched non-crowd instance at or
// above the threshold (ties to the lower GT index); crowd instances absorb
// otherwise-unmatched detections without consuming themselves. Throws when
// the detections are not sorted by descending score.
struct GreedyMatch {
    std::vector<int> det_match;             // ground-truth index or -1
    std::vector<std::uint8_t> det_ignored;  // absorbed by a crowd region
    std::vector<std::uint8_t> gt_matched;
};
GreedyMatch match_greedy(const std::vector<Detection>& dets_sorted,
                         const std::vector<GroundTruthInstance>& gts,
                         double iou_threshold, EvalMode mode);

// 101-point interpolated average precision over pooled matches; entries are
// ordered by score inside (stable, so callers control tie order). Returns
// nothing when n_gt is zero.
struct ScoredMatch {
    double score = 0.0;
    bool tp = false;
};
std::optional<double> average_precision(std::vector<ScoredMatch> entries, std::int64_t n_gt,
                                        int recall_points = 101);

// Full protocol: per-class greedy matching at every threshold and area
// range, interpolated AP, class-averaged summary. Inputs are canonicalised
// internally, so shuffled inputs produce identical results.
EvalResult evaluate(const std::vector<ImageDetections>& results, const GroundTruthSet& gts,
                    const EvalConfig& cfg);

}  // namespace detkit
