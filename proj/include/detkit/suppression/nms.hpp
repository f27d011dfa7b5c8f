#pragma once

#include <vector>

#include "detkit/core/detection.hpp"

namespace detkit {

enum class NmsMode { hard, soft_linear, soft_gaussian };

struct NmsConfig {
    double iou_threshold = 0.5;  // in (0, 1]
    NmsMode mode = NmsMode::hard;
    double sigma = 0.5;        // gaussian decay width
    double score_floor = 0.0;  // soft mode drops detections decayed below this
    bool class_agnostic = false;
};

// Throws std::invalid_argument on out-of-range fields.
void validate_nms_config(const NmsConfig& cfg);

// Greedy suppression. Hard mode removes any detection with IoU strictly
// above the threshold against an already kept detection of the same class
// (all classes when class_agnostic). Soft modes decay scores instead.
// Output is ordered by score descending with ties broken by input index.
std::vector<Detection> nms(const std::vector<Detection>& dets, const NmsConfig& cfg);

// Soft suppression only; throws if cfg.mode is hard. Scores of detections
// overlapping a selected detection above the threshold decay by
// (1 - iou) in linear mode or exp(-iou^2 / sigma) in gaussian mode; decayed
// detections below score_floor are dropped. Output keeps decayed scores.
std::vector<Detection> soft_nms(const std::vector<Detection>& dets, const NmsConfig& cfg);

// Hard class-agnostic suppression at a threshold at least as permissive as
// the baseline proposal threshold; throws when relaxed_threshold is lower.
std::vector<Detection> relaxed_nms(const std::vector<Detection>& proposals,
                                   double relaxed_threshold,
                                   double baseline_threshold = 0.7);

// Kernel shared by the detection- and proposal-level paths. Returns indices
// of kept entries in selection order (score desc, input index asc).
// `classes` may be null for class-agnostic suppression.
std::vector<int> hard_nms_indices(const std::vector<Box>& boxes,
                                  const std::vector<double>& scores,
                                  const std::vector<int>* classes,
                                  double iou_threshold);

// Same as hard_nms_indices but also reports, for every input, the kept
// entry that suppressed it (its own index for survivors).
struct NmsClusters {
    std::vector<int> kept;
    std::vector<int> owner;
};
NmsClusters hard_nms_clusters(const std::vector<Box>& boxes,
                              const std::vector<double>& scores,
                              const std::vector<int>* classes,
                              double iou_threshold);

}  // namespace detkit
