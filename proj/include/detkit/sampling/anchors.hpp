#pragma once

#include <map>
#include <vector>

#include "detkit/core/detection.hpp"

namespace detkit {

struct Anchor {
    Box box;
    int level = 0;  // pyramid level
    int index = 0;  // unique per image
};

enum class AnchorLabel { positive, background, ignore };

struct AnchorAssignment {
    AnchorLabel label = AnchorLabel::ignore;
    int gt_index = -1;   // valid for positive labels
    bool forced = false; // claimed through the per-GT top-k pass
};

struct AnchorMatchConfig {
    int top_k = 35;            // anchors force-claimed per ground truth
    double positive_iou = 0.7; // standard assignment for the remaining anchors
    double background_iou = 0.3;
};

struct AnchorMatchResult {
    std::map<int, AnchorAssignment> assignments;  // keyed by Anchor::index
    bool top_k_clamped = false;                   // top_k exceeded the anchor count
};

// Every ground truth claims its top_k highest-IoU anchors (zero-overlap
// anchors never qualify). Contended anchors go to the higher IoU, then the
// lower GT index; a ground truth left empty afterwards takes its best
// unclaimed anchor, stealing from a holder of two or more when none is
// free. Unclaimed anchors fall back to threshold assignment.
AnchorMatchResult forced_anchor_match(const std::vector<Anchor>& anchors,
                                      const std::vector<GroundTruthInstance>& gts,
                                      const AnchorMatchConfig& cfg);

}  // namespace detkit
