#pragma once

#include <functional>
#include <vector>

#include "detkit/sampling/sampler.hpp"

namespace detkit {

struct CascadeContext {
    const GroundTruthInstance* matched_gt = nullptr;  // null when unmatched
    int stage_index = 0;
};

using BoxRefiner = std::function<Box(const Box&, const CascadeContext&)>;

struct CascadeStage {
    int stage_index = 0;
    double assign_iou_threshold = 0.5;
    BoxRefiner refiner;
};

struct CascadeStageOutput {
    std::vector<Box> boxes;               // refined boxes leaving the stage
    std::vector<Proposal> annotated;      // refined boxes re-annotated (needs gts)
    std::vector<TrainingSample> samples;  // labels at the stage threshold (needs gts)
};

// Each stage refines the incoming boxes, re-annotates them against the
// ground truth, and labels them at its own threshold; stage outputs feed the
// next stage. Thresholds must be non-decreasing. An empty stage list leaves
// the input untouched and produces no outputs.
std::vector<CascadeStageOutput> cascade_run(const std::vector<Proposal>& proposals,
                                            const std::vector<CascadeStage>& stages,
                                            const std::vector<GroundTruthInstance>* gts);

BoxRefiner identity_refiner();
BoxRefiner snap_to_gt_refiner();
// Moves every coordinate a fraction beta of the way toward the matched
// ground truth; unmatched boxes pass through.
BoxRefiner fractional_step_refiner(double beta);

}  // namespace detkit
