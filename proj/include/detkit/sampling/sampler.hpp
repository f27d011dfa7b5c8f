#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "detkit/core/detection.hpp"

namespace detkit {

struct Proposal {
    Box box;
    double objectness = 0.0;
    std::optional<int> best_gt_index;  // absent when no ground truth overlaps
    double best_gt_iou = 0.0;
};

struct SamplerConfig {
    double critical_iou = 0.7;          // positive labelling cutoff
    double relaxed_nms_threshold = 0.8;
    int batch_size_per_image = 512;
    double positive_fraction = 0.25;
    std::uint64_t rng_seed = 0;
    double background_ceiling = 0.3;    // [ceiling, critical) is ignored
    double baseline_nms_threshold = 0.7;
};

void validate_sampler_config(const SamplerConfig& cfg);

enum class SampleLabel { positive, background };

struct TrainingSample {
    Proposal proposal;
    SampleLabel label = SampleLabel::background;
    int class_id = -1;  // matched ground-truth class for positive samples
    std::optional<int> matched_gt_index;
};

// Attach to each box its argmax-IoU ground truth (ties break toward the
// lower GT index). Zero-overlap proposals carry no index.
std::vector<Proposal> annotate_proposals(const std::vector<Box>& boxes,
                                         const std::vector<double>& objectness,
                                         const std::vector<GroundTruthInstance>& gts);

// Relaxed-threshold suppression followed by IoU-driven selection: survivors
// are positive when best_gt_iou >= critical_iou and background below the
// ceiling. Positives are taken in descending overlap order, not objectness
// order; the seeded RNG only breaks exact overlap ties and subsamples the
// background pool.
std::vector<TrainingSample> high_iou_sample(const std::vector<Proposal>& proposals,
                                            const std::vector<GroundTruthInstance>& gts,
                                            const SamplerConfig& cfg);

struct ClassSamplingPlan {
    std::map<int, double> alpha;        // per-class share of proposals above the cut
    std::map<int, int> per_class_quota; // filled by class_aware_sample
};

// alpha[c] = |matched to class c with IoU > iou_cut| / |matched to class c|
// for every class present in the ground truth; classes without matched
// proposals get 0.
ClassSamplingPlan class_aware_plan(const std::vector<Proposal>& proposals,
                                   const std::vector<GroundTruthInstance>& gts,
                                   double iou_cut = 0.5);

// Proportional allocation of `total` slots over alpha with largest-remainder
// rounding; remainder ties go to the lower class id.
std::map<int, int> largest_remainder_quotas(const std::map<int, double>& alpha, int total);

// Fill per-class positive quotas derived from plan.alpha (recorded into
// plan.per_class_quota), capped by availability; the shortfall is filled
// with background proposals drawn by the seeded RNG.
std::vector<TrainingSample> class_aware_sample(const std::vector<Proposal>& proposals,
                                               const std::vector<GroundTruthInstance>& gts,
                                               ClassSamplingPlan& plan,
                                               int total,
                                               std::uint64_t rng_seed,
                                               double iou_cut = 0.5);

}  // namespace detkit
