#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "detkit/core/detection.hpp"

namespace detkit {

// Box-local probability grid at a square resolution.
struct MaskProbMap {
    int resolution = 0;          // R
    std::vector<double> values;  // R*R entries, values[v * R + u], in [0, 1]
    Box reference_box;
};

struct MaskPrediction {
    MaskProbMap prob_map;
    double predicted_mask_iou = 1.0;  // quality estimate in [0, 1]
};

// Returns no value to signal failure for that proposal; must be
// deterministic per (image_id, box, class).
using MaskPredictor =
    std::function<std::optional<MaskPrediction>(int image_id, const Box& proposal, int class_id)>;

// Produces a residual grid in logit domain at the input resolution.
using ResidualRefiner = std::function<std::vector<double>(const MaskProbMap&)>;

struct TwoPassResult {
    std::vector<Detection> detections;       // boxes/classes/scores untouched, masks attached
    std::vector<double> predicted_mask_iou;  // per detection, 0 on failure
    std::vector<int> failed;                 // indices emitted without a mask
};

// Feed detector boxes to the mask predictor and paste each probability grid
// back onto the canvas (bilinear resample, hard threshold, run-length
// encode). Predictor failures leave the detection mask-less and flagged.
// Pass predictor_thread_safe = false to serialise predictor calls.
TwoPassResult two_pass(int image_id, const std::vector<Detection>& dets,
                       const MaskPredictor& predictor, const ImageSize& canvas,
                       double paste_threshold = 0.5, bool predictor_thread_safe = true);

InstanceMask paste_prob_map(const MaskProbMap& map, const ImageSize& canvas, double threshold);

// score' = score * predicted_mask_iou; throws when either factor leaves [0, 1].
Detection mask_rescore(const Detection& det, double predicted_mask_iou);

// p' = sigmoid(logit(clamp(p, eps, 1 - eps)) + residual); the reference box
// is never modified. Throws on a resolution mismatch with the residual.
MaskProbMap mask_cascade_refine(const MaskProbMap& base, const ResidualRefiner& refiner);

// Oracle predictors ---------------------------------------------------------

// Samples the matched ground-truth mask inside the proposal box. The grid
// resolution follows the box extent (clamped to max_resolution) so integer
// square boxes reconstruct their mask exactly. The quality estimate is the
// covered fraction of the ground-truth mask. The ground-truth set must
// outlive the predictor.
MaskPredictor gt_clip_predictor(const GroundTruthSet& gts, int max_resolution = 512);

// All-zero grids with quality 0.
MaskPredictor zeros_predictor(int resolution = 28);

ResidualRefiner zero_residual_refiner();
ResidualRefiner constant_residual_refiner(double value);

}  // namespace detkit
