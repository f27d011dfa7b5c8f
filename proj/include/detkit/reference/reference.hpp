#pragma once

#include <vector>

#include "detkit/core/detection.hpp"
#include "detkit/eval/evaluator.hpp"
#include "detkit/suppression/nms.hpp"

// Plain serial implementations kept alongside the tuned kernels. They trade
// speed for obviousness and act as the ground truth in tests and as the
// baseline in benchmarks. Nothing here is used by the library itself.
namespace detkit::reference {

// Counts occupied cells on a regular grid of the given step.
double box_iou_rasterized(const Box& a, const Box& b, double step);

// Dense bitmap intersection / union counting.
double bitmap_iou(const Bitmap& a, const Bitmap& b);

// Textbook greedy suppression, one quadratic double loop, hard mode only.
std::vector<Detection> nms_bruteforce(const std::vector<Detection>& dets,
                                      double iou_threshold, bool class_agnostic);

// Serial soft suppression re-deriving every decay factor from scratch.
std::vector<Detection> soft_nms_reference(const std::vector<Detection>& dets,
                                          const NmsConfig& cfg);

// Exhaustive matching plus a direct 101-point scan (no envelope
// precomputation, no overlap caching). Follows the same matching
// conventions as detkit::evaluate.
EvalResult evaluate_bruteforce(const std::vector<ImageDetections>& results,
                               const GroundTruthSet& gts, const EvalConfig& cfg);

}  // namespace detkit::reference
