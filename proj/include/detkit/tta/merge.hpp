#pragma once

#include <string>
#include <vector>

#include "detkit/core/detection.hpp"
#include "detkit/suppression/nms.hpp"

namespace detkit {

// Detections produced on a rescaled and optionally mirrored canvas.
struct AugmentedResult {
    int image_id = 0;
    int scale_short_side = 0;  // short side of the augmented canvas, pixels
    bool flipped = false;
    std::vector<Detection> detections;  // in the augmented frame
    ImageSize original;
};

struct MergeConfig {
    NmsConfig suppression;
    bool normalize_scores = false;
    int max_dets = 100;
    bool weighted_box_fusion = false;  // score-weighted box averaging per cluster
};

ImageSize augmented_canvas(const ImageSize& original, int scale_short_side);

// Un-flip, then map boxes and masks back onto the original canvas. Scores
// pass through untouched.
std::vector<Detection> to_original_frame(const AugmentedResult& r);

// Per class: divide by the class maximum when it is positive. Ranking
// within each class is preserved.
std::vector<Detection> normalize_scores(const std::vector<Detection>& dets);

// Map every augmented result to the original frame, optionally normalise,
// pool, suppress, and truncate. The pooled order is canonical in
// (scale, flip, content), so permuting the input list cannot change the
// output. Throws when results mix image ids or canvases.
std::vector<Detection> tta_merge(const std::vector<AugmentedResult>& results,
                                 const MergeConfig& cfg);

struct ModelResult {
    std::string model_id;
    std::vector<Detection> detections;
};

// Pooled union (in the given model order) followed by suppression; a
// single-model ensemble therefore reduces to plain suppression.
std::vector<Detection> ensemble(const std::vector<ModelResult>& model_results,
                                const MergeConfig& cfg);

}  // namespace detkit
