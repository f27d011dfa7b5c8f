#pragma once

#include <cstdint>
#include <vector>

#include "detkit/core/detection.hpp"
#include "detkit/io/coco.hpp"

namespace detkit {

struct NoiseModel {
    double iou_jitter = 0.1;          // box corner displacement, fraction of extent
    double score_sigma = 0.05;
    double false_positive_rate = 0.0; // per instance
    double miss_rate = 0.0;           // per instance
};

struct ProposalSpec {
    int per_instance = 8;   // jitter ladder around each instance
    int random_count = 20;  // unrelated background boxes per image
    double iou_spread = 0.5;
};

struct AnchorGridSpec {
    bool enabled = false;
    int stride = 32;
    std::vector<int> scales = {32, 64, 128, 256};
    std::vector<double> aspect_ratios = {0.5, 1.0, 2.0};
};

struct SceneSpec {
    std::uint64_t rng_seed = 1;
    int image_count = 10;
    ImageSize canvas{640, 480};
    int min_instances = 1;
    int max_instances = 8;
    int class_count = 5;
    int min_instance_size = 16;
    int max_instance_size = 160;
    bool square_instances = false;  // equal box sides (exact mask round trips)
    bool generate_masks = true;
    bool attach_detection_masks = false;  // detection mask = instance mask clipped to its box
    NoiseModel noise;
    ProposalSpec proposals;
    AnchorGridSpec anchors;
};

void validate_scene_spec(const SceneSpec& spec);

// Deterministic under the seed: ground truth on an integer grid, detections
// jittered onto a 1/16-pixel grid with scores correlated to their overlap,
// a proposal ladder straddling the usual IoU cutoffs, and an optional anchor
// grid. Detection quality is summarised as the mean IoU against the source
// instance so tests can target overlap regimes.
Scene synth_generate(const SceneSpec& spec);

std::vector<Anchor> make_anchor_grid(const ImageSize& canvas, const AnchorGridSpec& spec);

}  // namespace detkit
