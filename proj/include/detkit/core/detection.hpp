#pragma once

#include <optional>
#include <vector>

#include "detkit/core/geometry.hpp"
#include "detkit/core/mask.hpp"

namespace detkit {

struct Detection {
    Box box;
    int class_id = 0;
    double score = 0.0;
    std::optional<InstanceMask> mask;

    bool operator==(const Detection&) const = default;
};

struct GroundTruthInstance {
    Box box;
    int class_id = 0;
    std::optional<InstanceMask> mask;
    bool iscrowd = false;

    bool operator==(const GroundTruthInstance&) const = default;
};

struct GroundTruthImage {
    int image_id = 0;
    ImageSize size;
    std::vector<GroundTruthInstance> instances;
};

struct GroundTruthSet {
    std::vector<GroundTruthImage> images;
    std::vector<int> category_ids;
};

struct ImageDetections {
    int image_id = 0;
    std::vector<Detection> detections;
};

// Total order used wherever results must not depend on input ordering:
// score descending, then class, box, and mask.
bool detection_less(const Detection& a, const Detection& b);

// (class, iscrowd, box, mask) ordering for ground-truth canonicalisation.
bool gt_instance_less(const GroundTruthInstance& a, const GroundTruthInstance& b);

}  // namespace detkit
