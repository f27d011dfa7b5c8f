#include "detkit/core/detection.hpp"

namespace detkit {

namespace {

// absent masks order before present ones
int mask_compare(const std::optional<InstanceMask>& a, const std::optional<InstanceMask>& b) {
    if (!a && !b) return 0;
    if (!a) return -1;
    if (!b) return 1;
    if (mask_less(*a, *b)) return -1;
    if (mask_less(*b, *a)) return 1;
    return 0;
}

}  // namespace

bool detection_less(const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    if (!(a.box == b.box)) return box_less(a.box, b.box);
    return mask_compare(a.mask, b.mask) < 0;
}

bool gt_instance_less(const GroundTruthInstance& a, const GroundTruthInstance& b) {
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    if (a.iscrowd != b.iscrowd) return !a.iscrowd;
    if (!(a.box == b.box)) return box_less(a.box, b.box);
    return mask_compare(a.mask, b.mask) < 0;
}

}  // namespace detkit
