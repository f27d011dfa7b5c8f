#include "detkit/suppression/nms.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <stdexcept>

namespace detkit {

namespace {

std::vector<int> score_order(const std::vector<double>& scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[std::size_t(a)] > scores[std::size_t(b)];
    });
    return order;
}

}  // namespace

void validate_nms_config(const NmsConfig& cfg) {
    if (!(cfg.iou_threshold > 0.0 && cfg.iou_threshold <= 1.0)) {
        throw std::invalid_argument("nms iou_threshold must lie in (0, 1]");
    }
    if (!(cfg.sigma > 0.0)) {
        throw std::invalid_argument("nms sigma must be positive");
    }
    if (cfg.score_floor < 0.0) {
        throw std::invalid_argument("nms score_floor must be non-negative");
    }
}

namespace {

// Serial greedy pass over one class group, candidates pre-sorted by
// (score desc, input index asc). Writes only entries of this group.
void greedy_suppress(const std::vector<Box>& boxes, const std::vector<int>& candidates,
                     double iou_threshold, std::vector<int>& owner) {
    std::vector<int> kept;
    for (const int i : candidates) {
        bool suppressed = false;
        for (const int k : kept) {
            if (box_iou(boxes[std::size_t(k)], boxes[std::size_t(i)]) > iou_threshold) {
                owner[std::size_t(i)] = k;
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            owner[std::size_t(i)] = i;
            kept.push_back(i);
        }
    }
}

}  // namespace

NmsClusters hard_nms_clusters(const std::vector<Box>& boxes,
                              const std::vector<double>& scores,
                              const std::vector<int>* classes,
                              double iou_threshold) {
    const std::vector<int> order = score_order(scores);
    NmsClusters out;
    out.owner.assign(boxes.size(), -1);

    // classes suppress independently, which is the natural parallel split
    std::vector<std::vector<int>> groups;
    if (classes) {
        std::map<int, std::size_t> slot;
        for (const int i : order) {
            const int cls = (*classes)[std::size_t(i)];
            const auto [it, inserted] = slot.emplace(cls, groups.size());
            if (inserted) groups.emplace_back();
            groups[it->second].push_back(i);
        }
    } else {
        groups.push_back(order);
    }

    const std::ptrdiff_t n_groups = std::ptrdiff_t(groups.size());
#pragma omp parallel for schedule(dynamic) if (n_groups > 1)
    for (std::ptrdiff_t g = 0; g < n_groups; ++g) {
        greedy_suppress(boxes, groups[std::size_t(g)], iou_threshold, out.owner);
    }

    for (const int i : order) {
        if (out.owner[std::size_t(i)] == i) out.kept.push_back(i);
    }
    return out;
}

std::vector<int> hard_nms_indices(const std::vector<Box>& boxes,
                                  const std::vector<double>& scores,
                                  const std::vector<int>* classes,
                                  double iou_threshold) {
    return hard_nms_clusters(boxes, scores, classes, iou_threshold).kept;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, const NmsConfig& cfg) {
    validate_nms_config(cfg);
    if (cfg.mode != NmsMode::hard) return soft_nms(dets, cfg);
    std::vector<Box> boxes(dets.size());
    std::vector<double> scores(dets.size());
    std::vector<int> classes(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
        boxes[i] = dets[i].box;
        scores[i] = dets[i].score;
        classes[i] = dets[i].class_id;
    }
    const std::vector<int> kept = hard_nms_indices(
        boxes, scores, cfg.class_agnostic ? nullptr : &classes, cfg.iou_threshold);
    std::vector<Detection> out;
    out.reserve(kept.size());
    for (const int i : kept) out.push_back(dets[std::size_t(i)]);
    return out;
}

std::vector<Detection> soft_nms(const std::vector<Detection>& dets, const NmsConfig& cfg) {
    validate_nms_config(cfg);
    if (cfg.mode == NmsMode::hard) {
        throw std::invalid_argument("soft_nms requires a soft mode");
    }
    std::vector<double> scores(dets.size());
    std::vector<std::uint8_t> dead(dets.size(), 0);
    for (std::size_t i = 0; i < dets.size(); ++i) {
        scores[i] = dets[i].score;
        if (scores[i] < cfg.score_floor) dead[i] = 1;
    }

    std::vector<Detection> out;
    out.reserve(dets.size());
    const std::ptrdiff_t n = std::ptrdiff_t(dets.size());
    for (;;) {
        // lowest input index wins score ties
        int best = -1;
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            if (dead[std::size_t(i)]) continue;
            if (best < 0 || scores[std::size_t(i)] > scores[std::size_t(best)]) best = int(i);
        }
        if (best < 0) break;
        dead[std::size_t(best)] = 1;
        Detection sel = dets[std::size_t(best)];
        sel.score = scores[std::size_t(best)];
        out.push_back(sel);

#pragma omp parallel for schedule(static) if (n > 2048)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            if (dead[std::size_t(i)]) continue;
            if (!cfg.class_agnostic && dets[std::size_t(i)].class_id != sel.class_id) continue;
            const double iou = box_iou(sel.box, dets[std::size_t(i)].box);
            if (iou <= cfg.iou_threshold) continue;
            double s = scores[std::size_t(i)];
            if (cfg.mode == NmsMode::soft_linear) {
                s *= (1.0 - iou);
            } else {
                s *= std::exp(-(iou * iou) / cfg.sigma);
            }
            scores[std::size_t(i)] = s;
            if (s < cfg.score_floor) dead[std::size_t(i)] = 1;
        }
    }
    return out;
}

std::vector<Detection> relaxed_nms(const std::vector<Detection>& proposals,
                                   double relaxed_threshold,
                                   double baseline_threshold) {
    if (relaxed_threshold < baseline_threshold) {
        throw std::invalid_argument("relaxed threshold must not undercut the baseline");
    }
    NmsConfig cfg;
    cfg.iou_threshold = relaxed_threshold;
    cfg.class_agnostic = true;  // proposals carry no class yet
    return nms(proposals, cfg);
}

}  // namespace detkit
