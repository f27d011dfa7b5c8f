#include "detkit/sampling/anchors.hpp"

#include <algorithm>
#include <cstddef>
#include <stdexcept>

namespace detkit {

namespace {

struct Claim {
    double iou;
    int gt;
    int anchor;  // position in the input vector
};

}  // namespace

AnchorMatchResult forced_anchor_match(const std::vector<Anchor>& anchors,
                                      const std::vector<GroundTruthInstance>& gts,
                                      const AnchorMatchConfig& cfg) {
    if (cfg.top_k < 1) throw std::invalid_argument("top_k must be at least 1");

    AnchorMatchResult result;
    const int n = int(anchors.size());
    const int m = int(gts.size());
    int k = cfg.top_k;
    if (k > n) {
        k = n;
        result.top_k_clamped = true;
    }

    std::vector<Box> anchor_boxes(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) anchor_boxes[i] = anchors[i].box;
    std::vector<Box> gt_boxes(gts.size());
    for (std::size_t g = 0; g < gts.size(); ++g) gt_boxes[g] = gts[g].box;
    const std::vector<double> ious = box_iou_matrix(anchor_boxes, gt_boxes);
    const auto iou_at = [&](int a, int g) { return ious[std::size_t(a) * std::size_t(m) + std::size_t(g)]; };

    // Per-GT candidate lists: all anchors with nonzero overlap, best first.
    std::vector<std::vector<int>> candidates(gts.size());
    for (int g = 0; g < m; ++g) {
        auto& cand = candidates[std::size_t(g)];
        for (int a = 0; a < n; ++a) {
            if (iou_at(a, g) > 0.0) cand.push_back(a);
        }
        std::sort(cand.begin(), cand.end(), [&](int a, int b) {
            const double ia = iou_at(a, g);
            const double ib = iou_at(b, g);
            if (ia != ib) return ia > ib;
            return a < b;
        });
    }

    // Top-k claims, contested anchors resolved by (iou desc, gt asc).
    std::vector<Claim> claims;
    for (int g = 0; g < m; ++g) {
        const auto& cand = candidates[std::size_t(g)];
        for (int r = 0; r < k && r < int(cand.size()); ++r) {
            claims.push_back({iou_at(cand[std::size_t(r)], g), g, cand[std::size_t(r)]});
        }
    }
    std::sort(claims.begin(), claims.end(), [](const Claim& a, const Claim& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.gt != b.gt) return a.gt < b.gt;
        return a.anchor < b.anchor;
    });

    std::vector<int> owner(anchors.size(), -1);
    std::vector<int> won(gts.size(), 0);
    for (const Claim& c : claims) {
        if (owner[std::size_t(c.anchor)] >= 0) continue;
        owner[std::size_t(c.anchor)] = c.gt;
        ++won[std::size_t(c.gt)];
    }

    // Guarantee pass: a ground truth with overlap but no anchor takes its
    // best free candidate, or steals from a holder that can spare one.
    for (int g = 0; g < m; ++g) {
        if (won[std::size_t(g)] > 0 || candidates[std::size_t(g)].empty()) continue;
        int chosen = -1;
        for (const int a : candidates[std::size_t(g)]) {
            if (owner[std::size_t(a)] < 0) {
                chosen = a;
                break;
            }
        }
        if (chosen < 0) {
            for (const int a : candidates[std::size_t(g)]) {
                if (won[std::size_t(owner[std::size_t(a)])] >= 2) {
                    chosen = a;
                    break;
                }
            }
        }
        if (chosen < 0) continue;  // not satisfiable: fewer anchors than ground truths
        if (owner[std::size_t(chosen)] >= 0) --won[std::size_t(owner[std::size_t(chosen)])];
        owner[std::size_t(chosen)] = g;
        ++won[std::size_t(g)];
    }

    for (int a = 0; a < n; ++a) {
        AnchorAssignment asg;
        if (owner[std::size_t(a)] >= 0) {
            asg.label = AnchorLabel::positive;
            asg.gt_index = owner[std::size_t(a)];
            asg.forced = true;
        } else {
            double best_iou = 0.0;
            int best_gt = -1;
            for (int g = 0; g < m; ++g) {
                const double iou = iou_at(a, g);
                if (iou > best_iou) {
                    best_iou = iou;
                    best_gt = g;
                }
            }
            if (best_gt >= 0 && best_iou >= cfg.positive_iou) {
                asg.label = AnchorLabel::positive;
                asg.gt_index = best_gt;
            } else if (best_iou < cfg.background_iou) {
                asg.label = AnchorLabel::background;
            } else {
                asg.label = AnchorLabel::ignore;
            }
        }
        result.assignments[anchors[std::size_t(a)].index] = asg;
    }
    return result;
}

}  // namespace detkit
