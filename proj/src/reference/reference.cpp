#include "detkit/reference/reference.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>

namespace detkit::reference {

double box_iou_rasterized(const Box& a, const Box& b, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
    const double x_lo = std::min(a.x1, b.x1);
    const double x_hi = std::max(a.x2, b.x2);
    const double y_lo = std::min(a.y1, b.y1);
    const double y_hi = std::max(a.y2, b.y2);
    const auto inside = [&](const Box& box, double x, double y) {
        return x >= box.x1 && x < box.x2 && y >= box.y1 && y < box.y2;
    };
    std::int64_t inter = 0;
    std::int64_t uni = 0;
    for (double y = y_lo + step / 2.0; y < y_hi; y += step) {
        for (double x = x_lo + step / 2.0; x < x_hi; x += step) {
            const bool in_a = inside(a, x, y);
            const bool in_b = inside(b, x, y);
            if (in_a && in_b) ++inter;
            if (in_a || in_b) ++uni;
        }
    }
    if (uni == 0) return 0.0;
    return double(inter) / double(uni);
}

double bitmap_iou(const Bitmap& a, const Bitmap& b) {
    if (!(a.size == b.size)) throw std::invalid_argument("bitmap canvas mismatch");
    std::int64_t inter = 0;
    std::int64_t uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool in_a = a.data[i] != 0;
        const bool in_b = b.data[i] != 0;
        if (in_a && in_b) ++inter;
        if (in_a || in_b) ++uni;
    }
    if (uni == 0) return 1.0;  // two empty masks are identical
    return double(inter) / double(uni);
}

std::vector<Detection> nms_bruteforce(const std::vector<Detection>& dets,
                                      double iou_threshold, bool class_agnostic) {
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return dets[std::size_t(a)].score > dets[std::size_t(b)].score;
    });
    std::vector<Detection> kept;
    for (const int i : order) {
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (!class_agnostic && k.class_id != dets[std::size_t(i)].class_id) continue;
            if (box_iou(k.box, dets[std::size_t(i)].box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(dets[std::size_t(i)]);
    }
    return kept;
}

std::vector<Detection> soft_nms_reference(const std::vector<Detection>& dets,
                                          const NmsConfig& cfg) {
    std::vector<Detection> pool;
    for (const auto& d : dets) {
        if (d.score >= cfg.score_floor) pool.push_back(d);
    }
    std::vector<Detection> out;
    while (!pool.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pool.size(); ++i) {
            if (pool[i].score > pool[best].score) best = i;
        }
        const Detection sel = pool[best];
        pool.erase(pool.begin() + std::ptrdiff_t(best));
        out.push_back(sel);
        for (std::size_t i = 0; i < pool.size();) {
            if (cfg.class_agnostic || pool[i].class_id == sel.class_id) {
                const double iou = box_iou(sel.box, pool[i].box);
                if (iou > cfg.iou_threshold) {
                    if (cfg.mode == NmsMode::soft_linear) {
                        pool[i].score *= (1.0 - iou);
                    } else {
                        pool[i].score *= std::exp(-(iou * iou) / cfg.sigma);
                    }
                }
            }
            if (pool[i].score < cfg.score_floor) {
                pool.erase(pool.begin() + std::ptrdiff_t(i));
            } else {
                ++i;
            }
        }
    }
    return out;
}

}  // namespace detkit::reference
