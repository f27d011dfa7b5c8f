#include "detkit/tta/merge.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>

namespace detkit {

namespace {

std::vector<Detection> suppress_pool(const std::vector<Detection>& pooled,
                                     const MergeConfig& cfg) {
    std::vector<Detection> out;
    if (cfg.weighted_box_fusion) {
        if (cfg.suppression.mode != NmsMode::hard) {
            throw std::invalid_argument("weighted box fusion requires hard suppression");
        }
        std::vector<Box> boxes(pooled.size());
        std::vector<double> scores(pooled.size());
        std::vector<int> classes(pooled.size());
        for (std::size_t i = 0; i < pooled.size(); ++i) {
            boxes[i] = pooled[i].box;
            scores[i] = pooled[i].score;
            classes[i] = pooled[i].class_id;
        }
        const NmsClusters clusters = hard_nms_clusters(
            boxes, scores, cfg.suppression.class_agnostic ? nullptr : &classes,
            cfg.suppression.iou_threshold);
        for (const int k : clusters.kept) {
            Detection fused = pooled[std::size_t(k)];
            double wsum = 0.0;
            Box acc{0.0, 0.0, 0.0, 0.0};
            for (std::size_t i = 0; i < pooled.size(); ++i) {
                if (clusters.owner[i] != k) continue;
                const double w = pooled[i].score;
                acc.x1 += w * pooled[i].box.x1;
                acc.y1 += w * pooled[i].box.y1;
                acc.x2 += w * pooled[i].box.x2;
                acc.y2 += w * pooled[i].box.y2;
                wsum += w;
            }
            if (wsum > 0.0) {
                fused.box = Box{acc.x1 / wsum, acc.y1 / wsum, acc.x2 / wsum, acc.y2 / wsum};
            }
            out.push_back(std::move(fused));
        }
    } else {
        out = nms(pooled, cfg.suppression);
    }
    if (int(out.size()) > cfg.max_dets) out.resize(std::size_t(cfg.max_dets));
    return out;
}

}  // namespace

ImageSize augmented_canvas(const ImageSize& original, int scale_short_side) {
    if (!is_valid_size(original) || scale_short_side < 1) {
        throw std::invalid_argument("invalid canvas or scale");
    }
    const int short_side = std::min(original.width, original.height);
    if (scale_short_side == short_side) return original;
    const double factor = double(scale_short_side) / double(short_side);
    return ImageSize{std::max(1, int(std::lround(double(original.width) * factor))),
                     std::max(1, int(std::lround(double(original.height) * factor)))};
}

std::vector<Detection> to_original_frame(const AugmentedResult& r) {
    const ImageSize aug = augmented_canvas(r.original, r.scale_short_side);
    const int orig_short = std::min(r.original.width, r.original.height);
    const double scale = double(orig_short) / double(r.scale_short_side);

    std::vector<Detection> out = r.detections;
    const std::ptrdiff_t n = std::ptrdiff_t(out.size());
#pragma omp parallel for schedule(dynamic) if (n > 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        Detection& d = out[std::size_t(i)];
        if (r.flipped) {
            d.box = hflip_box(d.box, aug);
            if (d.mask) d.mask = hflip_mask(*d.mask);
        }
        if (scale != 1.0) d.box = rescale_box(d.box, scale);
        if (d.mask && !(d.mask->size == r.original)) {
            d.mask = rescale_mask(*d.mask, r.original);
        }
    }
    return out;
}

std::vector<Detection> normalize_scores(const std::vector<Detection>& dets) {
    std::map<int, double> class_max;
    for (const auto& d : dets) {
        auto [it, inserted] = class_max.emplace(d.class_id, d.score);
        if (!inserted && d.score > it->second) it->second = d.score;
    }
    std::vector<Detection> out = dets;
    for (auto& d : out) {
        const double m = class_max[d.class_id];
        if (m > 0.0) d.score = d.score / m;
    }
    return out;
}

std::vector<Detection> tta_merge(const std::vector<AugmentedResult>& results,
                                 const MergeConfig& cfg) {
    validate_nms_config(cfg.suppression);
    if (cfg.max_dets < 1) throw std::invalid_argument("max_dets must be positive");
    if (results.empty()) return {};
    for (const auto& r : results) {
        if (r.image_id != results.front().image_id || !(r.original == results.front().original)) {
            throw std::invalid_argument("augmented results mix images");
        }
    }

    std::vector<std::vector<Detection>> mapped(results.size());
    const std::ptrdiff_t n = std::ptrdiff_t(results.size());
#pragma omp parallel for schedule(dynamic) if (n > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        auto dets = to_original_frame(results[std::size_t(i)]);
        if (cfg.normalize_scores) dets = normalize_scores(dets);
        mapped[std::size_t(i)] = std::move(dets);
    }

    // Canonical pooling order: permuting the input list must not change the
    // outcome of tie-breaks inside the final suppression.
    std::vector<int> order(results.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& ra = results[std::size_t(a)];
        const auto& rb = results[std::size_t(b)];
        if (ra.scale_short_side != rb.scale_short_side) {
            return ra.scale_short_side < rb.scale_short_side;
        }
        if (ra.flipped != rb.flipped) return !ra.flipped;
        const auto& da = mapped[std::size_t(a)];
        const auto& db = mapped[std::size_t(b)];
        return std::lexicographical_compare(da.begin(), da.end(), db.begin(), db.end(),
                                            detection_less);
    });

    std::vector<Detection> pooled;
    for (const int i : order) {
        pooled.insert(pooled.end(), mapped[std::size_t(i)].begin(), mapped[std::size_t(i)].end());
    }
    return suppress_pool(pooled, cfg);
}

std::vector<Detection> ensemble(const std::vector<ModelResult>& model_results,
                                const MergeConfig& cfg) {
    validate_nms_config(cfg.suppression);
    if (cfg.max_dets < 1) throw std::invalid_argument("max_dets must be positive");
    std::vector<Detection> pooled;
    for (const auto& model : model_results) {
        if (cfg.normalize_scores) {
            const auto normalized = normalize_scores(model.detections);
            pooled.insert(pooled.end(), normalized.begin(), normalized.end());
        } else {
            pooled.insert(pooled.end(), model.detections.begin(), model.detections.end());
        }
    }
    return suppress_pool(pooled, cfg);
}

}  // namespace detkit
