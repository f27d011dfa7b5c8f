#include "detkit/pipeline/two_pass.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <stdexcept>

namespace detkit {

namespace {

constexpr double kLogitEps = 1e-6;

double sample_bilinear(const MaskProbMap& map, double u, double v) {
    const int r = map.resolution;
    const auto cell = [&](int uu, int vv) {
        uu = std::clamp(uu, 0, r - 1);
        vv = std::clamp(vv, 0, r - 1);
        return map.values[std::size_t(vv) * std::size_t(r) + std::size_t(uu)];
    };
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const int u0 = int(fu);
    const int v0 = int(fv);
    const double tu = u - fu;
    const double tv = v - fv;
    const double top = (1.0 - tu) * cell(u0, v0) + tu * cell(u0 + 1, v0);
    const double bot = (1.0 - tu) * cell(u0, v0 + 1) + tu * cell(u0 + 1, v0 + 1);
    return (1.0 - tv) * top + tv * bot;
}

}  // namespace

InstanceMask paste_prob_map(const MaskProbMap& map, const ImageSize& canvas, double threshold) {
    if (map.resolution < 1 || map.values.size() != std::size_t(map.resolution) * std::size_t(map.resolution)) {
        throw std::invalid_argument("probability grid shape mismatch");
    }
    const Box& b = map.reference_box;
    const double w = b.width();
    const double h = b.height();
    Bitmap bitmap(canvas);
    if (w > 0.0 && h > 0.0) {
        // pixels whose centre falls inside [x1, x2) x [y1, y2)
        const int x_lo = std::max(0, int(std::ceil(b.x1 - 0.5)));
        const int x_hi = std::min(canvas.width - 1, int(std::ceil(b.x2 - 0.5)) - 1);
        const int y_lo = std::max(0, int(std::ceil(b.y1 - 0.5)));
        const int y_hi = std::min(canvas.height - 1, int(std::ceil(b.y2 - 0.5)) - 1);
        const double r = double(map.resolution);
        for (int y = y_lo; y <= y_hi; ++y) {
            const double v = (double(y) + 0.5 - b.y1) / h * r - 0.5;
            for (int x = x_lo; x <= x_hi; ++x) {
                const double u = (double(x) + 0.5 - b.x1) / w * r - 0.5;
                if (sample_bilinear(map, u, v) > threshold) bitmap.set(x, y, true);
            }
        }
    }
    return rle_encode(bitmap);
}

TwoPassResult two_pass(int image_id, const std::vector<Detection>& dets,
                       const MaskPredictor& predictor, const ImageSize& canvas,
                       double paste_threshold, bool predictor_thread_safe) {
    if (!predictor) throw std::invalid_argument("two_pass requires a predictor");
    TwoPassResult result;
    result.detections = dets;
    result.predicted_mask_iou.assign(dets.size(), 0.0);
    std::vector<std::uint8_t> failed(dets.size(), 0);

    std::vector<std::optional<MaskPrediction>> predictions(dets.size());
    const std::ptrdiff_t n = std::ptrdiff_t(dets.size());
#pragma omp parallel for schedule(dynamic) if (predictor_thread_safe && n > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            predictions[std::size_t(i)] =
                predictor(image_id, dets[std::size_t(i)].box, dets[std::size_t(i)].class_id);
        } catch (...) {
            predictions[std::size_t(i)] = std::nullopt;
        }
    }

#pragma omp parallel for schedule(dynamic) if (n > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& pred = predictions[std::size_t(i)];
        if (!pred) {
            failed[std::size_t(i)] = 1;
            continue;
        }
        try {
            result.detections[std::size_t(i)].mask =
                paste_prob_map(pred->prob_map, canvas, paste_threshold);
            result.predicted_mask_iou[std::size_t(i)] = pred->predicted_mask_iou;
        } catch (...) {
            failed[std::size_t(i)] = 1;
            result.detections[std::size_t(i)].mask.reset();
        }
    }
    for (std::size_t i = 0; i < failed.size(); ++i) {
        if (failed[i]) result.failed.push_back(int(i));
    }
    return result;
}

Detection mask_rescore(const Detection& det, double predicted_mask_iou) {
    if (!(det.score >= 0.0 && det.score <= 1.0)) {
        throw std::invalid_argument("classification score outside [0, 1]");
    }
    if (!(predicted_mask_iou >= 0.0 && predicted_mask_iou <= 1.0)) {
        throw std::invalid_argument("predicted mask IoU outside [0, 1]");
    }
    Detection out = det;
    out.score = det.score * predicted_mask_iou;
    return out;
}

MaskProbMap mask_cascade_refine(const MaskProbMap& base, const ResidualRefiner& refiner) {
    if (!refiner) throw std::invalid_argument("mask refinement requires a refiner");
    const std::vector<double> residual = refiner(base);
    if (residual.size() != base.values.size()) {
        throw std::invalid_argument("residual resolution mismatch");
    }
    MaskProbMap out = base;  // reference box deliberately untouched
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const double p = std::clamp(base.values[i], kLogitEps, 1.0 - kLogitEps);
        const double logit = std::log(p / (1.0 - p));
        out.values[i] = 1.0 / (1.0 + std::exp(-(logit + residual[i])));
    }
    return out;
}

MaskPredictor gt_clip_predictor(const GroundTruthSet& gts, int max_resolution) {
    // Pre-decode every ground-truth bitmap so the closure is read-only and
    // safe to call concurrently.
    struct ImageEntry {
        ImageSize canvas;
        std::vector<const GroundTruthInstance*> instances;
        std::vector<Bitmap> bitmaps;  // empty bitmap when the instance has no mask
    };
    auto table = std::make_shared<std::map<int, ImageEntry>>();
    for (const auto& img : gts.images) {
        ImageEntry entry;
        entry.canvas = img.size;
        for (const auto& inst : img.instances) {
            entry.instances.push_back(&inst);
            entry.bitmaps.push_back(inst.mask ? rle_decode(*inst.mask) : Bitmap{});
        }
        (*table)[img.image_id] = std::move(entry);
    }

    return [table, max_resolution](int image_id, const Box& proposal,
                                   int class_id) -> std::optional<MaskPrediction> {
        const auto it = table->find(image_id);
        if (it == table->end()) return std::nullopt;
        const ImageEntry& entry = it->second;

        int best = -1;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < entry.instances.size(); ++g) {
            if (entry.instances[g]->class_id != class_id) continue;
            if (!entry.instances[g]->mask) continue;
            const double iou = box_iou(proposal, entry.instances[g]->box);
            if (iou > best_iou) {
                best_iou = iou;
                best = int(g);
            }
        }
        if (best < 0) return std::nullopt;
        const Bitmap& gt_bitmap = entry.bitmaps[std::size_t(best)];

        const double w = proposal.width();
        const double h = proposal.height();
        if (w <= 0.0 || h <= 0.0) return std::nullopt;
        const int r = std::clamp(int(std::lround(std::max(w, h))), 1, max_resolution);

        MaskPrediction pred;
        pred.prob_map.resolution = r;
        pred.prob_map.reference_box = proposal;
        pred.prob_map.values.assign(std::size_t(r) * std::size_t(r), 0.0);
        for (int v = 0; v < r; ++v) {
            const int sy = int(std::floor(proposal.y1 + (double(v) + 0.5) / double(r) * h));
            if (sy < 0 || sy >= entry.canvas.height) continue;
            for (int u = 0; u < r; ++u) {
                const int sx = int(std::floor(proposal.x1 + (double(u) + 0.5) / double(r) * w));
                if (sx < 0 || sx >= entry.canvas.width) continue;
                if (gt_bitmap.at(sx, sy)) {
                    pred.prob_map.values[std::size_t(v) * std::size_t(r) + std::size_t(u)] = 1.0;
                }
            }
        }

        // Quality estimate: fraction of the ground-truth mask lying inside
        // the proposal box (pixel-centre inclusion).
        const GroundTruthInstance& gt = *entry.instances[std::size_t(best)];
        std::int64_t total = 0;
        std::int64_t inside = 0;
        for (int y = 0; y < entry.canvas.height; ++y) {
            for (int x = 0; x < entry.canvas.width; ++x) {
                if (!gt_bitmap.at(x, y)) continue;
                ++total;
                const double cx = double(x) + 0.5;
                const double cy = double(y) + 0.5;
                if (cx >= proposal.x1 && cx < proposal.x2 && cy >= proposal.y1 && cy < proposal.y2) {
                    ++inside;
                }
            }
        }
        pred.predicted_mask_iou = total > 0 ? double(inside) / double(total) : 0.0;
        return pred;
    };
}

MaskPredictor zeros_predictor(int resolution) {
    if (resolution < 1) throw std::invalid_argument("resolution must be at least 1");
    return [resolution](int, const Box& proposal, int) -> std::optional<MaskPrediction> {
        MaskPrediction pred;
        pred.prob_map.resolution = resolution;
        pred.prob_map.reference_box = proposal;
        pred.prob_map.values.assign(std::size_t(resolution) * std::size_t(resolution), 0.0);
        pred.predicted_mask_iou = 0.0;
        return pred;
    };
}

ResidualRefiner zero_residual_refiner() {
    return [](const MaskProbMap& base) { return std::vector<double>(base.values.size(), 0.0); };
}

ResidualRefiner constant_residual_refiner(double value) {
    return [value](const MaskProbMap& base) {
        return std::vector<double>(base.values.size(), value);
    };
}

}  // namespace detkit
