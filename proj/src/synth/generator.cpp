#include "detkit/synth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "detkit/core/rng.hpp"

namespace detkit {

namespace {

double snap16(double v) { return std::round(v * 16.0) / 16.0; }

Box jitter_box(const Box& b, double magnitude, Rng& rng, const ImageSize& canvas) {
    const double w = b.width();
    const double h = b.height();
    Box out{b.x1 + rng.uniform(-magnitude, magnitude) * w,
            b.y1 + rng.uniform(-magnitude, magnitude) * h,
            b.x2 + rng.uniform(-magnitude, magnitude) * w,
            b.y2 + rng.uniform(-magnitude, magnitude) * h};
    out.x1 = snap16(std::clamp(out.x1, 0.0, double(canvas.width)));
    out.y1 = snap16(std::clamp(out.y1, 0.0, double(canvas.height)));
    out.x2 = snap16(std::clamp(out.x2, 0.0, double(canvas.width)));
    out.y2 = snap16(std::clamp(out.y2, 0.0, double(canvas.height)));
    if (out.x2 < out.x1) std::swap(out.x1, out.x2);
    if (out.y2 < out.y1) std::swap(out.y1, out.y2);
    if (out.x2 - out.x1 < 1.0) out.x2 = std::min(out.x1 + 1.0, double(canvas.width));
    if (out.y2 - out.y1 < 1.0) out.y2 = std::min(out.y1 + 1.0, double(canvas.height));
    return out;
}

InstanceMask ellipse_mask(const Box& b, const ImageSize& canvas) {
    Bitmap bitmap(canvas);
    const double cx = (b.x1 + b.x2) / 2.0;
    const double cy = (b.y1 + b.y2) / 2.0;
    const double rx = b.width() / 2.0;
    const double ry = b.height() / 2.0;
    const int x_lo = std::max(0, int(std::floor(b.x1)));
    const int x_hi = std::min(canvas.width - 1, int(std::ceil(b.x2)));
    const int y_lo = std::max(0, int(std::floor(b.y1)));
    const int y_hi = std::min(canvas.height - 1, int(std::ceil(b.y2)));
    for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
            const double dx = (double(x) + 0.5 - cx) / rx;
            const double dy = (double(y) + 0.5 - cy) / ry;
            if (dx * dx + dy * dy <= 1.0) bitmap.set(x, y, true);
        }
    }
    return rle_encode(bitmap);
}

InstanceMask clip_mask_to_box(const InstanceMask& mask, const Box& box) {
    const Bitmap src = rle_decode(mask);
    Bitmap dst(src.size);
    for (int y = 0; y < src.size.height; ++y) {
        const double cy = double(y) + 0.5;
        if (cy < box.y1 || cy >= box.y2) continue;
        for (int x = 0; x < src.size.width; ++x) {
            const double cx = double(x) + 0.5;
            if (cx < box.x1 || cx >= box.x2) continue;
            if (src.at(x, y)) dst.set(x, y, true);
        }
    }
    return rle_encode(dst);
}

}  // namespace

void validate_scene_spec(const SceneSpec& spec) {
    if (spec.image_count < 0) throw std::invalid_argument("image_count must be non-negative");
    if (!is_valid_size(spec.canvas)) throw std::invalid_argument("canvas must be at least 1x1");
    if (spec.min_instances < 0 || spec.max_instances < spec.min_instances) {
        throw std::invalid_argument("instance range is inverted");
    }
    if (spec.class_count < 1) throw std::invalid_argument("class_count must be positive");
    if (spec.min_instance_size < 2 || spec.max_instance_size < spec.min_instance_size) {
        throw std::invalid_argument("instance size range is invalid");
    }
    if (spec.max_instance_size >= std::min(spec.canvas.width, spec.canvas.height)) {
        throw std::invalid_argument("instances must fit inside the canvas");
    }
    const auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!rate_ok(spec.noise.false_positive_rate) || !rate_ok(spec.noise.miss_rate) ||
        !rate_ok(spec.noise.iou_jitter)) {
        throw std::invalid_argument("noise rates must lie in [0, 1]");
    }
    if (spec.noise.score_sigma < 0.0) throw std::invalid_argument("score_sigma must be >= 0");
    if (spec.proposals.per_instance < 0 || spec.proposals.random_count < 0) {
        throw std::invalid_argument("proposal counts must be non-negative");
    }
    if (spec.proposals.iou_spread < 0.0 || spec.proposals.iou_spread > 1.0) {
        throw std::invalid_argument("proposal iou_spread must lie in [0, 1]");
    }
    if (spec.anchors.enabled) {
        if (spec.anchors.stride < 1) throw std::invalid_argument("anchor stride must be positive");
        if (spec.anchors.scales.empty() || spec.anchors.aspect_ratios.empty()) {
            throw std::invalid_argument("anchor grid needs scales and aspect ratios");
        }
    }
}

std::vector<Anchor> make_anchor_grid(const ImageSize& canvas, const AnchorGridSpec& spec) {
    std::vector<Anchor> anchors;
    int index = 0;
    for (int cy = spec.stride / 2; cy < canvas.height; cy += spec.stride) {
        for (int cx = spec.stride / 2; cx < canvas.width; cx += spec.stride) {
            for (std::size_t s = 0; s < spec.scales.size(); ++s) {
                for (const double ratio : spec.aspect_ratios) {
                    const double scale = double(spec.scales[s]);
                    const double w = scale * std::sqrt(ratio);
                    const double h = scale / std::sqrt(ratio);
                    Anchor a;
                    a.box = Box{double(cx) - w / 2.0, double(cy) - h / 2.0,
                                double(cx) + w / 2.0, double(cy) + h / 2.0};
                    a.level = int(s);
                    a.index = index++;
                    anchors.push_back(a);
                }
            }
        }
    }
    return anchors;
}

Scene synth_generate(const SceneSpec& spec) {
    validate_scene_spec(spec);
    Scene scene;
    for (int c = 1; c <= spec.class_count; ++c) scene.gts.category_ids.push_back(c);

    scene.gts.images.resize(std::size_t(spec.image_count));
    scene.detections.resize(std::size_t(spec.image_count));
    scene.proposals.resize(std::size_t(spec.image_count));
    if (spec.anchors.enabled) scene.anchors.resize(std::size_t(spec.image_count));

    std::vector<double> iou_sums(std::size_t(spec.image_count), 0.0);
    std::vector<int> iou_counts(std::size_t(spec.image_count), 0);

    const std::ptrdiff_t n_images = spec.image_count;
#pragma omp parallel for schedule(dynamic) if (n_images > 1)
    for (std::ptrdiff_t idx = 0; idx < n_images; ++idx) {
        Rng rng(derive_seed(spec.rng_seed, std::uint64_t(idx)));
        GroundTruthImage img;
        img.image_id = int(idx);
        img.size = spec.canvas;

        const int n_instances = rng.uniform_int(spec.min_instances, spec.max_instances);
        for (int k = 0; k < n_instances; ++k) {
            GroundTruthInstance inst;
            const int w = rng.uniform_int(spec.min_instance_size, spec.max_instance_size);
            const int h = spec.square_instances
                              ? w
                              : rng.uniform_int(spec.min_instance_size, spec.max_instance_size);
            const int x = rng.uniform_int(0, spec.canvas.width - w);
            const int y = rng.uniform_int(0, spec.canvas.height - h);
            inst.box = Box{double(x), double(y), double(x + w), double(y + h)};
            inst.class_id = rng.uniform_int(1, spec.class_count);
            if (spec.generate_masks) inst.mask = ellipse_mask(inst.box, spec.canvas);
            img.instances.push_back(std::move(inst));
        }

        // noisy detections
        ImageDetections dets;
        dets.image_id = img.image_id;
        for (const auto& inst : img.instances) {
            const bool missed = rng.uniform() < spec.noise.miss_rate;
            const Box jittered = jitter_box(inst.box, spec.noise.iou_jitter, rng, spec.canvas);
            const double noise = rng.normal(0.0, spec.noise.score_sigma);
            if (!missed) {
                Detection det;
                det.box = jittered;
                det.class_id = inst.class_id;
                const double quality = box_iou(det.box, inst.box);
                det.score = std::clamp(quality + noise, 0.0, 1.0);
                if (spec.attach_detection_masks && inst.mask) {
                    det.mask = clip_mask_to_box(*inst.mask, det.box);
                }
                iou_sums[std::size_t(idx)] += quality;
                ++iou_counts[std::size_t(idx)];
                dets.detections.push_back(std::move(det));
            }
            if (rng.uniform() < spec.noise.false_positive_rate) {
                const int w = rng.uniform_int(spec.min_instance_size, spec.max_instance_size);
                const int h = rng.uniform_int(spec.min_instance_size, spec.max_instance_size);
                const int x = rng.uniform_int(0, spec.canvas.width - w);
                const int y = rng.uniform_int(0, spec.canvas.height - h);
                Detection fp;
                fp.box = Box{double(x), double(y), double(x + w), double(y + h)};
                fp.class_id = rng.uniform_int(1, spec.class_count);
                fp.score = std::clamp(rng.uniform(0.05, 0.5) + noise, 0.0, 1.0);
                if (spec.attach_detection_masks) {
                    fp.mask = ellipse_mask(fp.box, spec.canvas);
                }
                dets.detections.push_back(std::move(fp));
            }
        }

        // proposal ladder per instance plus unrelated boxes
        ImageProposals props;
        props.image_id = img.image_id;
        for (const auto& inst : img.instances) {
            for (int k = 0; k < spec.proposals.per_instance; ++k) {
                const double step =
                    spec.proposals.per_instance > 1
                        ? double(k) / double(spec.proposals.per_instance - 1)
                        : 0.0;
                const Box prop =
                    jitter_box(inst.box, step * spec.proposals.iou_spread, rng, spec.canvas);
                const double quality = box_iou(prop, inst.box);
                props.boxes.push_back(prop);
                props.objectness.push_back(
                    std::clamp(0.4 * quality + rng.uniform(0.0, 0.6), 0.0, 1.0));
            }
        }
        for (int k = 0; k < spec.proposals.random_count; ++k) {
            const int w = rng.uniform_int(spec.min_instance_size, spec.max_instance_size);
            const int h = rng.uniform_int(spec.min_instance_size, spec.max_instance_size);
            const int x = rng.uniform_int(0, spec.canvas.width - w);
            const int y = rng.uniform_int(0, spec.canvas.height - h);
            props.boxes.push_back(Box{double(x), double(y), double(x + w), double(y + h)});
            props.objectness.push_back(rng.uniform(0.0, 0.4));
        }

        scene.gts.images[std::size_t(idx)] = std::move(img);
        scene.detections[std::size_t(idx)] = std::move(dets);
        scene.proposals[std::size_t(idx)] = std::move(props);
        if (spec.anchors.enabled) {
            scene.anchors[std::size_t(idx)] =
                ImageAnchors{int(idx), make_anchor_grid(spec.canvas, spec.anchors)};
        }
    }

    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < iou_sums.size(); ++i) {
        sum += iou_sums[i];
        count += iou_counts[i];
    }
    scene.mean_detection_iou = count > 0 ? sum / double(count) : 0.0;
    scene.detection_count = count;
    return scene;
}

}  // namespace detkit
