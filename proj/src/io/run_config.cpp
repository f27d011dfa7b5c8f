#include "detkit/io/run_config.hpp"

#include <set>

#include "json_util.hpp"

namespace detkit {

using jsonutil::json;

namespace {

void reject_unknown(const json& obj, const std::string& path,
                    const std::set<std::string>& known) {
    if (!obj.is_object()) throw ValidationError(path + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (!known.count(key)) throw ValidationError(path + "." + key + ": unknown key");
    }
}

double number_in(const json& obj, const std::string& path, const std::string& key, double lo,
                 double hi, double fallback) {
    const json* j = jsonutil::member_opt(obj, path, key);
    if (!j) return fallback;
    const double v = jsonutil::as_number(*j, path + "." + key);
    if (v < lo || v > hi) {
        throw ValidationError(path + "." + key + ": outside [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
    }
    return v;
}

int int_min(const json& obj, const std::string& path, const std::string& key, int lo,
            int fallback) {
    const json* j = jsonutil::member_opt(obj, path, key);
    if (!j) return fallback;
    const int v = jsonutil::as_int(*j, path + "." + key);
    if (v < lo) {
        throw ValidationError(path + "." + key + ": must be at least " + std::to_string(lo));
    }
    return v;
}

bool bool_or(const json& obj, const std::string& path, const std::string& key, bool fallback) {
    const json* j = jsonutil::member_opt(obj, path, key);
    return j ? jsonutil::as_bool(*j, path + "." + key) : fallback;
}

std::string string_choice(const json& obj, const std::string& path, const std::string& key,
                          const std::set<std::string>& choices, const std::string& fallback) {
    const json* j = jsonutil::member_opt(obj, path, key);
    if (!j) return fallback;
    const std::string v = jsonutil::as_string(*j, path + "." + key);
    if (!choices.count(v)) throw ValidationError(path + "." + key + ": unsupported value " + v);
    return v;
}

NmsConfig parse_nms(const json& obj, const std::string& path, NmsConfig base) {
    reject_unknown(obj, path,
                   {"iou_threshold", "mode", "sigma", "score_floor", "class_agnostic"});
    NmsConfig cfg = base;
    cfg.iou_threshold = number_in(obj, path, "iou_threshold", 1e-9, 1.0, cfg.iou_threshold);
    const std::string mode = string_choice(obj, path, "mode",
                                           {"hard", "soft_linear", "soft_gaussian"},
                                           cfg.mode == NmsMode::hard          ? "hard"
                                           : cfg.mode == NmsMode::soft_linear ? "soft_linear"
                                                                              : "soft_gaussian");
    cfg.mode = mode == "hard"          ? NmsMode::hard
               : mode == "soft_linear" ? NmsMode::soft_linear
                                       : NmsMode::soft_gaussian;
    cfg.sigma = number_in(obj, path, "sigma", 1e-9, 1e9, cfg.sigma);
    cfg.score_floor = number_in(obj, path, "score_floor", 0.0, 1.0, cfg.score_floor);
    cfg.class_agnostic = bool_or(obj, path, "class_agnostic", cfg.class_agnostic);
    try {
        validate_nms_config(cfg);
    } catch (const std::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
    return cfg;
}

}  // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.cascade = {{0.5, "identity", 0.5}, {0.7, "identity", 0.5}};
    return cfg;
}

RunConfig parse_run_config(const std::filesystem::path& path) {
    const json root = jsonutil::load_file(path);
    if (!root.is_object()) throw ValidationError("$: expected an object");
    reject_unknown(root, "$",
                   {"nms", "sampler", "sample", "anchors", "cascade", "pipeline", "merge", "eval",
                    "synth", "io"});
    RunConfig cfg = default_run_config();

    if (const json* j = jsonutil::member_opt(root, "$", "nms")) {
        cfg.nms = parse_nms(*j, "$.nms", cfg.nms);
    }

    if (const json* j = jsonutil::member_opt(root, "$", "sampler")) {
        const std::string p = "$.sampler";
        reject_unknown(*j, p,
                       {"critical_iou", "relaxed_nms_threshold", "batch_size_per_image",
                        "positive_fraction", "rng_seed", "background_ceiling",
                        "baseline_nms_threshold"});
        cfg.sampler.critical_iou = number_in(*j, p, "critical_iou", 1e-9, 1.0 - 1e-9,
                                             cfg.sampler.critical_iou);
        cfg.sampler.relaxed_nms_threshold =
            number_in(*j, p, "relaxed_nms_threshold", 1e-9, 1.0, cfg.sampler.relaxed_nms_threshold);
        cfg.sampler.batch_size_per_image =
            int_min(*j, p, "batch_size_per_image", 1, cfg.sampler.batch_size_per_image);
        cfg.sampler.positive_fraction = number_in(*j, p, "positive_fraction", 1e-9, 1.0 - 1e-9,
                                                  cfg.sampler.positive_fraction);
        if (const json* seed = jsonutil::member_opt(*j, p, "rng_seed")) {
            cfg.sampler.rng_seed = jsonutil::as_u64(*seed, p + ".rng_seed");
        }
        cfg.sampler.background_ceiling =
            number_in(*j, p, "background_ceiling", 0.0, 1.0, cfg.sampler.background_ceiling);
        cfg.sampler.baseline_nms_threshold = number_in(*j, p, "baseline_nms_threshold", 1e-9, 1.0,
                                                       cfg.sampler.baseline_nms_threshold);
        try {
            validate_sampler_config(cfg.sampler);
        } catch (const std::exception& e) {
            throw ValidationError(p + ": " + e.what());
        }
    }

    if (const json* j = jsonutil::member_opt(root, "$", "sample")) {
        const std::string p = "$.sample";
        reject_unknown(*j, p, {"method", "class_iou_cut", "class_total"});
        cfg.sample.method =
            string_choice(*j, p, "method", {"high_iou", "class_aware"}, cfg.sample.method);
        cfg.sample.class_iou_cut =
            number_in(*j, p, "class_iou_cut", 0.0, 1.0, cfg.sample.class_iou_cut);
        cfg.sample.class_total = int_min(*j, p, "class_total", 0, cfg.sample.class_total);
    }

    if (const json* j = jsonutil::member_opt(root, "$", "anchors")) {
        const std::string p = "$.anchors";
        reject_unknown(*j, p, {"top_k", "positive_iou", "background_iou"});
        cfg.anchors.top_k = int_min(*j, p, "top_k", 1, cfg.anchors.top_k);
        cfg.anchors.positive_iou =
            number_in(*j, p, "positive_iou", 0.0, 1.0, cfg.anchors.positive_iou);
        cfg.anchors.background_iou =
            number_in(*j, p, "background_iou", 0.0, 1.0, cfg.anchors.background_iou);
        if (cfg.anchors.background_iou > cfg.anchors.positive_iou) {
            throw ValidationError(p + ".background_iou: exceeds positive_iou");
        }
    }

    if (const json* j = jsonutil::member_opt(root, "$", "cascade")) {
        const std::string p = "$.cascade";
        reject_unknown(*j, p, {"stages"});
        if (const json* stages = jsonutil::member_opt(*j, p, "stages")) {
            const json& arr = jsonutil::as_array(*stages, p + ".stages");
            cfg.cascade.clear();
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const std::string sp = p + ".stages[" + std::to_string(i) + "]";
                reject_unknown(arr[i], sp, {"assign_iou_threshold", "refiner", "beta"});
                CascadeStageConfig stage;
                stage.assign_iou_threshold =
                    number_in(arr[i], sp, "assign_iou_threshold", 1e-9, 1.0, 0.5);
                stage.refiner = string_choice(arr[i], sp, "refiner",
                                              {"identity", "snap_to_gt", "fractional_step"},
                                              "identity");
                stage.beta = number_in(arr[i], sp, "beta", 1e-9, 1.0 - 1e-9, 0.5);
                if (!cfg.cascade.empty() &&
                    stage.assign_iou_threshold < cfg.cascade.back().assign_iou_threshold) {
                    throw ValidationError(sp + ".assign_iou_threshold: thresholds must not decrease");
                }
                cfg.cascade.push_back(stage);
            }
        }
    }

    if (const json* j = jsonutil::member_opt(root, "$", "pipeline")) {
        const std::string p = "$.pipeline";
        reject_unknown(*j, p,
                       {"predictor", "prob_maps_path", "mask_resolution", "paste_threshold",
                        "rescore", "cascade_stages", "cascade_residual"});
        cfg.pipeline.predictor = string_choice(*j, p, "predictor", {"gt-clip", "zeros", "file"},
                                               cfg.pipeline.predictor);
        if (const json* v = jsonutil::member_opt(*j, p, "prob_maps_path")) {
            cfg.pipeline.prob_maps_path = jsonutil::as_string(*v, p + ".prob_maps_path");
        }
        cfg.pipeline.mask_resolution =
            int_min(*j, p, "mask_resolution", 1, cfg.pipeline.mask_resolution);
        cfg.pipeline.paste_threshold =
            number_in(*j, p, "paste_threshold", 0.0, 1.0, cfg.pipeline.paste_threshold);
        cfg.pipeline.rescore = bool_or(*j, p, "rescore", cfg.pipeline.rescore);
        cfg.pipeline.cascade_stages = int_min(*j, p, "cascade_stages", 0, cfg.pipeline.cascade_stages);
        cfg.pipeline.cascade_residual =
            number_in(*j, p, "cascade_residual", -50.0, 50.0, cfg.pipeline.cascade_residual);
        if (cfg.pipeline.predictor == "file" && cfg.pipeline.prob_maps_path.empty()) {
            throw ValidationError(p + ".prob_maps_path: required for the file predictor");
        }
    }

    if (const json* j = jsonutil::member_opt(root, "$", "merge")) {
        const std::string p = "$.merge";
        reject_unknown(*j, p,
                       {"suppression", "normalize_scores", "max_dets", "weighted_box_fusion"});
        if (const json* s = jsonutil::member_opt(*j, p, "suppression")) {
            cfg.merge.suppression = parse_nms(*s, p + ".suppression", cfg.merge.suppression);
        }
        cfg.merge.normalize_scores = bool_or(*j, p, "normalize_scores", cfg.merge.normalize_scores);
        cfg.merge.max_dets = int_min(*j, p, "max_dets", 1, cfg.merge.max_dets);
        cfg.merge.weighted_box_fusion =
            bool_or(*j, p, "weighted_box_fusion", cfg.merge.weighted_box_fusion);
    }

    if (const json* j = jsonutil::member_opt(root, "$", "eval")) {
        const std::string p = "$.eval";
        reject_unknown(*j, p, {"mode", "max_dets", "iou_thresholds"});
        const std::string mode = string_choice(*j, p, "mode", {"bbox", "segm"},
                                               cfg.eval.mode == EvalMode::bbox ? "bbox" : "segm");
        cfg.eval.mode = mode == "bbox" ? EvalMode::bbox : EvalMode::segm;
        cfg.eval.max_dets = int_min(*j, p, "max_dets", 1, cfg.eval.max_dets);
        if (const json* thr = jsonutil::member_opt(*j, p, "iou_thresholds")) {
            const json& arr = jsonutil::as_array(*thr, p + ".iou_thresholds");
            cfg.eval.iou_thresholds.clear();
            for (std::size_t i = 0; i < arr.size(); ++i) {
                cfg.eval.iou_thresholds.push_back(
                    jsonutil::as_number(arr[i], p + ".iou_thresholds[" + std::to_string(i) + "]"));
            }
            EvalConfig check = EvalConfig::defaults(cfg.eval.mode);
            check.iou_thresholds = cfg.eval.iou_thresholds;
            try {
                validate_eval_config(check);
            } catch (const std::exception& e) {
                throw ValidationError(p + ".iou_thresholds: " + e.what());
            }
        }
    }

    if (const json* j = jsonutil::member_opt(root, "$", "synth")) {
        const std::string p = "$.synth";
        reject_unknown(*j, p,
                       {"rng_seed", "image_count", "canvas", "instances_per_image", "class_count",
                        "instance_size", "square_instances", "generate_masks",
                        "attach_detection_masks", "noise", "proposals", "anchors"});
        if (const json* seed = jsonutil::member_opt(*j, p, "rng_seed")) {
            cfg.synth.rng_seed = jsonutil::as_u64(*seed, p + ".rng_seed");
        }
        cfg.synth.image_count = int_min(*j, p, "image_count", 0, cfg.synth.image_count);
        if (const json* canvas = jsonutil::member_opt(*j, p, "canvas")) {
            reject_unknown(*canvas, p + ".canvas", {"width", "height"});
            cfg.synth.canvas.width = int_min(*canvas, p + ".canvas", "width", 1, cfg.synth.canvas.width);
            cfg.synth.canvas.height =
                int_min(*canvas, p + ".canvas", "height", 1, cfg.synth.canvas.height);
        }
        if (const json* range = jsonutil::member_opt(*j, p, "instances_per_image")) {
            const json& arr = jsonutil::as_array(*range, p + ".instances_per_image");
            if (arr.size() != 2) {
                throw ValidationError(p + ".instances_per_image: expected [min, max]");
            }
            cfg.synth.min_instances = jsonutil::as_int(arr[0], p + ".instances_per_image[0]");
            cfg.synth.max_instances = jsonutil::as_int(arr[1], p + ".instances_per_image[1]");
        }
        cfg.synth.class_count = int_min(*j, p, "class_count", 1, cfg.synth.class_count);
        if (const json* range = jsonutil::member_opt(*j, p, "instance_size")) {
            const json& arr = jsonutil::as_array(*range, p + ".instance_size");
            if (arr.size() != 2) throw ValidationError(p + ".instance_size: expected [min, max]");
            cfg.synth.min_instance_size = jsonutil::as_int(arr[0], p + ".instance_size[0]");
            cfg.synth.max_instance_size = jsonutil::as_int(arr[1], p + ".instance_size[1]");
        }
        cfg.synth.square_instances = bool_or(*j, p, "square_instances", cfg.synth.square_instances);
        cfg.synth.generate_masks = bool_or(*j, p, "generate_masks", cfg.synth.generate_masks);
        cfg.synth.attach_detection_masks =
            bool_or(*j, p, "attach_detection_masks", cfg.synth.attach_detection_masks);
        if (const json* noise = jsonutil::member_opt(*j, p, "noise")) {
            const std::string np = p + ".noise";
            reject_unknown(*noise, np,
                           {"iou_jitter", "score_sigma", "false_positive_rate", "miss_rate"});
            cfg.synth.noise.iou_jitter =
                number_in(*noise, np, "iou_jitter", 0.0, 1.0, cfg.synth.noise.iou_jitter);
            cfg.synth.noise.score_sigma =
                number_in(*noise, np, "score_sigma", 0.0, 10.0, cfg.synth.noise.score_sigma);
            cfg.synth.noise.false_positive_rate = number_in(
                *noise, np, "false_positive_rate", 0.0, 1.0, cfg.synth.noise.false_positive_rate);
            cfg.synth.noise.miss_rate =
                number_in(*noise, np, "miss_rate", 0.0, 1.0, cfg.synth.noise.miss_rate);
        }
        if (const json* props = jsonutil::member_opt(*j, p, "proposals")) {
            const std::string pp = p + ".proposals";
            reject_unknown(*props, pp, {"per_instance", "random_count", "iou_spread"});
            cfg.synth.proposals.per_instance =
                int_min(*props, pp, "per_instance", 0, cfg.synth.proposals.per_instance);
            cfg.synth.proposals.random_count =
                int_min(*props, pp, "random_count", 0, cfg.synth.proposals.random_count);
            cfg.synth.proposals.iou_spread =
                number_in(*props, pp, "iou_spread", 0.0, 1.0, cfg.synth.proposals.iou_spread);
        }
        if (const json* anchors = jsonutil::member_opt(*j, p, "anchors")) {
            const std::string ap = p + ".anchors";
            reject_unknown(*anchors, ap, {"enabled", "stride", "scales", "aspect_ratios"});
            cfg.synth.anchors.enabled = bool_or(*anchors, ap, "enabled", cfg.synth.anchors.enabled);
            cfg.synth.anchors.stride = int_min(*anchors, ap, "stride", 1, cfg.synth.anchors.stride);
            if (const json* scales = jsonutil::member_opt(*anchors, ap, "scales")) {
                const json& arr = jsonutil::as_array(*scales, ap + ".scales");
                cfg.synth.anchors.scales.clear();
                for (std::size_t i = 0; i < arr.size(); ++i) {
                    const int s = jsonutil::as_int(arr[i], ap + ".scales[" + std::to_string(i) + "]");
                    if (s < 1) throw ValidationError(ap + ".scales: must be positive");
                    cfg.synth.anchors.scales.push_back(s);
                }
            }
            if (const json* ratios = jsonutil::member_opt(*anchors, ap, "aspect_ratios")) {
                const json& arr = jsonutil::as_array(*ratios, ap + ".aspect_ratios");
                cfg.synth.anchors.aspect_ratios.clear();
                for (std::size_t i = 0; i < arr.size(); ++i) {
                    const double r = jsonutil::as_number(
                        arr[i], ap + ".aspect_ratios[" + std::to_string(i) + "]");
                    if (r <= 0.0) throw ValidationError(ap + ".aspect_ratios: must be positive");
                    cfg.synth.anchors.aspect_ratios.push_back(r);
                }
            }
        }
        try {
            validate_scene_spec(cfg.synth);
        } catch (const std::exception& e) {
            throw ValidationError(p + ": " + std::string(e.what()));
        }
    }

    if (const json* j = jsonutil::member_opt(root, "$", "io")) {
        reject_unknown(*j, "$.io", {"compressed_rle"});
        cfg.io.compressed_rle = bool_or(*j, "$.io", "compressed_rle", cfg.io.compressed_rle);
    }

    return cfg;
}

}  // namespace detkit
