#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "detkit/core/rng.hpp"
#include "detkit/eval/evaluator.hpp"
#include "detkit/io/coco.hpp"
#include "detkit/io/log.hpp"
#include "detkit/io/run_config.hpp"
#include "detkit/pipeline/two_pass.hpp"
#include "detkit/sampling/cascade.hpp"
#include "detkit/sampling/sampler.hpp"
#include "detkit/suppression/nms.hpp"
#include "detkit/synth/generator.hpp"
#include "detkit/tta/merge.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    bool compressed_rle = false;
};

detkit::RunConfig load_config(const CommonOptions& opts) {
    detkit::RunConfig cfg = opts.config_path.empty()
                                ? detkit::default_run_config()
                                : detkit::parse_run_config(opts.config_path);
    if (opts.seed) {
        cfg.sampler.rng_seed = *opts.seed;
        cfg.synth.rng_seed = *opts.seed;
    }
    if (opts.compressed_rle) cfg.io.compressed_rle = true;
    return cfg;
}

void apply_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

std::map<int, const detkit::GroundTruthImage*> index_images(const detkit::GroundTruthSet& gts) {
    std::map<int, const detkit::GroundTruthImage*> out;
    for (const auto& img : gts.images) out[img.image_id] = &img;
    return out;
}

void write_text(const std::string& text, const fs::path& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw detkit::IoError("cannot open " + path.string() + " for writing");
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
}

// ---------------------------------------------------------------------------

int cmd_nms(const CommonOptions& opts, const std::string& results_path,
            const std::string& out_path) {
    const detkit::RunConfig cfg = load_config(opts);
    std::vector<detkit::ImageDetections> results = detkit::load_results(results_path);
    const std::ptrdiff_t n = std::ptrdiff_t(results.size());
#pragma omp parallel for schedule(dynamic) if (n > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        results[std::size_t(i)].detections =
            detkit::nms(results[std::size_t(i)].detections, cfg.nms);
    }
    detkit::save_results(results, out_path, cfg.io.compressed_rle);
    detkit::log(detkit::LogLevel::info, "suppression done for " + std::to_string(n) + " images");
    return 0;
}

int cmd_sample(const CommonOptions& opts, const std::string& scene_path,
               const std::string& out_path) {
    const detkit::RunConfig cfg = load_config(opts);
    const detkit::Scene scene = detkit::load_scene(scene_path);
    const auto images = index_images(scene.gts);

    struct ImageOutput {
        int image_id = 0;
        json payload;
    };
    std::vector<ImageOutput> outputs(scene.proposals.size());
    const std::ptrdiff_t n = std::ptrdiff_t(scene.proposals.size());
#pragma omp parallel for schedule(dynamic) if (n > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& image_props = scene.proposals[std::size_t(i)];
        const auto* gt_img = images.at(image_props.image_id);
        const auto proposals = detkit::annotate_proposals(
            image_props.boxes, image_props.objectness, gt_img->instances);

        detkit::SamplerConfig sampler_cfg = cfg.sampler;
        sampler_cfg.rng_seed =
            detkit::derive_seed(cfg.sampler.rng_seed, std::uint64_t(image_props.image_id));

        json out_img;
        out_img["image_id"] = image_props.image_id;
        std::vector<detkit::TrainingSample> samples;
        if (cfg.sample.method == "high_iou") {
            samples = detkit::high_iou_sample(proposals, gt_img->instances, sampler_cfg);
        } else {
            detkit::ClassSamplingPlan plan = detkit::class_aware_plan(
                proposals, gt_img->instances, cfg.sample.class_iou_cut);
            samples = detkit::class_aware_sample(proposals, gt_img->instances, plan,
                                                 cfg.sample.class_total, sampler_cfg.rng_seed,
                                                 cfg.sample.class_iou_cut);
            json alpha = json::object();
            for (const auto& [cls, a] : plan.alpha) alpha[std::to_string(cls)] = a;
            json quota = json::object();
            for (const auto& [cls, q] : plan.per_class_quota) quota[std::to_string(cls)] = q;
            out_img["alpha"] = std::move(alpha);
            out_img["per_class_quota"] = std::move(quota);
        }
        json arr = json::array();
        for (const auto& s : samples) {
            json entry;
            const detkit::Box& b = s.proposal.box;
            entry["bbox"] = json::array({b.x1, b.y1, b.x2 - b.x1, b.y2 - b.y1});
            entry["objectness"] = s.proposal.objectness;
            entry["best_gt_iou"] = s.proposal.best_gt_iou;
            entry["label"] = s.label == detkit::SampleLabel::positive ? "positive" : "background";
            if (s.label == detkit::SampleLabel::positive) {
                entry["class_id"] = s.class_id;
                entry["matched_gt_index"] = *s.matched_gt_index;
            }
            arr.push_back(std::move(entry));
        }
        out_img["samples"] = std::move(arr);
        outputs[std::size_t(i)] = ImageOutput{image_props.image_id, std::move(out_img)};
    }

    std::sort(outputs.begin(), outputs.end(),
              [](const ImageOutput& a, const ImageOutput& b) { return a.image_id < b.image_id; });
    json root;
    root["images"] = json::array();
    for (auto& o : outputs) root["images"].push_back(std::move(o.payload));
    write_text(root.dump(2) + "\n", out_path);
    detkit::log(detkit::LogLevel::info, "sampled " + std::to_string(n) + " images");
    return 0;
}

int cmd_pipeline(const CommonOptions& opts, const std::string& results_path,
                 const std::string& annotations_path, const std::string& out_path) {
    const detkit::RunConfig cfg = load_config(opts);
    const detkit::GroundTruthSet gts = detkit::load_annotations(annotations_path);
    const auto images = index_images(gts);
    std::vector<detkit::ImageDetections> results = detkit::load_results(results_path);
    for (const auto& img : results) {
        if (!images.count(img.image_id)) {
            throw detkit::ValidationError("results reference an unknown image id " +
                                          std::to_string(img.image_id));
        }
    }

    detkit::MaskPredictor predictor;
    if (cfg.pipeline.predictor == "gt-clip") {
        predictor = detkit::gt_clip_predictor(gts);
    } else if (cfg.pipeline.predictor == "zeros") {
        predictor = detkit::zeros_predictor(cfg.pipeline.mask_resolution);
    } else {
        const auto entries = detkit::load_prob_maps(cfg.pipeline.prob_maps_path);
        struct Key {
            int image_id;
            int class_id;
            detkit::Box box;
            bool operator<(const Key& o) const {
                if (image_id != o.image_id) return image_id < o.image_id;
                if (class_id != o.class_id) return class_id < o.class_id;
                return detkit::box_less(box, o.box);
            }
        };
        auto table = std::make_shared<std::map<Key, detkit::MaskPrediction>>();
        for (const auto& e : entries) {
            detkit::MaskPrediction pred;
            pred.prob_map.resolution = e.resolution;
            pred.prob_map.values = e.values;
            pred.prob_map.reference_box = e.box;
            pred.predicted_mask_iou = e.predicted_mask_iou;
            (*table)[Key{e.image_id, e.class_id, e.box}] = std::move(pred);
        }
        predictor = [table](int image_id, const detkit::Box& box,
                            int class_id) -> std::optional<detkit::MaskPrediction> {
            const auto it = table->find({image_id, class_id, box});
            if (it == table->end()) return std::nullopt;
            return it->second;
        };
    }

    if (cfg.pipeline.cascade_stages > 0 && cfg.pipeline.cascade_residual != 0.0) {
        const auto refiner = detkit::constant_residual_refiner(cfg.pipeline.cascade_residual);
        const int stages = cfg.pipeline.cascade_stages;
        const detkit::MaskPredictor base = std::move(predictor);
        predictor = [base, refiner, stages](int image_id, const detkit::Box& box, int class_id)
            -> std::optional<detkit::MaskPrediction> {
            auto pred = base(image_id, box, class_id);
            if (!pred) return pred;
            for (int s = 0; s < stages; ++s) {
                pred->prob_map = detkit::mask_cascade_refine(pred->prob_map, refiner);
            }
            return pred;
        };
    }

    std::size_t failures = 0;
    const std::ptrdiff_t n = std::ptrdiff_t(results.size());
#pragma omp parallel for schedule(dynamic) if (n > 1) reduction(+ : failures)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        auto& img = results[std::size_t(i)];
        const auto canvas = images.at(img.image_id)->size;
        auto two = detkit::two_pass(img.image_id, img.detections, predictor, canvas,
                                    cfg.pipeline.paste_threshold);
        if (cfg.pipeline.rescore) {
            for (std::size_t d = 0; d < two.detections.size(); ++d) {
                if (two.detections[d].mask) {
                    two.detections[d] =
                        detkit::mask_rescore(two.detections[d], two.predicted_mask_iou[d]);
                }
            }
        }
        failures += two.failed.size();
        img.detections = std::move(two.detections);
    }
    if (failures > 0) {
        detkit::log(detkit::LogLevel::warn,
                    std::to_string(failures) + " detections left without a mask");
    }
    detkit::save_results(results, out_path, cfg.io.compressed_rle);
    return 0;
}

int cmd_tta_merge(const CommonOptions& opts, const std::string& annotations_path,
                  const std::vector<std::string>& augmented_paths, const std::string& out_path) {
    const detkit::RunConfig cfg = load_config(opts);
    const detkit::GroundTruthSet gts = detkit::load_annotations(annotations_path);
    const auto images = index_images(gts);

    std::vector<detkit::AugmentedResultFile> files;
    files.reserve(augmented_paths.size());
    for (const auto& path : augmented_paths) {
        files.push_back(detkit::load_augmented_results(path));
        for (const auto& img : files.back().results) {
            if (!images.count(img.image_id)) {
                throw detkit::ValidationError(path + ": unknown image id " +
                                              std::to_string(img.image_id));
            }
        }
    }

    std::vector<int> image_ids;
    for (const auto& [id, img] : images) image_ids.push_back(id);

    std::vector<detkit::ImageDetections> merged(image_ids.size());
    const std::ptrdiff_t n = std::ptrdiff_t(image_ids.size());
#pragma omp parallel for schedule(dynamic) if (n > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const int image_id = image_ids[std::size_t(i)];
        std::vector<detkit::AugmentedResult> per_image;
        for (const auto& file : files) {
            detkit::AugmentedResult r;
            r.image_id = image_id;
            r.scale_short_side = file.scale_short_side;
            r.flipped = file.flipped;
            r.original = images.at(image_id)->size;
            for (const auto& img : file.results) {
                if (img.image_id == image_id) r.detections = img.detections;
            }
            per_image.push_back(std::move(r));
        }
        merged[std::size_t(i)] =
            detkit::ImageDetections{image_id, detkit::tta_merge(per_image, cfg.merge)};
    }
    detkit::save_results(merged, out_path, cfg.io.compressed_rle);
    return 0;
}

int cmd_ensemble(const CommonOptions& opts, const std::vector<std::string>& model_paths,
                 const std::string& out_path) {
    const detkit::RunConfig cfg = load_config(opts);
    std::vector<std::vector<detkit::ImageDetections>> models;
    models.reserve(model_paths.size());
    std::map<int, bool> image_ids;
    for (const auto& path : model_paths) {
        models.push_back(detkit::load_results(path));
        for (const auto& img : models.back()) image_ids[img.image_id] = true;
    }
    std::vector<int> ids;
    for (const auto& [id, present] : image_ids) ids.push_back(id);

    std::vector<detkit::ImageDetections> merged(ids.size());
    const std::ptrdiff_t n = std::ptrdiff_t(ids.size());
#pragma omp parallel for schedule(dynamic) if (n > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const int image_id = ids[std::size_t(i)];
        std::vector<detkit::ModelResult> inputs;
        for (std::size_t m = 0; m < models.size(); ++m) {
            detkit::ModelResult mr;
            mr.model_id = model_paths[m];
            for (const auto& img : models[m]) {
                if (img.image_id == image_id) mr.detections = img.detections;
            }
            inputs.push_back(std::move(mr));
        }
        merged[std::size_t(i)] =
            detkit::ImageDetections{image_id, detkit::ensemble(inputs, cfg.merge)};
    }
    detkit::save_results(merged, out_path, cfg.io.compressed_rle);
    return 0;
}

json summary_to_json(const detkit::EvalSummary& s) {
    const auto put = [](const std::optional<double>& v) {
        return v ? json(*v) : json(nullptr);
    };
    json j;
    j["ap"] = put(s.ap);
    j["ap50"] = put(s.ap50);
    j["ap75"] = put(s.ap75);
    j["ap_s"] = put(s.ap_s);
    j["ap_m"] = put(s.ap_m);
    j["ap_l"] = put(s.ap_l);
    return j;
}

int cmd_eval(const CommonOptions& opts, const std::string& annotations_path,
             const std::string& results_path, const std::string& out_path) {
    const detkit::RunConfig cfg = load_config(opts);
    const detkit::GroundTruthSet gts = detkit::load_annotations(annotations_path);
    const auto results = detkit::load_results(results_path);

    detkit::EvalConfig eval_cfg = detkit::EvalConfig::defaults(cfg.eval.mode);
    eval_cfg.max_dets = cfg.eval.max_dets;
    if (!cfg.eval.iou_thresholds.empty()) eval_cfg.iou_thresholds = cfg.eval.iou_thresholds;

    const detkit::EvalResult result = detkit::evaluate(results, gts, eval_cfg);

    const auto cell = [](const std::optional<double>& v) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%6.3f", v ? *v : -1.0);
        return std::string(buf);
    };
    std::string table;
    table += "mode        AP   AP.5  AP.75    APs    APm    APl\n";
    table += (cfg.eval.mode == detkit::EvalMode::bbox ? std::string("bbox ") : std::string("segm "));
    table += cell(result.summary.ap) + " " + cell(result.summary.ap50) + " " +
             cell(result.summary.ap75) + " " + cell(result.summary.ap_s) + " " +
             cell(result.summary.ap_m) + " " + cell(result.summary.ap_l) + "\n";
    std::fputs(table.c_str(), stdout);

    if (!out_path.empty()) {
        json root;
        root["mode"] = cfg.eval.mode == detkit::EvalMode::bbox ? "bbox" : "segm";
        root["summary"] = summary_to_json(result.summary);
        json per_class = json::object();
        for (const auto& [cls, s] : result.per_class) {
            per_class[std::to_string(cls)] = summary_to_json(s);
        }
        root["per_class"] = std::move(per_class);
        write_text(root.dump(2) + "\n", out_path);
    }
    return 0;
}

int cmd_synth(const CommonOptions& opts, const std::string& out_dir) {
    const detkit::RunConfig cfg = load_config(opts);
    const detkit::Scene scene = detkit::synth_generate(cfg.synth);
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw detkit::IoError("cannot create " + dir.string());
    detkit::save_annotations(scene.gts, dir / "annotations.json", cfg.io.compressed_rle);
    detkit::save_results(scene.detections, dir / "detections.json", cfg.io.compressed_rle);
    detkit::save_scene(scene, dir / "scene.json", cfg.io.compressed_rle);
    detkit::log(detkit::LogLevel::info,
                "mean detection IoU " + std::to_string(scene.mean_detection_iou) + " over " +
                    std::to_string(scene.detection_count) + " detections");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic detection post-processing toolkit"};
    app.require_subcommand(1);

    CommonOptions common;
    app.add_option("--config", common.config_path, "schema-validated configuration document")
        ->configurable(false);
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "override the configured RNG seeds");
    app.add_option("--threads", common.threads, "worker pool size (0 = all logical processors)");
    app.add_flag("--compressed-rle", common.compressed_rle,
                 "emit compressed run-length strings instead of count arrays");

    std::string results_path, annotations_path, scene_path, out_path;
    std::vector<std::string> inputs;

    auto* nms_cmd = app.add_subcommand("nms", "suppress duplicate detections per image");
    nms_cmd->add_option("--results", results_path, "detections JSON")->required();
    nms_cmd->add_option("--out", out_path, "output JSON")->required();

    auto* sample_cmd = app.add_subcommand("sample", "draw training samples from a scene");
    sample_cmd->add_option("--scene", scene_path, "scene JSON with proposals")->required();
    sample_cmd->add_option("--out", out_path, "output JSON")->required();

    auto* pipeline_cmd =
        app.add_subcommand("pipeline", "attach masks to detector boxes via an oracle predictor");
    pipeline_cmd->add_option("--results", results_path, "detections JSON")->required();
    pipeline_cmd->add_option("--annotations", annotations_path, "annotations JSON")->required();
    pipeline_cmd->add_option("--out", out_path, "output JSON")->required();

    auto* tta_cmd = app.add_subcommand("tta-merge", "merge augmented results per image");
    tta_cmd->add_option("--annotations", annotations_path, "annotations JSON")->required();
    tta_cmd->add_option("--out", out_path, "output JSON")->required();
    tta_cmd->add_option("inputs", inputs, "augmented result files")->required();

    auto* ensemble_cmd = app.add_subcommand("ensemble", "merge detections across models");
    ensemble_cmd->add_option("--out", out_path, "output JSON")->required();
    ensemble_cmd->add_option("inputs", inputs, "model result files")->required();

    auto* eval_cmd = app.add_subcommand("eval", "score results against annotations");
    eval_cmd->add_option("--annotations", annotations_path, "annotations JSON")->required();
    eval_cmd->add_option("--results", results_path, "detections JSON")->required();
    eval_cmd->add_option("--out", out_path, "metrics JSON");

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic benchmark scene");
    synth_cmd->add_option("--out", out_path, "output directory")->required();

    // common options apply after the subcommand name as well
    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    if (seed_opt->count() > 0) common.seed = seed_value;
    apply_threads(common.threads);

    try {
        if (nms_cmd->parsed()) return cmd_nms(common, results_path, out_path);
        if (sample_cmd->parsed()) return cmd_sample(common, scene_path, out_path);
        if (pipeline_cmd->parsed()) {
            return cmd_pipeline(common, results_path, annotations_path, out_path);
        }
        if (tta_cmd->parsed()) return cmd_tta_merge(common, annotations_path, inputs, out_path);
        if (ensemble_cmd->parsed()) return cmd_ensemble(common, inputs, out_path);
        if (eval_cmd->parsed()) return cmd_eval(common, annotations_path, results_path, out_path);
        if (synth_cmd->parsed()) return cmd_synth(common, out_path);
    } catch (const detkit::IoError& e) {
        detkit::log(detkit::LogLevel::error, e.what());
        return 2;
    } catch (const detkit::ValidationError& e) {
        detkit::log(detkit::LogLevel::error, e.what());
        return 1;
    } catch (const std::exception& e) {
        detkit::log(detkit::LogLevel::error, e.what());
        return 1;
    }
    return 0;
}
