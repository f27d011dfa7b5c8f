#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "detkit/eval/evaluator.hpp"
#include "detkit/sampling/anchors.hpp"
#include "detkit/sampling/sampler.hpp"
#include "detkit/suppression/nms.hpp"
#include "detkit/synth/generator.hpp"
#include "detkit/tta/merge.hpp"

namespace detkit {

struct CascadeStageConfig {
    double assign_iou_threshold = 0.5;
    std::string refiner = "identity";  // identity | snap_to_gt | fractional_step
    double beta = 0.5;                 // fractional_step only
};

struct PipelineConfig {
    std::string predictor = "gt-clip";  // gt-clip | zeros | file
    std::string prob_maps_path;         // file predictor input
    int mask_resolution = 28;           // grid resolution for the zeros predictor
    double paste_threshold = 0.5;
    bool rescore = false;               // multiply scores by the predicted mask quality
    int cascade_stages = 1;             // residual refinements applied to each grid
    double cascade_residual = 0.0;      // constant residual per stage
};

struct SampleMethodConfig {
    std::string method = "high_iou";  // high_iou | class_aware
    double class_iou_cut = 0.5;
    int class_total = 512;
};

struct EvalFileConfig {
    EvalMode mode = EvalMode::bbox;
    int max_dets = 100;
    std::vector<double> iou_thresholds;  // empty selects the standard ladder
};

struct IoConfig {
    bool compressed_rle = false;
};

// One schema-checked document configuring every stage; unknown keys are
// rejected with the offending JSON path.
struct RunConfig {
    NmsConfig nms;
    SamplerConfig sampler;
    SampleMethodConfig sample;
    AnchorMatchConfig anchors;
    std::vector<CascadeStageConfig> cascade;
    PipelineConfig pipeline;
    MergeConfig merge;
    EvalFileConfig eval;
    SceneSpec synth;
    IoConfig io;
};

RunConfig parse_run_config(const std::filesystem::path& path);
RunConfig default_run_config();

}  // namespace detkit
