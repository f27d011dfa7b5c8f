#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "detkit/core/detection.hpp"
#include "detkit/sampling/anchors.hpp"

namespace detkit {

// Input fails schema or semantic validation (CLI exit code 1). The message
// carries a JSON path such as "$.annotations[3].bbox".
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem-level failure (CLI exit code 2).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ImageProposals {
    int image_id = 0;
    std::vector<Box> boxes;
    std::vector<double> objectness;
};

struct ImageAnchors {
    int image_id = 0;
    std::vector<Anchor> anchors;
};

// A synthetic benchmark scene: ground truth plus detector-style byproducts.
struct Scene {
    GroundTruthSet gts;
    std::vector<ImageDetections> detections;
    std::vector<ImageProposals> proposals;
    std::vector<ImageAnchors> anchors;
    double mean_detection_iou = 0.0;
    int detection_count = 0;
};

// Annotation files carry images / annotations / categories; boxes travel as
// [x, y, w, h] and masks as run-length objects ({"size": [h, w], "counts":
// array-or-string}) or polygons, which are rasterised on load.
GroundTruthSet load_annotations(const std::filesystem::path& path);
void save_annotations(const GroundTruthSet& gts, const std::filesystem::path& path,
                      bool compressed_rle = false);

// Result files are flat arrays of {image_id, category_id, bbox, score,
// segmentation?, id?}; duplicate explicit ids are rejected. Entries group by
// image id in ascending order.
std::vector<ImageDetections> load_results(const std::filesystem::path& path);
void save_results(const std::vector<ImageDetections>& results,
                  const std::filesystem::path& path, bool compressed_rle = false);

Scene load_scene(const std::filesystem::path& path);
void save_scene(const Scene& scene, const std::filesystem::path& path,
                bool compressed_rle = false);

// File-backed probability grids for the mask stage, matched to detections by
// (image_id, category_id, exact box).
struct ProbMapEntry {
    int image_id = 0;
    int class_id = 0;
    Box box;
    int resolution = 0;
    std::vector<double> values;
    double predicted_mask_iou = 1.0;
};
std::vector<ProbMapEntry> load_prob_maps(const std::filesystem::path& path);

struct AugmentedResultFile {
    int scale_short_side = 0;
    bool flipped = false;
    std::vector<ImageDetections> results;
};
AugmentedResultFile load_augmented_results(const std::filesystem::path& path);

// Rasterise COCO-style polygon rings (even-odd, pixel-centre sampling).
InstanceMask polygons_to_mask(const std::vector<std::vector<double>>& polygons,
                              const ImageSize& canvas);

}  // namespace detkit
