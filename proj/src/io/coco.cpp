#include "detkit/io/coco.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "detkit/io/rle_string.hpp"
#include "json_util.hpp"

namespace detkit {

using jsonutil::json;

namespace {

Box bbox_from_wire(const json& j, const std::string& path) {
    const json& arr = jsonutil::as_array(j, path);
    if (arr.size() != 4) throw ValidationError(path + ": expected [x, y, w, h]");
    double v[4];
    for (std::size_t i = 0; i < 4; ++i) {
        v[i] = jsonutil::as_number(arr[i], path + "[" + std::to_string(i) + "]");
    }
    if (v[2] < 0.0 || v[3] < 0.0) throw ValidationError(path + ": negative extent");
    return Box{v[0], v[1], v[0] + v[2], v[1] + v[3]};
}

json bbox_to_wire(const Box& b) {
    return json::array({b.x1, b.y1, b.x2 - b.x1, b.y2 - b.y1});
}

InstanceMask mask_from_wire(const json& j, const std::string& path, const ImageSize* canvas) {
    if (j.is_object()) {
        const json& size = jsonutil::as_array(jsonutil::member(j, path, "size"), path + ".size");
        if (size.size() != 2) throw ValidationError(path + ".size: expected [height, width]");
        InstanceMask mask;
        mask.size.height = jsonutil::as_int(size[0], path + ".size[0]");
        mask.size.width = jsonutil::as_int(size[1], path + ".size[1]");
        const json& counts = jsonutil::member(j, path, "counts");
        if (counts.is_string()) {
            mask.counts = rle_counts_from_string(counts.get<std::string>());
        } else if (counts.is_array()) {
            for (std::size_t i = 0; i < counts.size(); ++i) {
                mask.counts.push_back(std::int64_t(
                    jsonutil::as_number(counts[i], path + ".counts[" + std::to_string(i) + "]")));
            }
        } else {
            throw ValidationError(path + ".counts: expected an array or string");
        }
        try {
            validate_mask(mask);
        } catch (const std::exception& e) {
            throw ValidationError(path + ": " + e.what());
        }
        return mask;
    }
    if (j.is_array()) {  // polygon rings
        if (!canvas) throw ValidationError(path + ": polygons need a known image size");
        std::vector<std::vector<double>> polys;
        for (std::size_t p = 0; p < j.size(); ++p) {
            const std::string ppath = path + "[" + std::to_string(p) + "]";
            const json& ring = jsonutil::as_array(j[p], ppath);
            if (ring.size() < 6 || ring.size() % 2 != 0) {
                throw ValidationError(ppath + ": polygon needs at least three x,y pairs");
            }
            std::vector<double> flat;
            for (std::size_t i = 0; i < ring.size(); ++i) {
                flat.push_back(jsonutil::as_number(ring[i], ppath + "[" + std::to_string(i) + "]"));
            }
            polys.push_back(std::move(flat));
        }
        return polygons_to_mask(polys, *canvas);
    }
    throw ValidationError(path + ": expected a run-length object or polygon list");
}

json mask_to_wire(const InstanceMask& mask, bool compressed) {
    json j;
    j["size"] = json::array({mask.size.height, mask.size.width});
    if (compressed) {
        j["counts"] = rle_counts_to_string(mask.counts);
    } else {
        j["counts"] = mask.counts;
    }
    return j;
}

void check_known_keys(const json& obj, const std::string& path,
                      const std::set<std::string>& known) {
    for (const auto& [key, value] : obj.items()) {
        if (!known.count(key)) throw ValidationError(path + "." + key + ": unknown key");
    }
}

}  // namespace

InstanceMask polygons_to_mask(const std::vector<std::vector<double>>& polygons,
                              const ImageSize& canvas) {
    Bitmap bitmap(canvas);
    for (const auto& ring : polygons) {
        const std::size_t n = ring.size() / 2;
        for (int y = 0; y < canvas.height; ++y) {
            const double py = double(y) + 0.5;
            for (int x = 0; x < canvas.width; ++x) {
                const double px = double(x) + 0.5;
                // even-odd crossing count
                bool inside = false;
                for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
                    const double xi = ring[2 * i], yi = ring[2 * i + 1];
                    const double xj = ring[2 * j], yj = ring[2 * j + 1];
                    if ((yi > py) != (yj > py) &&
                        px < (xj - xi) * (py - yi) / (yj - yi) + xi) {
                        inside = !inside;
                    }
                }
                if (inside) bitmap.set(x, y, true);
            }
        }
    }
    return rle_encode(bitmap);
}

namespace {

GroundTruthSet annotations_from_json(const json& root) {
    if (!root.is_object()) throw ValidationError("$: expected an object");
    check_known_keys(root, "$", {"images", "annotations", "categories", "info", "licenses"});

    GroundTruthSet out;
    std::map<int, std::size_t> image_index;
    const json* images = jsonutil::member_opt(root, "$", "images");
    if (images) {
        const json& arr = jsonutil::as_array(*images, "$.images");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string ipath = "$.images[" + std::to_string(i) + "]";
            const json& img = arr[i];
            if (!img.is_object()) throw ValidationError(ipath + ": expected an object");
            check_known_keys(img, ipath, {"id", "width", "height", "file_name"});
            GroundTruthImage gi;
            gi.image_id = jsonutil::as_int(jsonutil::member(img, ipath, "id"), ipath + ".id");
            gi.size.width = jsonutil::as_int(jsonutil::member(img, ipath, "width"), ipath + ".width");
            gi.size.height =
                jsonutil::as_int(jsonutil::member(img, ipath, "height"), ipath + ".height");
            if (!is_valid_size(gi.size)) throw ValidationError(ipath + ": non-positive size");
            if (image_index.count(gi.image_id)) {
                throw ValidationError(ipath + ".id: duplicate image id");
            }
            image_index[gi.image_id] = out.images.size();
            out.images.push_back(std::move(gi));
        }
    }

    const json* categories = jsonutil::member_opt(root, "$", "categories");
    if (categories) {
        const json& arr = jsonutil::as_array(*categories, "$.categories");
        std::set<int> seen;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string cpath = "$.categories[" + std::to_string(i) + "]";
            const json& cat = arr[i];
            if (!cat.is_object()) throw ValidationError(cpath + ": expected an object");
            check_known_keys(cat, cpath, {"id", "name", "supercategory"});
            const int id = jsonutil::as_int(jsonutil::member(cat, cpath, "id"), cpath + ".id");
            if (!seen.insert(id).second) throw ValidationError(cpath + ".id: duplicate category");
            out.category_ids.push_back(id);
        }
        std::sort(out.category_ids.begin(), out.category_ids.end());
    }

    const json* annotations = jsonutil::member_opt(root, "$", "annotations");
    if (annotations) {
        const json& arr = jsonutil::as_array(*annotations, "$.annotations");
        std::set<int> seen_ids;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string apath = "$.annotations[" + std::to_string(i) + "]";
            const json& ann = arr[i];
            if (!ann.is_object()) throw ValidationError(apath + ": expected an object");
            check_known_keys(ann, apath,
                             {"id", "image_id", "category_id", "bbox", "segmentation", "iscrowd",
                              "area"});
            if (const json* id = jsonutil::member_opt(ann, apath, "id")) {
                const int v = jsonutil::as_int(*id, apath + ".id");
                if (!seen_ids.insert(v).second) {
                    throw ValidationError(apath + ".id: duplicate annotation id");
                }
            }
            const int image_id =
                jsonutil::as_int(jsonutil::member(ann, apath, "image_id"), apath + ".image_id");
            const auto it = image_index.find(image_id);
            if (it == image_index.end()) {
                throw ValidationError(apath + ".image_id: unknown image");
            }
            GroundTruthImage& img = out.images[it->second];
            GroundTruthInstance inst;
            inst.class_id = jsonutil::as_int(jsonutil::member(ann, apath, "category_id"),
                                             apath + ".category_id");
            if (!out.category_ids.empty() &&
                !std::binary_search(out.category_ids.begin(), out.category_ids.end(),
                                    inst.class_id)) {
                throw ValidationError(apath + ".category_id: not in categories");
            }
            inst.box = bbox_from_wire(jsonutil::member(ann, apath, "bbox"), apath + ".bbox");
            if (const json* crowd = jsonutil::member_opt(ann, apath, "iscrowd")) {
                inst.iscrowd = jsonutil::as_bool(*crowd, apath + ".iscrowd");
            }
            if (const json* seg = jsonutil::member_opt(ann, apath, "segmentation")) {
                inst.mask = mask_from_wire(*seg, apath + ".segmentation", &img.size);
                if (!(inst.mask->size == img.size)) {
                    throw ValidationError(apath + ".segmentation: canvas mismatch");
                }
            }
            img.instances.push_back(std::move(inst));
        }
    }
    return out;
}

}  // namespace

GroundTruthSet load_annotations(const std::filesystem::path& path) {
    return annotations_from_json(jsonutil::load_file(path));
}

void save_annotations(const GroundTruthSet& gts, const std::filesystem::path& path,
                      bool compressed_rle) {
    json root;
    root["images"] = json::array();
    root["annotations"] = json::array();
    root["categories"] = json::array();
    for (const int cls : gts.category_ids) {
        root["categories"].push_back({{"id", cls}});
    }
    int next_ann_id = 1;
    for (const auto& img : gts.images) {
        root["images"].push_back(
            {{"id", img.image_id}, {"width", img.size.width}, {"height", img.size.height}});
        for (const auto& inst : img.instances) {
            json ann;
            ann["id"] = next_ann_id++;
            ann["image_id"] = img.image_id;
            ann["category_id"] = inst.class_id;
            ann["bbox"] = bbox_to_wire(inst.box);
            ann["iscrowd"] = inst.iscrowd ? 1 : 0;
            if (inst.mask) {
                ann["segmentation"] = mask_to_wire(*inst.mask, compressed_rle);
                ann["area"] = double(mask_area(*inst.mask));
            } else {
                ann["area"] = inst.box.area();
            }
            root["annotations"].push_back(std::move(ann));
        }
    }
    jsonutil::write_file(root, path);
}

std::vector<ImageDetections> load_results(const std::filesystem::path& path) {
    const json root = jsonutil::load_file(path);
    const json& arr = jsonutil::as_array(root, "$");
    std::map<int, std::vector<Detection>> grouped;
    std::set<int> seen_ids;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string rpath = "$[" + std::to_string(i) + "]";
        const json& entry = arr[i];
        if (!entry.is_object()) throw ValidationError(rpath + ": expected an object");
        check_known_keys(entry, rpath,
                         {"image_id", "category_id", "bbox", "score", "segmentation", "id"});
        if (const json* id = jsonutil::member_opt(entry, rpath, "id")) {
            const int v = jsonutil::as_int(*id, rpath + ".id");
            if (!seen_ids.insert(v).second) {
                throw ValidationError(rpath + ".id: duplicate detection id");
            }
        }
        const int image_id =
            jsonutil::as_int(jsonutil::member(entry, rpath, "image_id"), rpath + ".image_id");
        Detection det;
        det.class_id = jsonutil::as_int(jsonutil::member(entry, rpath, "category_id"),
                                        rpath + ".category_id");
        det.box = bbox_from_wire(jsonutil::member(entry, rpath, "bbox"), rpath + ".bbox");
        det.score = jsonutil::as_number(jsonutil::member(entry, rpath, "score"), rpath + ".score");
        if (det.score < 0.0 || det.score > 1.0) {
            throw ValidationError(rpath + ".score: outside [0, 1]");
        }
        if (const json* seg = jsonutil::member_opt(entry, rpath, "segmentation")) {
            det.mask = mask_from_wire(*seg, rpath + ".segmentation", nullptr);
        }
        grouped[image_id].push_back(std::move(det));
    }
    std::vector<ImageDetections> out;
    out.reserve(grouped.size());
    for (auto& [image_id, dets] : grouped) {
        out.push_back(ImageDetections{image_id, std::move(dets)});
    }
    return out;
}

void save_results(const std::vector<ImageDetections>& results,
                  const std::filesystem::path& path, bool compressed_rle) {
    auto sorted = results;
    std::sort(sorted.begin(), sorted.end(),
              [](const ImageDetections& a, const ImageDetections& b) {
                  return a.image_id < b.image_id;
              });
    json root = json::array();
    for (const auto& img : sorted) {
        for (const auto& det : img.detections) {
            json entry;
            entry["image_id"] = img.image_id;
            entry["category_id"] = det.class_id;
            entry["bbox"] = bbox_to_wire(det.box);
            entry["score"] = det.score;
            if (det.mask) entry["segmentation"] = mask_to_wire(*det.mask, compressed_rle);
            root.push_back(std::move(entry));
        }
    }
    jsonutil::write_file(root, path);
}

Scene load_scene(const std::filesystem::path& path) {
    const json root = jsonutil::load_file(path);
    if (!root.is_object()) throw ValidationError("$: expected an object");
    check_known_keys(root, "$",
                     {"images", "annotations", "categories", "detections", "proposals", "anchors",
                      "stats"});

    // the annotation sections share the reader with plain annotation files
    json ann_doc;
    ann_doc["images"] = root.value("images", json::array());
    ann_doc["annotations"] = root.value("annotations", json::array());
    ann_doc["categories"] = root.value("categories", json::array());
    Scene scene;
    scene.gts = annotations_from_json(ann_doc);

    std::map<int, std::size_t> image_index;
    for (std::size_t i = 0; i < scene.gts.images.size(); ++i) {
        image_index[scene.gts.images[i].image_id] = i;
    }

    if (const json* dets = jsonutil::member_opt(root, "$", "detections")) {
        const json& arr = jsonutil::as_array(*dets, "$.detections");
        std::map<int, std::vector<Detection>> grouped;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string rpath = "$.detections[" + std::to_string(i) + "]";
            const json& entry = arr[i];
            check_known_keys(entry, rpath,
                             {"image_id", "category_id", "bbox", "score", "segmentation"});
            const int image_id =
                jsonutil::as_int(jsonutil::member(entry, rpath, "image_id"), rpath + ".image_id");
            if (!image_index.count(image_id)) {
                throw ValidationError(rpath + ".image_id: unknown image");
            }
            Detection det;
            det.class_id = jsonutil::as_int(jsonutil::member(entry, rpath, "category_id"),
                                            rpath + ".category_id");
            det.box = bbox_from_wire(jsonutil::member(entry, rpath, "bbox"), rpath + ".bbox");
            det.score =
                jsonutil::as_number(jsonutil::member(entry, rpath, "score"), rpath + ".score");
            if (const json* seg = jsonutil::member_opt(entry, rpath, "segmentation")) {
                det.mask = mask_from_wire(*seg, rpath + ".segmentation", nullptr);
            }
            grouped[image_id].push_back(std::move(det));
        }
        for (auto& [image_id, d] : grouped) {
            scene.detections.push_back(ImageDetections{image_id, std::move(d)});
        }
    }

    if (const json* props = jsonutil::member_opt(root, "$", "proposals")) {
        const json& arr = jsonutil::as_array(*props, "$.proposals");
        std::map<int, ImageProposals> grouped;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string rpath = "$.proposals[" + std::to_string(i) + "]";
            const json& entry = arr[i];
            check_known_keys(entry, rpath, {"image_id", "bbox", "objectness"});
            const int image_id =
                jsonutil::as_int(jsonutil::member(entry, rpath, "image_id"), rpath + ".image_id");
            if (!image_index.count(image_id)) {
                throw ValidationError(rpath + ".image_id: unknown image");
            }
            auto& slot = grouped[image_id];
            slot.image_id = image_id;
            slot.boxes.push_back(
                bbox_from_wire(jsonutil::member(entry, rpath, "bbox"), rpath + ".bbox"));
            slot.objectness.push_back(jsonutil::as_number(
                jsonutil::member(entry, rpath, "objectness"), rpath + ".objectness"));
        }
        for (auto& [image_id, p] : grouped) scene.proposals.push_back(std::move(p));
    }

    if (const json* anchors = jsonutil::member_opt(root, "$", "anchors")) {
        const json& arr = jsonutil::as_array(*anchors, "$.anchors");
        std::map<int, ImageAnchors> grouped;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string rpath = "$.anchors[" + std::to_string(i) + "]";
            const json& entry = arr[i];
            check_known_keys(entry, rpath, {"image_id", "bbox", "level", "index"});
            const int image_id =
                jsonutil::as_int(jsonutil::member(entry, rpath, "image_id"), rpath + ".image_id");
            if (!image_index.count(image_id)) {
                throw ValidationError(rpath + ".image_id: unknown image");
            }
            Anchor anchor;
            anchor.box = bbox_from_wire(jsonutil::member(entry, rpath, "bbox"), rpath + ".bbox");
            anchor.level =
                jsonutil::as_int(jsonutil::member(entry, rpath, "level"), rpath + ".level");
            anchor.index =
                jsonutil::as_int(jsonutil::member(entry, rpath, "index"), rpath + ".index");
            auto& slot = grouped[image_id];
            slot.image_id = image_id;
            slot.anchors.push_back(anchor);
        }
        for (auto& [image_id, a] : grouped) scene.anchors.push_back(std::move(a));
    }

    if (const json* stats = jsonutil::member_opt(root, "$", "stats")) {
        check_known_keys(*stats, "$.stats", {"mean_detection_iou", "detection_count"});
        if (const json* v = jsonutil::member_opt(*stats, "$.stats", "mean_detection_iou")) {
            scene.mean_detection_iou = jsonutil::as_number(*v, "$.stats.mean_detection_iou");
        }
        if (const json* v = jsonutil::member_opt(*stats, "$.stats", "detection_count")) {
            scene.detection_count = jsonutil::as_int(*v, "$.stats.detection_count");
        }
    }
    return scene;
}

void save_scene(const Scene& scene, const std::filesystem::path& path, bool compressed_rle) {
    json root;
    root["images"] = json::array();
    root["annotations"] = json::array();
    root["categories"] = json::array();
    for (const int cls : scene.gts.category_ids) root["categories"].push_back({{"id", cls}});
    int next_ann_id = 1;
    for (const auto& img : scene.gts.images) {
        root["images"].push_back(
            {{"id", img.image_id}, {"width", img.size.width}, {"height", img.size.height}});
        for (const auto& inst : img.instances) {
            json ann;
            ann["id"] = next_ann_id++;
            ann["image_id"] = img.image_id;
            ann["category_id"] = inst.class_id;
            ann["bbox"] = bbox_to_wire(inst.box);
            ann["iscrowd"] = inst.iscrowd ? 1 : 0;
            if (inst.mask) ann["segmentation"] = mask_to_wire(*inst.mask, compressed_rle);
            root["annotations"].push_back(std::move(ann));
        }
    }
    root["detections"] = json::array();
    for (const auto& img : scene.detections) {
        for (const auto& det : img.detections) {
            json entry;
            entry["image_id"] = img.image_id;
            entry["category_id"] = det.class_id;
            entry["bbox"] = bbox_to_wire(det.box);
            entry["score"] = det.score;
            if (det.mask) entry["segmentation"] = mask_to_wire(*det.mask, compressed_rle);
            root["detections"].push_back(std::move(entry));
        }
    }
    root["proposals"] = json::array();
    for (const auto& img : scene.proposals) {
        for (std::size_t i = 0; i < img.boxes.size(); ++i) {
            root["proposals"].push_back({{"image_id", img.image_id},
                                         {"bbox", bbox_to_wire(img.boxes[i])},
                                         {"objectness", img.objectness[i]}});
        }
    }
    root["anchors"] = json::array();
    for (const auto& img : scene.anchors) {
        for (const auto& anchor : img.anchors) {
            root["anchors"].push_back({{"image_id", img.image_id},
                                       {"bbox", bbox_to_wire(anchor.box)},
                                       {"level", anchor.level},
                                       {"index", anchor.index}});
        }
    }
    root["stats"] = {{"mean_detection_iou", scene.mean_detection_iou},
                     {"detection_count", scene.detection_count}};
    jsonutil::write_file(root, path);
}

std::vector<ProbMapEntry> load_prob_maps(const std::filesystem::path& path) {
    const json root = jsonutil::load_file(path);
    const json& arr = jsonutil::as_array(root, "$");
    std::vector<ProbMapEntry> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string rpath = "$[" + std::to_string(i) + "]";
        const json& entry = arr[i];
        if (!entry.is_object()) throw ValidationError(rpath + ": expected an object");
        check_known_keys(entry, rpath,
                         {"image_id", "category_id", "bbox", "resolution", "values",
                          "predicted_mask_iou"});
        ProbMapEntry e;
        e.image_id =
            jsonutil::as_int(jsonutil::member(entry, rpath, "image_id"), rpath + ".image_id");
        e.class_id = jsonutil::as_int(jsonutil::member(entry, rpath, "category_id"),
                                      rpath + ".category_id");
        e.box = bbox_from_wire(jsonutil::member(entry, rpath, "bbox"), rpath + ".bbox");
        e.resolution = jsonutil::as_int(jsonutil::member(entry, rpath, "resolution"),
                                        rpath + ".resolution");
        if (e.resolution < 1) throw ValidationError(rpath + ".resolution: must be positive");
        const json& values = jsonutil::as_array(jsonutil::member(entry, rpath, "values"),
                                                rpath + ".values");
        if (int(values.size()) != e.resolution * e.resolution) {
            throw ValidationError(rpath + ".values: expected resolution^2 entries");
        }
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double v =
                jsonutil::as_number(values[k], rpath + ".values[" + std::to_string(k) + "]");
            if (v < 0.0 || v > 1.0) {
                throw ValidationError(rpath + ".values[" + std::to_string(k) +
                                      "]: outside [0, 1]");
            }
            e.values.push_back(v);
        }
        if (const json* q = jsonutil::member_opt(entry, rpath, "predicted_mask_iou")) {
            e.predicted_mask_iou = jsonutil::as_number(*q, rpath + ".predicted_mask_iou");
            if (e.predicted_mask_iou < 0.0 || e.predicted_mask_iou > 1.0) {
                throw ValidationError(rpath + ".predicted_mask_iou: outside [0, 1]");
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

AugmentedResultFile load_augmented_results(const std::filesystem::path& path) {
    const json root = jsonutil::load_file(path);
    if (!root.is_object()) throw ValidationError("$: expected an object");
    check_known_keys(root, "$", {"scale_short_side", "flipped", "results"});
    AugmentedResultFile out;
    out.scale_short_side = jsonutil::as_int(
        jsonutil::member(root, "$", "scale_short_side"), "$.scale_short_side");
    if (out.scale_short_side < 1) {
        throw ValidationError("$.scale_short_side: must be positive");
    }
    out.flipped = jsonutil::as_bool(jsonutil::member(root, "$", "flipped"), "$.flipped");

    const json& arr = jsonutil::as_array(jsonutil::member(root, "$", "results"), "$.results");
    std::map<int, std::vector<Detection>> grouped;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string rpath = "$.results[" + std::to_string(i) + "]";
        const json& entry = arr[i];
        if (!entry.is_object()) throw ValidationError(rpath + ": expected an object");
        check_known_keys(entry, rpath, {"image_id", "category_id", "bbox", "score",
                                        "segmentation"});
        const int image_id =
            jsonutil::as_int(jsonutil::member(entry, rpath, "image_id"), rpath + ".image_id");
        Detection det;
        det.class_id = jsonutil::as_int(jsonutil::member(entry, rpath, "category_id"),
                                        rpath + ".category_id");
        det.box = bbox_from_wire(jsonutil::member(entry, rpath, "bbox"), rpath + ".bbox");
        det.score = jsonutil::as_number(jsonutil::member(entry, rpath, "score"), rpath + ".score");
        if (const json* seg = jsonutil::member_opt(entry, rpath, "segmentation")) {
            det.mask = mask_from_wire(*seg, rpath + ".segmentation", nullptr);
        }
        grouped[image_id].push_back(std::move(det));
    }
    for (auto& [image_id, dets] : grouped) {
        out.results.push_back(ImageDetections{image_id, std::move(dets)});
    }
    return out;
}

}  // namespace detkit
