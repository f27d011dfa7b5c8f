#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "detkit/core/rng.hpp"
#include "detkit/io/coco.hpp"
#include "detkit/io/rle_string.hpp"
#include "detkit/io/run_config.hpp"
#include "detkit/synth/generator.hpp"

using namespace detkit;
namespace fs = std::filesystem;

namespace {

fs::path fixture(const std::string& name) {
    return fs::path(DETKIT_FIXTURE_DIR) / name;
}

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "detkit_io_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("run-length strings match the canonical codec") {
    using counts = std::vector<std::int64_t>;
    CHECK(rle_counts_to_string(counts{4}) == "4");
    CHECK(rle_counts_to_string(counts{0, 4}) == "04");
    CHECK(rle_counts_to_string(counts{3, 1, 5}) == "315");
    CHECK(rle_counts_to_string(counts{100, 3, 7, 2, 88}) == "T337Oa2");
    CHECK(rle_counts_to_string(counts{1, 1, 1, 1, 1, 1, 1, 1, 1, 1}) == "1110000000");
    CHECK(rle_counts_to_string(counts{0, 300000, 12, 45, 1000}) == "0PoT9<]RkFln0");

    Rng rng(71);
    for (int trial = 0; trial < 200; ++trial) {
        counts c;
        const int n = rng.uniform_int(1, 40);
        for (int i = 0; i < n; ++i) c.push_back(rng.uniform_int(0, 100000));
        CHECK(rle_counts_from_string(rle_counts_to_string(c)) == c);
    }
    CHECK_THROWS(rle_counts_from_string("\x01"));
}

TEST_CASE("bbox wire conversion") {
    const auto path = temp_file("bbox.json");
    std::ofstream(path) << R"([{"image_id": 0, "category_id": 1,
        "bbox": [10, 20, 5, 5], "score": 0.5}])";
    const auto results = load_results(path);
    REQUIRE(results.size() == 1);
    CHECK(results[0].detections[0].box == Box{10, 20, 15, 25});
}

TEST_CASE("empty annotation files load as empty sets") {
    const auto path = temp_file("empty_ann.json");
    std::ofstream(path) << R"({"images": [], "annotations": [], "categories": []})";
    const auto gts = load_annotations(path);
    CHECK(gts.images.empty());
    CHECK(gts.category_ids.empty());
}

TEST_CASE("annotation round trip is byte-stable") {
    const auto gts = load_annotations(fixture("annotations_small.json"));
    REQUIRE(gts.images.size() == 2);
    int instances = 0;
    for (const auto& img : gts.images) instances += int(img.instances.size());
    CHECK(instances == 3);

    const auto first = temp_file("round1.json");
    const auto second = temp_file("round2.json");
    save_annotations(gts, first);
    save_annotations(load_annotations(first), second);
    CHECK(slurp(first) == slurp(second));
}

TEST_CASE("results round trip including masks, both rle forms") {
    GroundTruthSet gts;  // only used to build masks on a canvas
    const ImageSize canvas{6, 4};
    Bitmap bitmap(canvas);
    bitmap.set(1, 1, true);
    bitmap.set(2, 3, true);

    std::vector<ImageDetections> results(1);
    results[0].image_id = 3;
    Detection d;
    d.box = Box{1, 1, 4, 3};
    d.class_id = 2;
    d.score = 0.75;
    d.mask = rle_encode(bitmap);
    results[0].detections.push_back(d);

    for (const bool compressed : {false, true}) {
        const auto path = temp_file(compressed ? "res_c.json" : "res_u.json");
        save_results(results, path, compressed);
        const auto loaded = load_results(path);
        REQUIRE(loaded.size() == 1);
        REQUIRE(loaded[0].detections.size() == 1);
        CHECK(loaded[0].image_id == 3);
        CHECK(loaded[0].detections[0].box == d.box);
        CHECK(loaded[0].detections[0].score == d.score);
        REQUIRE(loaded[0].detections[0].mask.has_value());
        CHECK(*loaded[0].detections[0].mask == *d.mask);
    }
}

TEST_CASE("duplicate detection ids are rejected") {
    const auto path = temp_file("dup_ids.json");
    std::ofstream(path) << R"([
        {"id": 1, "image_id": 0, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 0.5},
        {"id": 1, "image_id": 0, "category_id": 1, "bbox": [5, 5, 5, 5], "score": 0.4}])";
    CHECK_THROWS_AS(load_results(path), ValidationError);
}

TEST_CASE("missing files raise io errors, bad json validation errors") {
    CHECK_THROWS_AS(load_results(temp_file("does_not_exist.json")), IoError);
    const auto path = temp_file("broken.json");
    std::ofstream(path) << "{ not json";
    CHECK_THROWS_AS(load_results(path), ValidationError);
}

TEST_CASE("polygon segmentation rasterises to the expected rectangle") {
    const ImageSize canvas{10, 8};
    const std::vector<std::vector<double>> rect{{2, 1, 7, 1, 7, 5, 2, 5}};
    const InstanceMask mask = polygons_to_mask(rect, canvas);
    const Bitmap bitmap = rle_decode(mask);
    for (int y = 0; y < canvas.height; ++y) {
        for (int x = 0; x < canvas.width; ++x) {
            const bool inside = x >= 2 && x < 7 && y >= 1 && y < 5;
            CHECK(bitmap.at(x, y) == (inside ? 1 : 0));
        }
    }
}

TEST_CASE("annotations with polygon segmentation load") {
    const auto path = temp_file("poly_ann.json");
    std::ofstream(path) << R"({
        "images": [{"id": 0, "width": 10, "height": 8}],
        "categories": [{"id": 1}],
        "annotations": [{"id": 1, "image_id": 0, "category_id": 1,
            "bbox": [2, 1, 5, 4], "iscrowd": 0,
            "segmentation": [[2, 1, 7, 1, 7, 5, 2, 5]]}]})";
    const auto gts = load_annotations(path);
    REQUIRE(gts.images[0].instances.size() == 1);
    REQUIRE(gts.images[0].instances[0].mask.has_value());
    CHECK(mask_area(*gts.images[0].instances[0].mask) == 20);
}

TEST_CASE("schema validation rejects the malformed corpus with json paths") {
    int rejected = 0;
    for (int i = 1; i <= 20; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "malformed/mf%02d.json", i);
        bool threw = false;
        try {
            (void)parse_run_config(fixture(name));
        } catch (const ValidationError& e) {
            threw = true;
            const std::string what = e.what();
            CHECK(what.find("$") != std::string::npos);  // a JSON path
        }
        CHECK(threw);
        rejected += threw ? 1 : 0;
    }
    CHECK(rejected == 20);
}

TEST_CASE("a complete configuration document parses") {
    const auto cfg = parse_run_config(fixture("config_full.json"));
    CHECK(cfg.nms.mode == NmsMode::soft_gaussian);
    CHECK(cfg.nms.sigma == 0.6);
    CHECK(cfg.sampler.critical_iou == 0.7);
    CHECK(cfg.cascade.size() == 2);
    CHECK(cfg.pipeline.predictor == "gt-clip");
    CHECK(cfg.merge.max_dets == 50);
    CHECK(cfg.eval.mode == EvalMode::segm);
    CHECK(cfg.synth.image_count == 4);
    CHECK(cfg.io.compressed_rle);
}

TEST_CASE("scene files round trip") {
    SceneSpec spec;
    spec.rng_seed = 5;
    spec.image_count = 2;
    spec.anchors.enabled = true;
    spec.anchors.stride = 128;
    spec.anchors.scales = {64};
    spec.anchors.aspect_ratios = {1.0};
    const Scene scene = synth_generate(spec);

    const auto path = temp_file("scene.json");
    save_scene(scene, path);
    const Scene loaded = load_scene(path);
    CHECK(loaded.gts.images.size() == scene.gts.images.size());
    CHECK(loaded.proposals.size() == scene.proposals.size());
    CHECK(loaded.anchors.size() == scene.anchors.size());
    CHECK(loaded.proposals[0].boxes.size() == scene.proposals[0].boxes.size());
    CHECK(loaded.anchors[0].anchors.size() == scene.anchors[0].anchors.size());
    CHECK(loaded.detections.size() == scene.detections.size());
    for (std::size_t i = 0; i < scene.detections[0].detections.size(); ++i) {
        CHECK(loaded.detections[0].detections[i].box == scene.detections[0].detections[i].box);
    }
}
