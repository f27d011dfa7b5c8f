#include <doctest.h>

#include <cmath>

#include "detkit/core/rng.hpp"
#include "detkit/pipeline/two_pass.hpp"
#include "detkit/synth/generator.hpp"

using namespace detkit;

namespace {

MaskProbMap uniform_map(int r, double value, const Box& box) {
    MaskProbMap map;
    map.resolution = r;
    map.values.assign(std::size_t(r) * std::size_t(r), value);
    map.reference_box = box;
    return map;
}

Detection det(const Box& b, int cls, double score) {
    Detection d;
    d.box = b;
    d.class_id = cls;
    d.score = score;
    return d;
}

}  // namespace

TEST_CASE("pasting an all-ones grid fills exactly the box") {
    const ImageSize canvas{8, 8};
    const InstanceMask mask = paste_prob_map(uniform_map(28, 1.0, Box{0, 0, 4, 4}), canvas, 0.5);
    const Bitmap bitmap = rle_decode(mask);
    std::int64_t ones = 0;
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            const bool expected = x < 4 && y < 4;
            CHECK(bitmap.at(x, y) == (expected ? 1 : 0));
            ones += bitmap.at(x, y);
        }
    }
    CHECK(ones == 16);
}

TEST_CASE("pasting zeros or degenerate boxes yields an empty mask") {
    const ImageSize canvas{8, 8};
    CHECK(mask_area(paste_prob_map(uniform_map(28, 0.0, Box{0, 0, 4, 4}), canvas, 0.5)) == 0);
    CHECK(mask_area(paste_prob_map(uniform_map(28, 1.0, Box{3, 3, 3, 7}), canvas, 0.5)) == 0);
}

TEST_CASE("two_pass keeps boxes, classes, scores and count") {
    SceneSpec spec;
    spec.rng_seed = 99;
    spec.image_count = 1;
    spec.square_instances = true;
    const Scene scene = synth_generate(spec);
    const auto predictor = gt_clip_predictor(scene.gts);
    const auto& dets = scene.detections[0].detections;
    const auto result = two_pass(0, dets, predictor, spec.canvas);
    REQUIRE(result.detections.size() == dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
        CHECK(result.detections[i].box == dets[i].box);
        CHECK(result.detections[i].class_id == dets[i].class_id);
        CHECK(result.detections[i].score == dets[i].score);
    }
}

TEST_CASE("gt-clip oracle reconstructs square instances exactly") {
    SceneSpec spec;
    spec.rng_seed = 31;
    spec.image_count = 3;
    spec.square_instances = true;
    spec.noise.iou_jitter = 0.0;
    spec.noise.score_sigma = 0.0;
    const Scene scene = synth_generate(spec);
    const auto predictor = gt_clip_predictor(scene.gts);
    for (const auto& image : scene.detections) {
        const auto& gt_image = scene.gts.images[std::size_t(image.image_id)];
        const auto result = two_pass(image.image_id, image.detections, predictor, spec.canvas);
        CHECK(result.failed.empty());
        for (std::size_t i = 0; i < result.detections.size(); ++i) {
            REQUIRE(result.detections[i].mask.has_value());
            // perfect boxes reproduce the instance mask bit for bit
            bool found = false;
            for (const auto& inst : gt_image.instances) {
                found = found || (inst.mask && *inst.mask == *result.detections[i].mask);
            }
            CHECK(found);
            CHECK(result.predicted_mask_iou[i] == 1.0);
        }
    }
}

TEST_CASE("predictor failures flag the detection and leave it mask-less") {
    const MaskPredictor flaky = [](int, const Box& box,
                                   int) -> std::optional<MaskPrediction> {
        if (box.x1 < 10.0) return std::nullopt;
        MaskPrediction pred;
        pred.prob_map.resolution = 4;
        pred.prob_map.values.assign(16, 1.0);
        pred.prob_map.reference_box = box;
        return pred;
    };
    const std::vector<Detection> dets{det(Box{0, 0, 8, 8}, 1, 0.9),
                                      det(Box{20, 20, 28, 28}, 1, 0.8)};
    const auto result = two_pass(0, dets, flaky, ImageSize{64, 64});
    REQUIRE(result.failed == std::vector<int>{0});
    CHECK_FALSE(result.detections[0].mask.has_value());
    CHECK(result.detections[1].mask.has_value());
}

TEST_CASE("mask_rescore") {
    const Detection d = det(Box{0, 0, 10, 10}, 2, 0.9);
    CHECK(mask_rescore(d, 1.0).score == 0.9);
    CHECK(mask_rescore(d, 0.8).score == doctest::Approx(0.72).epsilon(1e-12));
    CHECK(mask_rescore(d, 0.0).score == 0.0);
    CHECK_THROWS(mask_rescore(d, 1.5));
    CHECK_THROWS(mask_rescore(det(Box{0, 0, 1, 1}, 0, 1.5), 0.5));

    // rescoring preserves ordering within a fixed quality estimate and the
    // two factors commute
    const Detection lo = det(Box{0, 0, 10, 10}, 2, 0.4);
    CHECK(mask_rescore(d, 0.7).score > mask_rescore(lo, 0.7).score);
    const Detection swapped = det(d.box, d.class_id, 0.8);
    CHECK(mask_rescore(d, 0.8).score == mask_rescore(swapped, 0.9).score);
}

TEST_CASE("mask_cascade_refine") {
    const Box box{0, 0, 10, 10};

    SUBCASE("zero residual is the identity") {
        const MaskProbMap base = uniform_map(8, 0.37, box);
        const MaskProbMap out = mask_cascade_refine(base, zero_residual_refiner());
        for (const double v : out.values) CHECK(v == doctest::Approx(0.37).epsilon(1e-9));
        CHECK(out.reference_box == box);
    }

    SUBCASE("scalar checks at p = 0.5") {
        const MaskProbMap base = uniform_map(2, 0.5, box);
        const auto up = mask_cascade_refine(base, constant_residual_refiner(2.0));
        CHECK(up.values[0] == doctest::Approx(0.8808).epsilon(1e-4));
        const auto down = mask_cascade_refine(base, constant_residual_refiner(-2.0));
        CHECK(down.values[0] == doctest::Approx(0.1192).epsilon(1e-4));
    }

    SUBCASE("a residual and its negation cancel") {
        Rng rng(8);
        MaskProbMap base = uniform_map(6, 0.0, box);
        for (auto& v : base.values) v = rng.uniform();
        const auto there = mask_cascade_refine(base, constant_residual_refiner(1.7));
        const auto back = mask_cascade_refine(there, constant_residual_refiner(-1.7));
        for (std::size_t i = 0; i < base.values.size(); ++i) {
            CHECK(back.values[i] == doctest::Approx(base.values[i]).epsilon(1e-6));
        }
    }

    SUBCASE("resolution mismatch throws") {
        const MaskProbMap base = uniform_map(4, 0.5, box);
        const ResidualRefiner bad = [](const MaskProbMap&) { return std::vector<double>(3, 0.0); };
        CHECK_THROWS(mask_cascade_refine(base, bad));
    }
}

TEST_CASE("zeros predictor produces empty masks with zero quality") {
    const auto predictor = zeros_predictor(16);
    const std::vector<Detection> dets{det(Box{0, 0, 10, 10}, 1, 0.9)};
    const auto result = two_pass(0, dets, predictor, ImageSize{32, 32});
    REQUIRE(result.detections[0].mask.has_value());
    CHECK(mask_area(*result.detections[0].mask) == 0);
    CHECK(result.predicted_mask_iou[0] == 0.0);
}
