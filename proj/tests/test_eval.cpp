#include <doctest.h>

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "detkit/core/rng.hpp"
#include "detkit/eval/evaluator.hpp"
#include "detkit/reference/reference.hpp"

using namespace detkit;

namespace {

Detection det(double x1, double y1, double x2, double y2, double score, int cls = 1) {
    Detection d;
    d.box = Box{x1, y1, x2, y2};
    d.score = score;
    d.class_id = cls;
    return d;
}

GroundTruthInstance gt(double x1, double y1, double x2, double y2, int cls = 1,
                       bool crowd = false) {
    GroundTruthInstance g;
    g.box = Box{x1, y1, x2, y2};
    g.class_id = cls;
    g.iscrowd = crowd;
    return g;
}

InstanceMask box_mask(const Box& b, const ImageSize& canvas) {
    Bitmap bitmap(canvas);
    for (int y = 0; y < canvas.height; ++y) {
        for (int x = 0; x < canvas.width; ++x) {
            const double cx = double(x) + 0.5;
            const double cy = double(y) + 0.5;
            if (cx >= b.x1 && cx < b.x2 && cy >= b.y1 && cy < b.y2) bitmap.set(x, y, true);
        }
    }
    return rle_encode(bitmap);
}

// random dataset with boxes and box-aligned masks in every size band
struct RandomDataset {
    GroundTruthSet gts;
    std::vector<ImageDetections> results;
};

RandomDataset make_dataset(std::uint64_t seed, bool with_masks, bool with_crowds) {
    Rng rng(seed);
    RandomDataset out;
    const ImageSize canvas{256, 256};
    const int n_images = rng.uniform_int(1, 10);
    const int n_classes = rng.uniform_int(1, 4);
    for (int c = 1; c <= n_classes; ++c) out.gts.category_ids.push_back(c);
    for (int img = 0; img < n_images; ++img) {
        GroundTruthImage gi;
        gi.image_id = img;
        gi.size = canvas;
        ImageDetections dets;
        dets.image_id = img;
        const int n_inst = rng.uniform_int(0, 6);
        for (int k = 0; k < n_inst; ++k) {
            const int side = rng.uniform_int(8, 140);
            const int x = rng.uniform_int(0, canvas.width - side);
            const int y = rng.uniform_int(0, canvas.height - side);
            GroundTruthInstance inst =
                gt(x, y, x + side, y + side, rng.uniform_int(1, n_classes));
            inst.iscrowd = with_crowds && rng.uniform() < 0.15;
            if (with_masks) inst.mask = box_mask(inst.box, canvas);
            gi.instances.push_back(inst);

            // a jittered detection most of the time
            if (rng.uniform() < 0.85) {
                const double dx = rng.uniform_int(-side / 3, side / 3);
                const double dy = rng.uniform_int(-side / 3, side / 3);
                Detection d = det(std::max(0.0, x + dx), std::max(0.0, y + dy),
                                  std::min(double(canvas.width), x + side + dx),
                                  std::min(double(canvas.height), y + side + dy), rng.uniform(),
                                  inst.class_id);
                if (with_masks) d.mask = box_mask(d.box, canvas);
                dets.detections.push_back(d);
            }
            // occasional false positive
            if (rng.uniform() < 0.3) {
                const int fside = rng.uniform_int(8, 120);
                const int fx = rng.uniform_int(0, canvas.width - fside);
                const int fy = rng.uniform_int(0, canvas.height - fside);
                Detection d = det(fx, fy, fx + fside, fy + fside, rng.uniform(),
                                  rng.uniform_int(1, n_classes));
                if (with_masks) d.mask = box_mask(d.box, canvas);
                dets.detections.push_back(d);
            }
        }
        out.gts.images.push_back(std::move(gi));
        out.results.push_back(std::move(dets));
    }
    return out;
}

void check_summary_close(const EvalSummary& a, const EvalSummary& b) {
    const auto close = [](const std::optional<double>& x, const std::optional<double>& y) {
        REQUIRE(x.has_value() == y.has_value());
        if (x) CHECK(*x == doctest::Approx(*y).epsilon(1e-9));
    };
    close(a.ap, b.ap);
    close(a.ap50, b.ap50);
    close(a.ap75, b.ap75);
    close(a.ap_s, b.ap_s);
    close(a.ap_m, b.ap_m);
    close(a.ap_l, b.ap_l);
}

}  // namespace

TEST_CASE("match_greedy basics") {
    const std::vector<GroundTruthInstance> gts{gt(0, 0, 10, 10)};

    SUBCASE("identical detection matches") {
        const auto m = match_greedy({det(0, 0, 10, 10, 0.9)}, gts, 0.5, EvalMode::bbox);
        CHECK(m.det_match[0] == 0);
        CHECK(m.gt_matched[0] == 1);
    }

    SUBCASE("second detection on the same instance is a false positive") {
        const auto m = match_greedy({det(0, 0, 10, 10, 0.9), det(0, 0, 10, 9, 0.8)}, gts, 0.5,
                                    EvalMode::bbox);
        CHECK(m.det_match[0] == 0);
        CHECK(m.det_match[1] == -1);
    }

    SUBCASE("an overlap below the threshold stays unmatched") {
        const auto m = match_greedy({det(0, 0, 10, 6, 0.9)}, gts, 0.75, EvalMode::bbox);
        CHECK(m.det_match[0] == -1);
    }

    SUBCASE("crowds absorb leftovers without counting") {
        const std::vector<GroundTruthInstance> crowd_gts{gt(0, 0, 10, 10),
                                                         gt(20, 0, 60, 40, 1, true)};
        const auto m = match_greedy(
            {det(0, 0, 10, 10, 0.9), det(25, 5, 40, 30, 0.8), det(100, 100, 110, 110, 0.7)},
            crowd_gts, 0.5, EvalMode::bbox);
        CHECK(m.det_match[0] == 0);
        CHECK(m.det_ignored[1] == 1);  // swallowed by the crowd region
        CHECK(m.det_match[1] == -1);
        CHECK(m.det_ignored[2] == 0);  // plain false positive
        CHECK(m.gt_matched[1] == 0);
    }

    SUBCASE("unsorted input is rejected") {
        CHECK_THROWS(match_greedy({det(0, 0, 1, 1, 0.1), det(0, 0, 1, 1, 0.9)}, gts, 0.5,
                                  EvalMode::bbox));
    }
}

TEST_CASE("average precision closed forms") {
    CHECK(*average_precision({{0.9, true}, {0.8, true}}, 2) == 1.0);
    CHECK(*average_precision({{0.9, false}, {0.8, false}}, 2) == 0.0);
    CHECK_FALSE(average_precision({}, 0).has_value());
    CHECK(*average_precision({}, 3) == 0.0);

    // one instance, two detections: the match position decides everything
    CHECK(*average_precision({{0.9, true}, {0.8, false}}, 1) == 1.0);
    CHECK(*average_precision({{0.9, false}, {0.8, true}}, 1) == 0.5);
}

TEST_CASE("evaluate: perfect detections score one everywhere") {
    const ImageSize canvas{256, 256};
    GroundTruthSet gts;
    gts.category_ids = {1, 2};
    GroundTruthImage img;
    img.image_id = 0;
    img.size = canvas;
    // one instance per size band
    img.instances.push_back(gt(0, 0, 16, 16, 1));
    img.instances.push_back(gt(40, 40, 88, 88, 2));
    img.instances.push_back(gt(100, 100, 228, 228, 1));
    gts.images.push_back(img);

    ImageDetections dets;
    dets.image_id = 0;
    for (const auto& inst : img.instances) {
        dets.detections.push_back(
            det(inst.box.x1, inst.box.y1, inst.box.x2, inst.box.y2, 1.0, inst.class_id));
    }

    const auto result = evaluate({dets}, gts, EvalConfig::defaults(EvalMode::bbox));
    CHECK(*result.summary.ap == 1.0);
    CHECK(*result.summary.ap50 == 1.0);
    CHECK(*result.summary.ap75 == 1.0);
    CHECK(*result.summary.ap_s == 1.0);
    CHECK(*result.summary.ap_m == 1.0);
    CHECK(*result.summary.ap_l == 1.0);
}

TEST_CASE("evaluate: the 0.6-overlap single detection") {
    GroundTruthSet gts;
    gts.category_ids = {1};
    GroundTruthImage img;
    img.image_id = 0;
    img.size = ImageSize{64, 64};
    img.instances.push_back(gt(0, 0, 10, 10));
    gts.images.push_back(img);

    ImageDetections dets;
    dets.image_id = 0;
    dets.detections.push_back(det(0, 0, 10, 6, 0.9));  // overlap exactly 0.6

    const auto result = evaluate({dets}, gts, EvalConfig::defaults(EvalMode::bbox));
    CHECK(*result.summary.ap50 == 1.0);
    CHECK(*result.summary.ap75 == 0.0);
    CHECK(*result.summary.ap == 0.3);
}

TEST_CASE("evaluate: empty results on a populated scene score zero") {
    GroundTruthSet gts;
    gts.category_ids = {1};
    GroundTruthImage img;
    img.image_id = 0;
    img.size = ImageSize{256, 256};
    img.instances.push_back(gt(0, 0, 16, 16));
    img.instances.push_back(gt(30, 30, 90, 90));
    img.instances.push_back(gt(100, 100, 240, 240));
    gts.images.push_back(img);

    const auto result = evaluate({}, gts, EvalConfig::defaults(EvalMode::bbox));
    CHECK(*result.summary.ap == 0.0);
    CHECK(*result.summary.ap50 == 0.0);
    CHECK(*result.summary.ap_s == 0.0);
    CHECK(*result.summary.ap_m == 0.0);
    CHECK(*result.summary.ap_l == 0.0);
}

TEST_CASE("evaluate matches the brute-force evaluator") {
    for (int seed = 0; seed < 20; ++seed) {
        const auto data = make_dataset(std::uint64_t(seed), seed % 2 == 1, seed % 3 == 0);
        const EvalMode mode = seed % 2 == 1 ? EvalMode::segm : EvalMode::bbox;
        const EvalConfig cfg = EvalConfig::defaults(mode);
        const auto fast = evaluate(data.results, data.gts, cfg);
        const auto slow = reference::evaluate_bruteforce(data.results, data.gts, cfg);
        check_summary_close(fast.summary, slow.summary);
        for (const auto& [cls, summary] : fast.per_class) {
            check_summary_close(summary, slow.per_class.at(cls));
        }
    }
}

TEST_CASE("evaluate is order independent") {
    const auto data = make_dataset(1234, false, true);
    const EvalConfig cfg = EvalConfig::defaults(EvalMode::bbox);
    const auto base = evaluate(data.results, data.gts, cfg);

    auto shuffled = data;
    Rng rng(5);
    for (auto& img : shuffled.results) {
        for (std::size_t i = img.detections.size(); i > 1; --i) {
            std::swap(img.detections[i - 1],
                      img.detections[std::size_t(rng.uniform_int(0, int(i) - 1))]);
        }
    }
    std::reverse(shuffled.results.begin(), shuffled.results.end());
    for (auto& img : shuffled.gts.images) {
        std::reverse(img.instances.begin(), img.instances.end());
    }
    std::reverse(shuffled.gts.images.begin(), shuffled.gts.images.end());

    const auto moved = evaluate(shuffled.results, shuffled.gts, cfg);
    check_summary_close(base.summary, moved.summary);
}

TEST_CASE("adding a trailing false positive never raises the score") {
    const auto data = make_dataset(77, false, false);
    const EvalConfig cfg = EvalConfig::defaults(EvalMode::bbox);
    const auto base = evaluate(data.results, data.gts, cfg);

    auto worse = data;
    worse.results[0].detections.push_back(det(0, 0, 5, 5, 1e-4, worse.gts.category_ids[0]));
    const auto result = evaluate(worse.results, worse.gts, cfg);
    if (base.summary.ap && result.summary.ap) {
        CHECK(*result.summary.ap <= *base.summary.ap + 1e-12);
    }
}

TEST_CASE("uniform scaling leaves box metrics unchanged") {
    const auto data = make_dataset(99, false, false);
    EvalConfig cfg = EvalConfig::defaults(EvalMode::bbox);
    const auto base = evaluate(data.results, data.gts, cfg);

    const double s = 2.0;
    auto scaled = data;
    for (auto& img : scaled.gts.images) {
        img.size = ImageSize{img.size.width * 2, img.size.height * 2};
        for (auto& inst : img.instances) inst.box = rescale_box(inst.box, s);
    }
    for (auto& img : scaled.results) {
        for (auto& d : img.detections) d.box = rescale_box(d.box, s);
    }
    EvalConfig scaled_cfg = cfg;
    for (auto& range : scaled_cfg.area_ranges) {
        range.lo *= s * s;
        if (std::isfinite(range.hi)) range.hi *= s * s;
    }
    const auto result = evaluate(scaled.results, scaled.gts, scaled_cfg);
    check_summary_close(base.summary, result.summary);
}

TEST_CASE("evaluation is identical across thread counts") {
#ifdef _OPENMP
    const auto data = make_dataset(555, true, true);
    const EvalConfig cfg = EvalConfig::defaults(EvalMode::segm);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto serial = evaluate(data.results, data.gts, cfg);
    omp_set_num_threads(saved > 1 ? saved : 2);
    const auto parallel = evaluate(data.results, data.gts, cfg);
    omp_set_num_threads(saved);
    const auto same = [](const std::optional<double>& a, const std::optional<double>& b) {
        REQUIRE(a.has_value() == b.has_value());
        if (a) CHECK(*a == *b);  // bit-for-bit
    };
    same(serial.summary.ap, parallel.summary.ap);
    same(serial.summary.ap50, parallel.summary.ap50);
    same(serial.summary.ap_s, parallel.summary.ap_s);
    same(serial.summary.ap_m, parallel.summary.ap_m);
    same(serial.summary.ap_l, parallel.summary.ap_l);
#endif
}

TEST_CASE("segm mode rejects mask-less detections") {
    GroundTruthSet gts;
    gts.category_ids = {1};
    GroundTruthImage img;
    img.image_id = 0;
    img.size = ImageSize{32, 32};
    GroundTruthInstance inst = gt(0, 0, 10, 10);
    inst.mask = box_mask(inst.box, img.size);
    img.instances.push_back(inst);
    gts.images.push_back(img);

    ImageDetections dets;
    dets.image_id = 0;
    dets.detections.push_back(det(0, 0, 10, 10, 0.9));
    CHECK_THROWS(evaluate({dets}, gts, EvalConfig::defaults(EvalMode::segm)));
}

TEST_CASE("evaluate validates inputs") {
    GroundTruthSet gts;
    gts.category_ids = {1};
    GroundTruthImage img;
    img.image_id = 0;
    img.size = ImageSize{32, 32};
    gts.images.push_back(img);

    ImageDetections stray;
    stray.image_id = 7;
    stray.detections.push_back(det(0, 0, 5, 5, 0.5));
    CHECK_THROWS(evaluate({stray}, gts, EvalConfig::defaults(EvalMode::bbox)));

    ImageDetections alien;
    alien.image_id = 0;
    alien.detections.push_back(det(0, 0, 5, 5, 0.5, 9));
    CHECK_THROWS(evaluate({alien}, gts, EvalConfig::defaults(EvalMode::bbox)));
}
