#include <doctest.h>

#include <algorithm>

#include "detkit/core/rng.hpp"
#include "detkit/tta/merge.hpp"

using namespace detkit;

namespace {

Detection det(double x1, double y1, double x2, double y2, double score, int cls = 0) {
    Detection d;
    d.box = Box{x1, y1, x2, y2};
    d.score = score;
    d.class_id = cls;
    return d;
}

bool same_detections(const std::vector<Detection>& a, const std::vector<Detection>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] == b[i])) return false;
    }
    return true;
}

std::vector<Detection> grid_detections(Rng& rng, int n, const ImageSize& canvas) {
    std::vector<Detection> dets;
    for (int i = 0; i < n; ++i) {
        const double x1 = rng.uniform_int(0, canvas.width - 40);
        const double y1 = rng.uniform_int(0, canvas.height - 40);
        const double w = rng.uniform_int(8, 39);
        const double h = rng.uniform_int(8, 39);
        dets.push_back(det(x1, y1, x1 + w, y1 + h, rng.uniform(), rng.uniform_int(0, 2)));
    }
    return dets;
}

AugmentedResult flip_copy(const AugmentedResult& r) {
    AugmentedResult out = r;
    out.flipped = true;
    const ImageSize canvas = augmented_canvas(r.original, r.scale_short_side);
    for (auto& d : out.detections) {
        d.box = hflip_box(d.box, canvas);
        if (d.mask) d.mask = hflip_mask(*d.mask);
    }
    return out;
}

}  // namespace

TEST_CASE("to_original_frame identity") {
    Rng rng(1);
    AugmentedResult r;
    r.image_id = 5;
    r.original = ImageSize{100, 80};
    r.scale_short_side = 80;  // short side unchanged
    r.flipped = false;
    r.detections = grid_detections(rng, 10, r.original);
    CHECK(same_detections(to_original_frame(r), r.detections));
}

TEST_CASE("to_original_frame unflips") {
    AugmentedResult r;
    r.original = ImageSize{100, 80};
    r.scale_short_side = 80;
    r.flipped = true;
    r.detections = {det(10, 20, 30, 40, 0.9)};
    const auto mapped = to_original_frame(r);
    CHECK(mapped[0].box == Box{70, 20, 90, 40});
}

TEST_CASE("to_original_frame rescales from the augmented canvas") {
    AugmentedResult r;
    r.original = ImageSize{100, 80};
    r.scale_short_side = 160;  // factor two
    r.flipped = false;
    r.detections = {det(0, 0, 20, 20, 0.9)};
    const auto mapped = to_original_frame(r);
    CHECK(mapped[0].box == Box{0, 0, 10, 10});
}

TEST_CASE("normalize_scores per class") {
    const std::vector<Detection> dets{det(0, 0, 1, 1, 0.5, 1), det(2, 0, 3, 1, 0.25, 1),
                                      det(4, 0, 5, 1, 0.1, 2)};
    const auto out = normalize_scores(dets);
    CHECK(out[0].score == 1.0);
    CHECK(out[1].score == 0.5);
    CHECK(out[2].score == 1.0);  // alone in its class

    const auto zeros = normalize_scores({det(0, 0, 1, 1, 0.0, 1)});
    CHECK(zeros[0].score == 0.0);  // degenerate guard

    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const auto soup = grid_detections(rng, 20, ImageSize{200, 200});
        const auto normalized = normalize_scores(soup);
        // per-class argmax is preserved
        for (int cls = 0; cls < 3; ++cls) {
            int best_before = -1, best_after = -1;
            for (std::size_t i = 0; i < soup.size(); ++i) {
                if (soup[i].class_id != cls) continue;
                if (best_before < 0 || soup[i].score > soup[std::size_t(best_before)].score) {
                    best_before = int(i);
                }
                if (best_after < 0 ||
                    normalized[i].score > normalized[std::size_t(best_after)].score) {
                    best_after = int(i);
                }
            }
            CHECK(best_before == best_after);
        }
    }
}

TEST_CASE("tta_merge of a single identity augmentation is plain suppression") {
    Rng rng(9);
    AugmentedResult r;
    r.original = ImageSize{120, 100};
    r.scale_short_side = 100;
    r.detections = grid_detections(rng, 30, r.original);
    MergeConfig cfg;
    CHECK(same_detections(tta_merge({r}, cfg), nms(r.detections, cfg.suppression)));
}

TEST_CASE("tta_merge deduplicates the same box across augmentations") {
    AugmentedResult a;
    a.original = ImageSize{100, 100};
    a.scale_short_side = 100;
    a.detections = {det(10, 10, 50, 50, 0.9)};
    AugmentedResult b = a;
    b.scale_short_side = 200;
    b.detections = {det(20, 20, 100, 100, 0.8)};  // same box in the doubled frame
    MergeConfig cfg;
    const auto merged = tta_merge({a, b}, cfg);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].score == 0.9);
    CHECK(merged[0].box == Box{10, 10, 50, 50});
}

TEST_CASE("merging a result with its mirrored copy changes nothing") {
    Rng rng(23);
    AugmentedResult r;
    r.original = ImageSize{160, 120};
    r.scale_short_side = 120;
    r.detections = grid_detections(rng, 25, r.original);
    MergeConfig cfg;
    const auto alone = tta_merge({r}, cfg);
    const auto doubled = tta_merge({r, flip_copy(r)}, cfg);
    CHECK(same_detections(alone, doubled));
}

TEST_CASE("tta_merge is invariant to the order of augmentations") {
    Rng rng(31);
    std::vector<AugmentedResult> results;
    for (const int scale : {100, 150, 200}) {
        AugmentedResult r;
        r.original = ImageSize{140, 100};
        r.scale_short_side = scale;
        const ImageSize canvas = augmented_canvas(r.original, scale);
        r.detections = grid_detections(rng, 12, canvas);
        results.push_back(std::move(r));
    }
    MergeConfig cfg;
    const auto base = tta_merge(results, cfg);
    std::vector<AugmentedResult> shuffled{results[2], results[0], results[1]};
    CHECK(same_detections(tta_merge(shuffled, cfg), base));
    std::vector<AugmentedResult> reversed{results[1], results[2], results[0]};
    CHECK(same_detections(tta_merge(reversed, cfg), base));
}

TEST_CASE("tta_merge rejects mixed images") {
    AugmentedResult a;
    a.image_id = 0;
    a.original = ImageSize{100, 100};
    a.scale_short_side = 100;
    AugmentedResult b = a;
    b.image_id = 1;
    CHECK_THROWS(tta_merge({a, b}, MergeConfig{}));
}

TEST_CASE("tta_merge truncates to max_dets") {
    Rng rng(41);
    AugmentedResult r;
    r.original = ImageSize{400, 400};
    r.scale_short_side = 400;
    r.detections = grid_detections(rng, 60, r.original);
    MergeConfig cfg;
    cfg.max_dets = 5;
    CHECK(tta_merge({r}, cfg).size() <= 5);
}

TEST_CASE("ensemble basics") {
    MergeConfig cfg;
    Rng rng(55);
    const auto dets = grid_detections(rng, 40, ImageSize{200, 200});

    // a singleton ensemble is plain suppression
    CHECK(same_detections(ensemble({{"m0", dets}}, cfg), nms(dets, cfg.suppression)));

    // disjoint results pool without interference
    const std::vector<Detection> left{det(0, 0, 10, 10, 0.9, 1)};
    const std::vector<Detection> right{det(50, 50, 60, 60, 0.8, 1)};
    CHECK(ensemble({{"a", left}, {"b", right}}, cfg).size() == 2);

    // three models voting on one box keep the best score
    const Detection box1 = det(0, 0, 10, 10, 0.9, 1);
    Detection box2 = box1;
    box2.score = 0.7;
    Detection box3 = box1;
    box3.score = 0.8;
    const auto merged = ensemble({{"a", {box1}}, {"b", {box2}}, {"c", {box3}}}, cfg);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].score == 0.9);
}

TEST_CASE("weighted box fusion averages cluster boxes") {
    MergeConfig cfg;
    cfg.weighted_box_fusion = true;
    const Detection a = det(0, 0, 10, 10, 0.6, 1);
    const Detection b = det(2, 0, 12, 10, 0.2, 1);
    CHECK(box_iou(a.box, b.box) > 0.5);
    const auto merged = ensemble({{"a", {a}}, {"b", {b}}}, cfg);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].box.x1 == doctest::Approx(0.5));  // (0.6*0 + 0.2*2) / 0.8
    CHECK(merged[0].box.x2 == doctest::Approx(10.5));
    CHECK(merged[0].score == 0.6);
}

TEST_CASE("masks ride along and survive merging") {
    const ImageSize canvas{16, 16};
    Bitmap bitmap(canvas);
    bitmap.set(3, 3, true);
    Detection d = det(0, 0, 8, 8, 0.9, 1);
    d.mask = rle_encode(bitmap);

    AugmentedResult r;
    r.original = canvas;
    r.scale_short_side = 16;
    r.detections = {d};
    MergeConfig cfg;
    const auto merged = tta_merge({r, flip_copy(r)}, cfg);
    REQUIRE(merged.size() == 1);
    REQUIRE(merged[0].mask.has_value());
    CHECK(*merged[0].mask == *d.mask);
}
