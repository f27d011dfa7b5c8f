#include <doctest.h>

#include <cmath>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "detkit/core/rng.hpp"
#include "detkit/reference/reference.hpp"
#include "detkit/suppression/nms.hpp"

using namespace detkit;

namespace {

Detection det(double x1, double y1, double x2, double y2, double score, int cls = 0) {
    Detection d;
    d.box = Box{x1, y1, x2, y2};
    d.score = score;
    d.class_id = cls;
    return d;
}

std::vector<Detection> random_soup(Rng& rng, int max_boxes, int max_classes) {
    std::vector<Detection> dets;
    const int n = rng.uniform_int(0, max_boxes);
    for (int i = 0; i < n; ++i) {
        const double x1 = rng.uniform_int(0, 160);
        const double y1 = rng.uniform_int(0, 160);
        const double w = rng.uniform_int(8, 48);
        const double h = rng.uniform_int(8, 48);
        dets.push_back(det(x1, y1, x1 + w, y1 + h, rng.uniform(), rng.uniform_int(0, max_classes - 1)));
    }
    return dets;
}

bool same_detections(const std::vector<Detection>& a, const std::vector<Detection>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] == b[i])) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("hard nms basics") {
    NmsConfig cfg;
    cfg.iou_threshold = 0.5;

    const auto single = nms({det(0, 0, 10, 10, 0.9)}, cfg);
    CHECK(single.size() == 1);

    // overlapping pair at IoU 0.8: (0,0,10,9) vs (0,1,10,10)
    const Detection a = det(0, 0, 10, 9, 0.9);
    const Detection b = det(0, 1, 10, 10, 0.8);
    CHECK(box_iou(a.box, b.box) == doctest::Approx(0.8));
    const auto merged = nms({a, b}, cfg);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0] == a);

    // different classes survive independently
    Detection c = b;
    c.class_id = 1;
    const auto per_class = nms({a, c}, cfg);
    CHECK(per_class.size() == 2);

    cfg.class_agnostic = true;
    CHECK(nms({a, c}, cfg).size() == 1);

    CHECK(nms({}, cfg).empty());
}

TEST_CASE("hard nms equals the brute-force oracle on random soups") {
    Rng rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto dets = random_soup(rng, 200, 5);
        NmsConfig cfg;
        cfg.iou_threshold = rng.uniform(0.2, 0.9);
        cfg.class_agnostic = rng.uniform() < 0.3;
        const auto fast = nms(dets, cfg);
        const auto slow = reference::nms_bruteforce(dets, cfg.iou_threshold, cfg.class_agnostic);
        CHECK(same_detections(fast, slow));
    }
}

TEST_CASE("raising the threshold keeps previously surviving boxes") {
    // clustered boxes, the regime suppression actually runs in
    Rng rng(577);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Detection> dets;
        const int clusters = rng.uniform_int(1, 4);
        for (int c = 0; c < clusters; ++c) {
            const double cx = rng.uniform_int(0, 3) * 120.0;
            const double cy = rng.uniform_int(0, 3) * 120.0;
            const int members = rng.uniform_int(1, 6);
            for (int m = 0; m < members; ++m) {
                const double dx = rng.uniform_int(0, 8);
                const double dy = rng.uniform_int(0, 8);
                dets.push_back(det(cx + dx, cy + dy, cx + dx + 64, cy + dy + 64, rng.uniform()));
            }
        }
        NmsConfig lo;
        lo.iou_threshold = 0.5;
        NmsConfig hi;
        hi.iou_threshold = 0.8;
        const auto kept_lo = nms(dets, lo);
        const auto kept_hi = nms(dets, hi);
        for (const auto& d : kept_lo) {
            bool found = false;
            for (const auto& k : kept_hi) found = found || k == d;
            CHECK(found);
        }
    }
}

TEST_CASE("soft nms decays scores by the documented formulas") {
    const Detection a = det(0, 0, 10, 9, 0.9);
    const Detection b = det(0, 1, 10, 10, 0.8);
    const double iou = box_iou(a.box, b.box);

    NmsConfig linear;
    linear.mode = NmsMode::soft_linear;
    linear.iou_threshold = 0.5;
    const auto lin = soft_nms({a, b}, linear);
    REQUIRE(lin.size() == 2);
    CHECK(lin[0].score == 0.9);
    CHECK(lin[1].score == 0.8 * (1.0 - iou));
    CHECK(lin[1].score == doctest::Approx(0.16).epsilon(1e-9));

    NmsConfig gauss;
    gauss.mode = NmsMode::soft_gaussian;
    gauss.iou_threshold = 0.5;
    gauss.sigma = 0.5;
    const auto g = soft_nms({a, b}, gauss);
    REQUIRE(g.size() == 2);
    CHECK(g[1].score == 0.8 * std::exp(-(iou * iou) / 0.5));
    CHECK(g[1].score == doctest::Approx(0.2224).epsilon(1e-3));

    // disjoint boxes never decay
    const auto apart = soft_nms({det(0, 0, 10, 10, 0.9), det(50, 50, 60, 60, 0.7)}, gauss);
    CHECK(apart[0].score == 0.9);
    CHECK(apart[1].score == 0.7);
}

TEST_CASE("soft nms at threshold one is the identity on scores") {
    Rng rng(202);
    for (const NmsMode mode : {NmsMode::soft_linear, NmsMode::soft_gaussian}) {
        NmsConfig cfg;
        cfg.mode = mode;
        cfg.iou_threshold = 1.0;
        cfg.score_floor = 0.0;
        const auto dets = random_soup(rng, 60, 3);
        const auto out = soft_nms(dets, cfg);
        REQUIRE(out.size() == dets.size());
        std::multiset<double> before, after;
        for (const auto& d : dets) before.insert(d.score);
        for (const auto& d : out) after.insert(d.score);
        CHECK(before == after);
    }
}

TEST_CASE("soft nms matches the serial reference") {
    Rng rng(303);
    for (int trial = 0; trial < 200; ++trial) {
        const auto dets = random_soup(rng, 80, 3);
        NmsConfig cfg;
        cfg.mode = rng.uniform() < 0.5 ? NmsMode::soft_linear : NmsMode::soft_gaussian;
        cfg.iou_threshold = rng.uniform(0.3, 0.9);
        cfg.sigma = rng.uniform(0.1, 1.0);
        cfg.score_floor = rng.uniform() < 0.5 ? 0.0 : 0.05;
        const auto fast = soft_nms(dets, cfg);
        const auto slow = reference::soft_nms_reference(dets, cfg);
        CHECK(same_detections(fast, slow));
    }
}

TEST_CASE("soft nms rejects hard mode") {
    CHECK_THROWS(soft_nms({}, NmsConfig{}));
}

TEST_CASE("relaxed nms") {
    // everything survives at threshold 1.0
    const auto dets = std::vector<Detection>{det(0, 0, 10, 10, 0.9), det(1, 0, 11, 10, 0.8)};
    CHECK(relaxed_nms(dets, 1.0).size() == dets.size());
    CHECK(relaxed_nms({}, 0.9).empty());

    // three stacked boxes: the outer two overlap the middle at 0.75 but each
    // other much less, so the baseline keeps one and the relaxed pass all
    const Detection top = det(0, 0, 14, 10, 0.9);
    const Detection right = det(2, 0, 16, 10, 0.8);
    const Detection left = det(-2, 0, 12, 10, 0.7);
    CHECK(box_iou(top.box, right.box) == doctest::Approx(0.75));
    CHECK(box_iou(top.box, left.box) == doctest::Approx(0.75));
    CHECK(relaxed_nms({top, right, left}, 0.7).size() == 1);
    CHECK(relaxed_nms({top, right, left}, 0.8).size() == 3);

    CHECK_THROWS(relaxed_nms(dets, 0.5, 0.7));
}

TEST_CASE("suppression is deterministic across runs and thread counts") {
    Rng rng(404);
    const auto dets = random_soup(rng, 200, 4);
    NmsConfig cfg;
    cfg.iou_threshold = 0.6;
    const auto first = nms(dets, cfg);
#ifdef _OPENMP
    const int saved = omp_get_max_threads();
    for (const int threads : {1, 2, 4}) {
        omp_set_num_threads(threads);
        CHECK(same_detections(nms(dets, cfg), first));
    }
    omp_set_num_threads(saved);
#else
    CHECK(same_detections(nms(dets, cfg), first));
#endif
}
