// Parallel kernels against their serial reference twins. Thread counts are
// encoded in the benchmark argument so a single run shows the scaling.

#include <benchmark/benchmark.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "detkit/core/rng.hpp"
#include "detkit/eval/evaluator.hpp"
#include "detkit/pipeline/two_pass.hpp"
#include "detkit/reference/reference.hpp"
#include "detkit/suppression/nms.hpp"
#include "detkit/synth/generator.hpp"

using namespace detkit;

namespace {

void set_threads(int threads) {
#ifdef _OPENMP
    omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

std::vector<Detection> detection_soup(std::uint64_t seed, int n) {
    Rng rng(seed);
    std::vector<Detection> dets;
    for (int i = 0; i < n; ++i) {
        Detection d;
        const double x1 = rng.uniform_int(0, 900);
        const double y1 = rng.uniform_int(0, 900);
        d.box = Box{x1, y1, x1 + rng.uniform_int(16, 120), y1 + rng.uniform_int(16, 120)};
        d.score = rng.uniform();
        d.class_id = rng.uniform_int(0, 7);
        dets.push_back(d);
    }
    return dets;
}

std::vector<Box> box_soup(std::uint64_t seed, int n) {
    Rng rng(seed);
    std::vector<Box> boxes;
    for (int i = 0; i < n; ++i) {
        const double x1 = rng.uniform_int(0, 900);
        const double y1 = rng.uniform_int(0, 900);
        boxes.push_back(Box{x1, y1, x1 + rng.uniform_int(16, 120), y1 + rng.uniform_int(16, 120)});
    }
    return boxes;
}

struct EvalInputs {
    GroundTruthSet gts;
    std::vector<ImageDetections> results;
};

EvalInputs eval_inputs() {
    SceneSpec spec;
    spec.rng_seed = 7;
    spec.image_count = 24;
    spec.min_instances = 4;
    spec.max_instances = 12;
    spec.noise.iou_jitter = 0.15;
    spec.noise.false_positive_rate = 0.3;
    spec.generate_masks = false;
    const Scene scene = synth_generate(spec);
    return {scene.gts, scene.detections};
}

}  // namespace

static void BM_IouMatrix(benchmark::State& state) {
    set_threads(int(state.range(0)));
    const auto a = box_soup(1, 800);
    const auto b = box_soup(2, 400);
    for (auto _ : state) {
        benchmark::DoNotOptimize(box_iou_matrix(a, b));
    }
}
BENCHMARK(BM_IouMatrix)->Arg(1)->Arg(2)->Arg(4);

static void BM_IouMatrixSerialReference(benchmark::State& state) {
    const auto a = box_soup(1, 800);
    const auto b = box_soup(2, 400);
    for (auto _ : state) {
        std::vector<double> out(a.size() * b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            for (std::size_t j = 0; j < b.size(); ++j) {
                out[i * b.size() + j] = reference::box_iou_rasterized(a[i], b[j], 64.0);
            }
        }
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_IouMatrixSerialReference);

static void BM_HardNms(benchmark::State& state) {
    set_threads(int(state.range(0)));
    const auto dets = detection_soup(3, 4000);
    NmsConfig cfg;
    cfg.iou_threshold = 0.5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(nms(dets, cfg));
    }
}
BENCHMARK(BM_HardNms)->Arg(1)->Arg(2)->Arg(4);

static void BM_HardNmsBruteforce(benchmark::State& state) {
    const auto dets = detection_soup(3, 4000);
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::nms_bruteforce(dets, 0.5, false));
    }
}
BENCHMARK(BM_HardNmsBruteforce);

static void BM_MaskIouRle(benchmark::State& state) {
    Rng rng(11);
    const ImageSize canvas{512, 512};
    Bitmap a(canvas), b(canvas);
    for (auto& v : a.data) v = rng.uniform() < 0.4 ? 1 : 0;
    for (auto& v : b.data) v = rng.uniform() < 0.4 ? 1 : 0;
    const InstanceMask ma = rle_encode(a);
    const InstanceMask mb = rle_encode(b);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mask_iou(ma, mb));
    }
}
BENCHMARK(BM_MaskIouRle);

static void BM_MaskIouBitmapReference(benchmark::State& state) {
    Rng rng(11);
    const ImageSize canvas{512, 512};
    Bitmap a(canvas), b(canvas);
    for (auto& v : a.data) v = rng.uniform() < 0.4 ? 1 : 0;
    for (auto& v : b.data) v = rng.uniform() < 0.4 ? 1 : 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::bitmap_iou(a, b));
    }
}
BENCHMARK(BM_MaskIouBitmapReference);

static void BM_Evaluate(benchmark::State& state) {
    set_threads(int(state.range(0)));
    const EvalInputs inputs = eval_inputs();
    const EvalConfig cfg = EvalConfig::defaults(EvalMode::bbox);
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate(inputs.results, inputs.gts, cfg));
    }
}
BENCHMARK(BM_Evaluate)->Arg(1)->Arg(2)->Arg(4);

static void BM_EvaluateBruteforce(benchmark::State& state) {
    const EvalInputs inputs = eval_inputs();
    const EvalConfig cfg = EvalConfig::defaults(EvalMode::bbox);
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::evaluate_bruteforce(inputs.results, inputs.gts, cfg));
    }
}
BENCHMARK(BM_EvaluateBruteforce);

static void BM_TwoPass(benchmark::State& state) {
    set_threads(int(state.range(0)));
    SceneSpec spec;
    spec.rng_seed = 13;
    spec.image_count = 1;
    spec.canvas = ImageSize{512, 512};
    spec.min_instances = 24;
    spec.max_instances = 24;
    spec.max_instance_size = 150;
    const Scene scene = synth_generate(spec);
    const auto predictor = gt_clip_predictor(scene.gts);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            two_pass(0, scene.detections[0].detections, predictor, spec.canvas));
    }
}
BENCHMARK(BM_TwoPass)->Arg(1)->Arg(2)->Arg(4);

BENCHMARK_MAIN();
