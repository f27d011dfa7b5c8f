#include "detkit/sampling/cascade.hpp"

#include <cstddef>
#include <stdexcept>

namespace detkit {

namespace {

std::vector<Proposal> annotate_boxes(const std::vector<Box>& boxes,
                                     const std::vector<double>& objectness,
                                     const std::vector<GroundTruthInstance>* gts) {
    if (gts) return annotate_proposals(boxes, objectness, *gts);
    std::vector<Proposal> out(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        out[i].box = boxes[i];
        out[i].objectness = objectness[i];
    }
    return out;
}

}  // namespace

std::vector<CascadeStageOutput> cascade_run(const std::vector<Proposal>& proposals,
                                            const std::vector<CascadeStage>& stages,
                                            const std::vector<GroundTruthInstance>* gts) {
    for (std::size_t s = 1; s < stages.size(); ++s) {
        if (stages[s].assign_iou_threshold < stages[s - 1].assign_iou_threshold) {
            throw std::invalid_argument("cascade thresholds must be non-decreasing");
        }
    }
    for (const auto& stage : stages) {
        if (!stage.refiner) throw std::invalid_argument("cascade stage lacks a refiner");
    }

    std::vector<Box> boxes(proposals.size());
    std::vector<double> objectness(proposals.size());
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        boxes[i] = proposals[i].box;
        objectness[i] = proposals[i].objectness;
    }

    std::vector<Proposal> current = annotate_boxes(boxes, objectness, gts);
    std::vector<CascadeStageOutput> out;
    out.reserve(stages.size());

    for (const auto& stage : stages) {
        CascadeStageOutput stage_out;
        stage_out.boxes.resize(current.size());
        const std::ptrdiff_t n = std::ptrdiff_t(current.size());
#pragma omp parallel for schedule(static) if (n > 512)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const Proposal& p = current[std::size_t(i)];
            CascadeContext ctx;
            ctx.stage_index = stage.stage_index;
            if (gts && p.best_gt_index) ctx.matched_gt = &(*gts)[std::size_t(*p.best_gt_index)];
            stage_out.boxes[std::size_t(i)] = stage.refiner(p.box, ctx);
        }

        stage_out.annotated = annotate_boxes(stage_out.boxes, objectness, gts);
        if (gts) {
            stage_out.samples.reserve(current.size());
            for (const Proposal& p : stage_out.annotated) {
                TrainingSample s;
                s.proposal = p;
                if (p.best_gt_index && p.best_gt_iou >= stage.assign_iou_threshold) {
                    s.label = SampleLabel::positive;
                    s.matched_gt_index = p.best_gt_index;
                    s.class_id = (*gts)[std::size_t(*p.best_gt_index)].class_id;
                } else {
                    s.label = SampleLabel::background;
                }
                stage_out.samples.push_back(std::move(s));
            }
        }
        current = stage_out.annotated;
        out.push_back(std::move(stage_out));
    }
    return out;
}

BoxRefiner identity_refiner() {
    return [](const Box& b, const CascadeContext&) { return b; };
}

BoxRefiner snap_to_gt_refiner() {
    return [](const Box& b, const CascadeContext& ctx) {
        return ctx.matched_gt ? ctx.matched_gt->box : b;
    };
}

BoxRefiner fractional_step_refiner(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) {
        throw std::invalid_argument("fractional step beta must lie in (0, 1)");
    }
    return [beta](const Box& b, const CascadeContext& ctx) {
        if (!ctx.matched_gt) return b;
        const Box& g = ctx.matched_gt->box;
        return Box{b.x1 + beta * (g.x1 - b.x1), b.y1 + beta * (g.y1 - b.y1),
                   b.x2 + beta * (g.x2 - b.x2), b.y2 + beta * (g.y2 - b.y2)};
    };
}

}  // namespace detkit
