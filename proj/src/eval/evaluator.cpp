#include "detkit/eval/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <stdexcept>

namespace detkit {

namespace {

double instance_area(const Box& box, const std::optional<InstanceMask>& mask, EvalMode mode) {
    if (mode == EvalMode::segm) return double(mask_area(*mask));
    return box.area();
}

double pair_overlap(const Detection& det, const GroundTruthInstance& gt, EvalMode mode) {
    if (mode == EvalMode::segm) {
        return gt.iscrowd ? mask_iof(*det.mask, *gt.mask) : mask_iou(*det.mask, *gt.mask);
    }
    return gt.iscrowd ? box_iof(det.box, gt.box) : box_iou(det.box, gt.box);
}

struct CellEntry {
    double score;
    std::uint8_t tp;
    std::uint8_t ignored;
};

// Matching with per-instance ignore flags (crowd or out-of-range ground
// truth). Non-ignored instances always take precedence, even over a
// higher-overlap ignored one; unmatched detections outside the range are
// dropped from the precision-recall pool rather than counted as false
// positives.
void match_image(const std::vector<const Detection*>& dets,
                 const std::vector<const GroundTruthInstance*>& gts,
                 const std::vector<double>& overlaps,  // dets x gts
                 const std::vector<std::uint8_t>& gt_ignored, double threshold,
                 const AreaRange& range, EvalMode mode, std::vector<CellEntry>& out) {
    const std::size_t ng = gts.size();
    std::vector<std::uint8_t> gt_taken(ng, 0);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        int best = -1;
        double best_iou = threshold;
        for (int pass = 0; pass < 2 && best < 0; ++pass) {
            for (std::size_t g = 0; g < ng; ++g) {
                if ((gt_ignored[g] != 0) != (pass == 1)) continue;
                if (gt_taken[g] && !gts[g]->iscrowd) continue;
                const double iou = overlaps[d * ng + g];
                if (iou < best_iou) continue;
                if (best >= 0 && iou <= best_iou) continue;  // earliest best wins ties
                best_iou = iou;
                best = int(g);
            }
        }
        CellEntry entry{dets[d]->score, 0, 0};
        if (best >= 0) {
            if (!gts[std::size_t(best)]->iscrowd) gt_taken[std::size_t(best)] = 1;
            entry.ignored = gt_ignored[std::size_t(best)];
            entry.tp = entry.ignored ? 0 : 1;
        } else {
            const double area = instance_area(dets[d]->box, dets[d]->mask, mode);
            entry.ignored = (area < range.lo || area >= range.hi) ? 1 : 0;
        }
        out.push_back(entry);
    }
}

std::optional<double> interpolated_ap(const std::vector<CellEntry>& entries, std::int64_t n_gt,
                                      int recall_points) {
    if (n_gt <= 0) return std::nullopt;
    std::vector<double> recalls;
    std::vector<double> precisions;
    std::int64_t tp = 0, fp = 0;
    for (const auto& e : entries) {
        if (e.ignored) continue;
        if (e.tp) {
            ++tp;
        } else {
            ++fp;
        }
        recalls.push_back(double(tp) / double(n_gt));
        precisions.push_back(double(tp) / double(tp + fp));
    }
    if (recalls.empty()) return 0.0;
    for (std::size_t i = precisions.size() - 1; i-- > 0;) {
        precisions[i] = std::max(precisions[i], precisions[i + 1]);
    }
    double sum = 0.0;
    for (int i = 0; i < recall_points; ++i) {
        const double r = double(i) / double(recall_points - 1);
        const auto it = std::lower_bound(recalls.begin(), recalls.end(), r);
        if (it != recalls.end()) sum += precisions[std::size_t(it - recalls.begin())];
    }
    return sum / double(recall_points);
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& values) {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / double(n);
}

}  // namespace

EvalConfig EvalConfig::defaults(EvalMode mode) {
    EvalConfig cfg;
    cfg.iou_thresholds = {0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
    cfg.recall_points = 101;
    const double inf = std::numeric_limits<double>::infinity();
    cfg.area_ranges = {{"all", 0.0, inf},
                       {"small", 0.0, 32.0 * 32.0},
                       {"medium", 32.0 * 32.0, 96.0 * 96.0},
                       {"large", 96.0 * 96.0, inf}};
    cfg.max_dets = 100;
    cfg.mode = mode;
    return cfg;
}

void validate_eval_config(const EvalConfig& cfg) {
    if (cfg.iou_thresholds.empty()) throw std::invalid_argument("no IoU thresholds");
    for (std::size_t i = 0; i < cfg.iou_thresholds.size(); ++i) {
        const double t = cfg.iou_thresholds[i];
        if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("IoU threshold outside (0, 1]");
        if (i > 0 && t <= cfg.iou_thresholds[i - 1]) {
            throw std::invalid_argument("IoU thresholds must be strictly increasing");
        }
    }
    if (cfg.recall_points < 2) throw std::invalid_argument("need at least two recall points");
    if (cfg.area_ranges.empty()) throw std::invalid_argument("no area ranges");
    if (cfg.max_dets < 1) throw std::invalid_argument("max_dets must be positive");
}

GreedyMatch match_greedy(const std::vector<Detection>& dets_sorted,
                         const std::vector<GroundTruthInstance>& gts, double iou_threshold,
                         EvalMode mode) {
    for (std::size_t i = 1; i < dets_sorted.size(); ++i) {
        if (dets_sorted[i].score > dets_sorted[i - 1].score) {
            throw std::invalid_argument("detections must be sorted by descending score");
        }
    }
    GreedyMatch out;
    out.det_match.assign(dets_sorted.size(), -1);
    out.det_ignored.assign(dets_sorted.size(), 0);
    out.gt_matched.assign(gts.size(), 0);

    std::vector<std::uint8_t> gt_taken(gts.size(), 0);
    for (std::size_t d = 0; d < dets_sorted.size(); ++d) {
        const Detection& det = dets_sorted[d];
        int best = -1;
        double best_iou = iou_threshold;
        // non-crowd instances first; crowd regions only absorb the leftovers
        for (int pass = 0; pass < 2 && best < 0; ++pass) {
            for (std::size_t g = 0; g < gts.size(); ++g) {
                if (gts[g].iscrowd != (pass == 1)) continue;
                if (gts[g].class_id != det.class_id) continue;
                if (gt_taken[g]) continue;
                const double iou = pair_overlap(det, gts[g], mode);
                if (iou < best_iou) continue;
                if (best >= 0 && iou <= best_iou) continue;  // lowest index wins ties
                best_iou = iou;
                best = int(g);
            }
        }
        if (best >= 0) {
            if (gts[std::size_t(best)].iscrowd) {
                out.det_ignored[d] = 1;
            } else {
                gt_taken[std::size_t(best)] = 1;
                out.det_match[d] = best;
                out.gt_matched[std::size_t(best)] = 1;
            }
        }
    }
    return out;
}

std::optional<double> average_precision(std::vector<ScoredMatch> entries, std::int64_t n_gt,
                                        int recall_points) {
    if (n_gt < 0) throw std::invalid_argument("n_gt must be non-negative");
    if (recall_points < 2) throw std::invalid_argument("need at least two recall points");
    std::stable_sort(entries.begin(), entries.end(),
                     [](const ScoredMatch& a, const ScoredMatch& b) { return a.score > b.score; });
    std::vector<CellEntry> cells;
    cells.reserve(entries.size());
    for (const auto& e : entries) {
        cells.push_back({e.score, e.tp ? std::uint8_t(1) : std::uint8_t(0), 0});
    }
    return interpolated_ap(cells, n_gt, recall_points);
}

EvalResult evaluate(const std::vector<ImageDetections>& results, const GroundTruthSet& gts,
                    const EvalConfig& cfg) {
    validate_eval_config(cfg);

    // Canonical per-image views: matching outcomes must not depend on the
    // order detections or annotations arrive in.
    struct ImageData {
        std::vector<GroundTruthInstance> gt;
        std::vector<Detection> det;
    };
    std::map<int, ImageData> data;
    for (const auto& img : gts.images) {
        if (data.count(img.image_id)) throw std::invalid_argument("duplicate image id");
        auto& slot = data[img.image_id];
        slot.gt = img.instances;
        std::sort(slot.gt.begin(), slot.gt.end(), gt_instance_less);
        if (cfg.mode == EvalMode::segm) {
            for (const auto& inst : slot.gt) {
                if (!inst.mask) throw std::invalid_argument("segm mode needs ground-truth masks");
            }
        }
    }
    for (const auto& img : results) {
        const auto it = data.find(img.image_id);
        if (it == data.end()) throw std::invalid_argument("results reference an unknown image id");
        it->second.det.insert(it->second.det.end(), img.detections.begin(),
                              img.detections.end());
    }
    for (auto& [id, slot] : data) {
        std::sort(slot.det.begin(), slot.det.end(), detection_less);
        if (cfg.mode == EvalMode::segm) {
            for (const auto& d : slot.det) {
                if (!d.mask) throw std::invalid_argument("segm mode needs detection masks");
            }
        }
    }

    std::vector<int> classes = gts.category_ids;
    if (classes.empty()) {
        std::set<int> seen;
        for (const auto& img : gts.images) {
            for (const auto& inst : img.instances) seen.insert(inst.class_id);
        }
        classes.assign(seen.begin(), seen.end());
    } else {
        std::sort(classes.begin(), classes.end());
        classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    }
    for (const auto& [id, slot] : data) {
        for (const auto& d : slot.det) {
            if (!std::binary_search(classes.begin(), classes.end(), d.class_id)) {
                throw std::invalid_argument("detection class missing from ground truth vocabulary");
            }
        }
    }

    // Per (image, class) units with cached overlaps; detections truncated to
    // max_dets within each unit.
    struct Unit {
        int class_id;
        std::vector<const Detection*> det;
        std::vector<const GroundTruthInstance*> gt;
        std::vector<double> overlaps;
    };
    std::vector<Unit> units;
    for (const auto& [image_id, slot] : data) {
        for (const int cls : classes) {
            Unit unit;
            unit.class_id = cls;
            for (const auto& d : slot.det) {
                if (d.class_id == cls) unit.det.push_back(&d);
            }
            if (int(unit.det.size()) > cfg.max_dets) unit.det.resize(std::size_t(cfg.max_dets));
            for (const auto& g : slot.gt) {
                if (g.class_id == cls) unit.gt.push_back(&g);
            }
            if (!unit.det.empty() || !unit.gt.empty()) units.push_back(std::move(unit));
        }
    }
    const std::ptrdiff_t n_units = std::ptrdiff_t(units.size());
#pragma omp parallel for schedule(dynamic) if (n_units > 1)
    for (std::ptrdiff_t u = 0; u < n_units; ++u) {
        Unit& unit = units[std::size_t(u)];
        unit.overlaps.assign(unit.det.size() * unit.gt.size(), 0.0);
        for (std::size_t d = 0; d < unit.det.size(); ++d) {
            for (std::size_t g = 0; g < unit.gt.size(); ++g) {
                unit.overlaps[d * unit.gt.size() + g] =
                    pair_overlap(*unit.det[d], *unit.gt[g], cfg.mode);
            }
        }
    }

    const std::size_t n_cls = classes.size();
    const std::size_t n_thr = cfg.iou_thresholds.size();
    const std::size_t n_rng = cfg.area_ranges.size();
    std::vector<std::optional<double>> ap_cells(n_cls * n_thr * n_rng);

    std::vector<std::vector<const Unit*>> units_by_class(n_cls);
    for (const auto& unit : units) {
        const std::size_t ci = std::size_t(
            std::lower_bound(classes.begin(), classes.end(), unit.class_id) - classes.begin());
        units_by_class[ci].push_back(&unit);
    }

    const std::ptrdiff_t n_cells = std::ptrdiff_t(ap_cells.size());
#pragma omp parallel for schedule(dynamic) if (n_cells > 1)
    for (std::ptrdiff_t c = 0; c < n_cells; ++c) {
        const std::size_t ri = std::size_t(c) % n_rng;
        const std::size_t ti = (std::size_t(c) / n_rng) % n_thr;
        const std::size_t ci = std::size_t(c) / (n_rng * n_thr);
        const AreaRange& range = cfg.area_ranges[ri];
        const double threshold = cfg.iou_thresholds[ti];

        std::vector<CellEntry> entries;
        std::int64_t n_gt = 0;
        for (const Unit* unit : units_by_class[ci]) {
            std::vector<std::uint8_t> gt_ignored(unit->gt.size());
            for (std::size_t g = 0; g < unit->gt.size(); ++g) {
                const auto* gt = unit->gt[g];
                const double area = instance_area(gt->box, gt->mask, cfg.mode);
                const bool out_of_range = area < range.lo || area >= range.hi;
                gt_ignored[g] = (gt->iscrowd || out_of_range) ? 1 : 0;
                if (!gt_ignored[g]) ++n_gt;
            }
            match_image(unit->det, unit->gt, unit->overlaps, gt_ignored, threshold, range,
                        cfg.mode, entries);
        }
        std::stable_sort(entries.begin(), entries.end(),
                         [](const CellEntry& a, const CellEntry& b) { return a.score > b.score; });
        ap_cells[std::size_t(c)] = interpolated_ap(entries, n_gt, cfg.recall_points);
    }

    const auto cell_at = [&](std::size_t ci, std::size_t ti, std::size_t ri) {
        return ap_cells[(ci * n_thr + ti) * n_rng + ri];
    };
    const auto threshold_index = [&](double t) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < cfg.iou_thresholds.size(); ++i) {
            if (std::abs(cfg.iou_thresholds[i] - t) < 1e-9) return i;
        }
        return std::nullopt;
    };
    const auto range_index = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < cfg.area_ranges.size(); ++i) {
            if (cfg.area_ranges[i].name == name) return i;
        }
        return std::nullopt;
    };

    const auto class_summary = [&](std::size_t ci) {
        EvalSummary s;
        std::vector<std::optional<double>> over_thr;
        for (std::size_t ti = 0; ti < n_thr; ++ti) over_thr.push_back(cell_at(ci, ti, 0));
        s.ap = mean_defined(over_thr);
        if (const auto t50 = threshold_index(0.50)) s.ap50 = cell_at(ci, *t50, 0);
        if (const auto t75 = threshold_index(0.75)) s.ap75 = cell_at(ci, *t75, 0);
        const auto fill_range = [&](const std::string& name, std::optional<double>& out) {
            const auto ri = range_index(name);
            if (!ri) return;
            std::vector<std::optional<double>> vals;
            for (std::size_t ti = 0; ti < n_thr; ++ti) vals.push_back(cell_at(ci, ti, *ri));
            out = mean_defined(vals);
        };
        fill_range("small", s.ap_s);
        fill_range("medium", s.ap_m);
        fill_range("large", s.ap_l);
        return s;
    };

    EvalResult result;
    std::vector<std::optional<double>> all_ap, all_ap50, all_ap75, all_s, all_m, all_l;
    for (std::size_t ci = 0; ci < n_cls; ++ci) {
        const EvalSummary s = class_summary(ci);
        result.per_class[classes[ci]] = s;
        all_ap.push_back(s.ap);
        all_ap50.push_back(s.ap50);
        all_ap75.push_back(s.ap75);
        all_s.push_back(s.ap_s);
        all_m.push_back(s.ap_m);
        all_l.push_back(s.ap_l);
    }
    result.summary.ap = mean_defined(all_ap);
    result.summary.ap50 = mean_defined(all_ap50);
    result.summary.ap75 = mean_defined(all_ap75);
    result.summary.ap_s = mean_defined(all_s);
    result.summary.ap_m = mean_defined(all_m);
    result.summary.ap_l = mean_defined(all_l);
    return result;
}

}  // namespace detkit
