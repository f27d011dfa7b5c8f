#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <stdexcept>

#include "detkit/reference/reference.hpp"

namespace detkit::reference {

namespace {

struct FlatDet {
    const Detection* det = nullptr;
    Bitmap bitmap;  // decoded once per detection in segm mode
};

struct FlatGt {
    const GroundTruthInstance* gt = nullptr;
    Bitmap bitmap;
};

struct FlatImage {
    std::vector<FlatDet> dets;  // canonical order, all classes
    std::vector<FlatGt> gts;
};

double det_area(const FlatDet& d, EvalMode mode) {
    if (mode == EvalMode::segm) {
        std::int64_t ones = 0;
        for (const auto v : d.bitmap.data) ones += v ? 1 : 0;
        return double(ones);
    }
    return d.det->box.area();
}

double gt_area(const FlatGt& g, EvalMode mode) {
    if (mode == EvalMode::segm) {
        std::int64_t ones = 0;
        for (const auto v : g.bitmap.data) ones += v ? 1 : 0;
        return double(ones);
    }
    return g.gt->box.area();
}

double overlap(const FlatDet& d, const FlatGt& g, EvalMode mode) {
    if (mode == EvalMode::segm) {
        std::int64_t inter = 0;
        std::int64_t d_ones = 0;
        std::int64_t g_ones = 0;
        for (std::size_t i = 0; i < d.bitmap.data.size(); ++i) {
            const bool in_d = d.bitmap.data[i] != 0;
            const bool in_g = g.bitmap.data[i] != 0;
            if (in_d) ++d_ones;
            if (in_g) ++g_ones;
            if (in_d && in_g) ++inter;
        }
        if (g.gt->iscrowd) {
            return d_ones > 0 ? double(inter) / double(d_ones) : 0.0;
        }
        if (d_ones == 0 && g_ones == 0) return 1.0;
        return double(inter) / double(d_ones + g_ones - inter);
    }
    return g.gt->iscrowd ? box_iof(d.det->box, g.gt->box) : box_iou(d.det->box, g.gt->box);
}

struct PoolEntry {
    double score;
    bool tp;
};

std::optional<double> ap_direct_scan(const std::vector<PoolEntry>& pool, std::int64_t n_gt,
                                     int recall_points) {
    if (n_gt <= 0) return std::nullopt;
    std::vector<double> recalls, precisions;
    std::int64_t tp = 0, fp = 0;
    for (const auto& e : pool) {
        if (e.tp) {
            ++tp;
        } else {
            ++fp;
        }
        recalls.push_back(double(tp) / double(n_gt));
        precisions.push_back(double(tp) / double(tp + fp));
    }
    double sum = 0.0;
    for (int i = 0; i < recall_points; ++i) {
        const double r = double(i) / double(recall_points - 1);
        double best = 0.0;
        for (std::size_t k = 0; k < recalls.size(); ++k) {
            if (recalls[k] >= r) best = std::max(best, precisions[k]);
        }
        sum += best;
    }
    return sum / double(recall_points);
}

std::optional<double> average_defined(const std::vector<std::optional<double>>& vals) {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : vals) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / double(n);
}

}  // namespace

EvalResult evaluate_bruteforce(const std::vector<ImageDetections>& results,
                               const GroundTruthSet& gts, const EvalConfig& cfg) {
    validate_eval_config(cfg);

    std::map<int, std::vector<GroundTruthInstance>> gt_by_image;
    for (const auto& img : gts.images) {
        if (gt_by_image.count(img.image_id)) throw std::invalid_argument("duplicate image id");
        gt_by_image[img.image_id] = img.instances;
    }
    std::map<int, std::vector<Detection>> det_by_image;
    for (const auto& img : results) {
        if (!gt_by_image.count(img.image_id)) {
            throw std::invalid_argument("results reference an unknown image id");
        }
        auto& dst = det_by_image[img.image_id];
        dst.insert(dst.end(), img.detections.begin(), img.detections.end());
    }

    std::map<int, FlatImage> images;
    for (auto& [id, gt_list] : gt_by_image) {
        std::sort(gt_list.begin(), gt_list.end(), gt_instance_less);
        FlatImage img;
        for (const auto& gt : gt_list) {
            FlatGt fg;
            fg.gt = &gt;
            if (cfg.mode == EvalMode::segm) {
                if (!gt.mask) throw std::invalid_argument("segm mode needs ground-truth masks");
                fg.bitmap = rle_decode(*gt.mask);
            }
            img.gts.push_back(std::move(fg));
        }
        auto det_it = det_by_image.find(id);
        if (det_it != det_by_image.end()) {
            std::sort(det_it->second.begin(), det_it->second.end(), detection_less);
            for (const auto& d : det_it->second) {
                FlatDet fd;
                fd.det = &d;
                if (cfg.mode == EvalMode::segm) {
                    if (!d.mask) throw std::invalid_argument("segm mode needs detection masks");
                    fd.bitmap = rle_decode(*d.mask);
                }
                img.dets.push_back(std::move(fd));
            }
        }
        images[id] = std::move(img);
    }

    std::set<int> class_set(gts.category_ids.begin(), gts.category_ids.end());
    if (class_set.empty()) {
        for (const auto& [id, gt_list] : gt_by_image) {
            for (const auto& gt : gt_list) class_set.insert(gt.class_id);
        }
    }
    const std::vector<int> classes(class_set.begin(), class_set.end());

    std::map<int, std::vector<std::optional<double>>> ap_by_class;  // [thr * ranges + range]
    const std::size_t n_thr = cfg.iou_thresholds.size();
    const std::size_t n_rng = cfg.area_ranges.size();
    for (const int cls : classes) {
        ap_by_class[cls].assign(n_thr * n_rng, std::nullopt);
        for (std::size_t ti = 0; ti < n_thr; ++ti) {
            for (std::size_t ri = 0; ri < n_rng; ++ri) {
                const double threshold = cfg.iou_thresholds[ti];
                const AreaRange& range = cfg.area_ranges[ri];

                std::vector<PoolEntry> pool;
                std::int64_t n_gt = 0;
                for (const auto& [id, img] : images) {
                    std::vector<const FlatDet*> dets;
                    for (const auto& d : img.dets) {
                        if (d.det->class_id == cls) dets.push_back(&d);
                    }
                    if (int(dets.size()) > cfg.max_dets) dets.resize(std::size_t(cfg.max_dets));
                    std::vector<const FlatGt*> gt_list;
                    std::vector<bool> ignored;
                    for (const auto& g : img.gts) {
                        if (g.gt->class_id != cls) continue;
                        gt_list.push_back(&g);
                        const double area = gt_area(g, cfg.mode);
                        const bool out = area < range.lo || area >= range.hi;
                        ignored.push_back(g.gt->iscrowd || out);
                        if (!ignored.back()) ++n_gt;
                    }

                    std::vector<bool> taken(gt_list.size(), false);
                    for (const FlatDet* d : dets) {
                        int best = -1;
                        double best_iou = threshold;
                        for (int pass = 0; pass < 2 && best < 0; ++pass) {
                            for (std::size_t g = 0; g < gt_list.size(); ++g) {
                                if (ignored[g] != (pass == 1)) continue;
                                if (taken[g] && !gt_list[g]->gt->iscrowd) continue;
                                const double iou = overlap(*d, *gt_list[g], cfg.mode);
                                if (iou < best_iou) continue;
                                if (best >= 0 && iou <= best_iou) continue;
                                best_iou = iou;
                                best = int(g);
                            }
                        }
                        if (best >= 0) {
                            if (!gt_list[std::size_t(best)]->gt->iscrowd) {
                                taken[std::size_t(best)] = true;
                            }
                            if (!ignored[std::size_t(best)]) pool.push_back({d->det->score, true});
                            // matches onto ignored ground truth leave the pool
                        } else {
                            const double area = det_area(*d, cfg.mode);
                            if (area >= range.lo && area < range.hi) {
                                pool.push_back({d->det->score, false});
                            }
                        }
                    }
                }
                std::stable_sort(pool.begin(), pool.end(), [](const PoolEntry& a, const PoolEntry& b) {
                    return a.score > b.score;
                });
                ap_by_class[cls][ti * n_rng + ri] = ap_direct_scan(pool, n_gt, cfg.recall_points);
            }
        }
    }

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

    EvalResult result;
    std::vector<std::optional<double>> all_ap, all_ap50, all_ap75, all_s, all_m, all_l;
    for (const int cls : classes) {
        const auto& cells = ap_by_class[cls];
        EvalSummary s;
        std::vector<std::optional<double>> over_thr;
        for (std::size_t ti = 0; ti < n_thr; ++ti) over_thr.push_back(cells[ti * n_rng + 0]);
        s.ap = average_defined(over_thr);
        if (const auto t = threshold_index(0.50)) s.ap50 = cells[*t * n_rng + 0];
        if (const auto t = threshold_index(0.75)) s.ap75 = cells[*t * n_rng + 0];
        const auto fill = [&](const std::string& name, std::optional<double>& out) {
            const auto ri = range_index(name);
            if (!ri) return;
            std::vector<std::optional<double>> vals;
            for (std::size_t ti = 0; ti < n_thr; ++ti) vals.push_back(cells[ti * n_rng + *ri]);
            out = average_defined(vals);
        };
        fill("small", s.ap_s);
        fill("medium", s.ap_m);
        fill("large", s.ap_l);
        result.per_class[cls] = s;
        all_ap.push_back(s.ap);
        all_ap50.push_back(s.ap50);
        all_ap75.push_back(s.ap75);
        all_s.push_back(s.ap_s);
        all_m.push_back(s.ap_m);
        all_l.push_back(s.ap_l);
    }
    result.summary.ap = average_defined(all_ap);
    result.summary.ap50 = average_defined(all_ap50);
    result.summary.ap75 = average_defined(all_ap75);
    result.summary.ap_s = average_defined(all_s);
    result.summary.ap_m = average_defined(all_m);
    result.summary.ap_l = average_defined(all_l);
    return result;
}

}  // namespace detkit::reference
