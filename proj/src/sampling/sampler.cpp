#include "detkit/sampling/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>

#include "detkit/core/rng.hpp"
#include "detkit/suppression/nms.hpp"

namespace detkit {

namespace {

std::vector<std::uint64_t> tie_break_keys(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint64_t> keys(n);
    for (auto& k : keys) k = rng.next_u64();
    return keys;
}

}  // namespace

void validate_sampler_config(const SamplerConfig& cfg) {
    if (!(cfg.critical_iou > 0.0 && cfg.critical_iou < 1.0)) {
        throw std::invalid_argument("critical_iou must lie in (0, 1)");
    }
    if (cfg.batch_size_per_image < 1) {
        throw std::invalid_argument("batch_size_per_image must be positive");
    }
    if (!(cfg.positive_fraction > 0.0 && cfg.positive_fraction < 1.0)) {
        throw std::invalid_argument("positive_fraction must lie in (0, 1)");
    }
    if (cfg.background_ceiling < 0.0 || cfg.background_ceiling > cfg.critical_iou) {
        throw std::invalid_argument("background_ceiling must lie in [0, critical_iou]");
    }
    if (cfg.relaxed_nms_threshold < cfg.baseline_nms_threshold) {
        throw std::invalid_argument("relaxed threshold must not undercut the baseline");
    }
}

std::vector<Proposal> annotate_proposals(const std::vector<Box>& boxes,
                                         const std::vector<double>& objectness,
                                         const std::vector<GroundTruthInstance>& gts) {
    if (boxes.size() != objectness.size()) {
        throw std::invalid_argument("boxes and objectness must align");
    }
    std::vector<Proposal> out(boxes.size());
    const std::ptrdiff_t n = std::ptrdiff_t(boxes.size());
#pragma omp parallel for schedule(static) if (n * std::ptrdiff_t(gts.size()) > 4096)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        Proposal p;
        p.box = boxes[std::size_t(i)];
        p.objectness = objectness[std::size_t(i)];
        for (std::size_t g = 0; g < gts.size(); ++g) {
            const double iou = box_iou(p.box, gts[g].box);
            if (iou > p.best_gt_iou) {
                p.best_gt_iou = iou;
                p.best_gt_index = int(g);
            }
        }
        out[std::size_t(i)] = p;
    }
    return out;
}

std::vector<TrainingSample> high_iou_sample(const std::vector<Proposal>& proposals,
                                            const std::vector<GroundTruthInstance>& gts,
                                            const SamplerConfig& cfg) {
    validate_sampler_config(cfg);

    // Relaxed suppression on the full proposal list, ranked by objectness.
    std::vector<Box> boxes(proposals.size());
    std::vector<double> obj(proposals.size());
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        boxes[i] = proposals[i].box;
        obj[i] = proposals[i].objectness;
    }
    std::vector<int> survivors =
        hard_nms_indices(boxes, obj, nullptr, cfg.relaxed_nms_threshold);
    std::sort(survivors.begin(), survivors.end());

    const std::vector<std::uint64_t> keys = tie_break_keys(proposals.size(), cfg.rng_seed);

    std::vector<int> positives;
    std::vector<int> backgrounds;
    for (const int i : survivors) {
        const Proposal& p = proposals[std::size_t(i)];
        if (p.best_gt_index && p.best_gt_iou >= cfg.critical_iou) {
            positives.push_back(i);
        } else if (p.best_gt_iou < cfg.background_ceiling) {
            backgrounds.push_back(i);
        }
        // the band in between is ignored
    }

    // Overlap decides positive priority; the RNG key only splits exact ties.
    std::sort(positives.begin(), positives.end(), [&](int a, int b) {
        const double ia = proposals[std::size_t(a)].best_gt_iou;
        const double ib = proposals[std::size_t(b)].best_gt_iou;
        if (ia != ib) return ia > ib;
        return keys[std::size_t(a)] < keys[std::size_t(b)];
    });
    std::sort(backgrounds.begin(), backgrounds.end(), [&](int a, int b) {
        return keys[std::size_t(a)] < keys[std::size_t(b)];
    });

    const int pos_quota = int(double(cfg.batch_size_per_image) * cfg.positive_fraction);
    const int n_pos = std::min<int>(pos_quota, int(positives.size()));
    const int n_bg = std::min<int>(cfg.batch_size_per_image - n_pos, int(backgrounds.size()));

    std::vector<TrainingSample> out;
    out.reserve(std::size_t(n_pos + n_bg));
    for (int k = 0; k < n_pos; ++k) {
        const Proposal& p = proposals[std::size_t(positives[std::size_t(k)])];
        TrainingSample s;
        s.proposal = p;
        s.label = SampleLabel::positive;
        s.matched_gt_index = p.best_gt_index;
        s.class_id = gts[std::size_t(*p.best_gt_index)].class_id;
        out.push_back(std::move(s));
    }
    for (int k = 0; k < n_bg; ++k) {
        TrainingSample s;
        s.proposal = proposals[std::size_t(backgrounds[std::size_t(k)])];
        s.label = SampleLabel::background;
        out.push_back(std::move(s));
    }
    return out;
}

ClassSamplingPlan class_aware_plan(const std::vector<Proposal>& proposals,
                                   const std::vector<GroundTruthInstance>& gts,
                                   double iou_cut) {
    ClassSamplingPlan plan;
    std::map<int, std::pair<std::int64_t, std::int64_t>> counts;  // class -> (above, matched)
    for (const auto& gt : gts) counts.emplace(gt.class_id, std::make_pair(0, 0));
    for (const auto& p : proposals) {
        if (!p.best_gt_index) continue;
        const int cls = gts[std::size_t(*p.best_gt_index)].class_id;
        auto& [above, matched] = counts[cls];
        ++matched;
        if (p.best_gt_iou > iou_cut) ++above;
    }
    for (const auto& [cls, c] : counts) {
        plan.alpha[cls] = c.second > 0 ? double(c.first) / double(c.second) : 0.0;
    }
    return plan;
}

std::map<int, int> largest_remainder_quotas(const std::map<int, double>& alpha, int total) {
    std::map<int, int> quotas;
    double sum = 0.0;
    for (const auto& [cls, a] : alpha) {
        quotas[cls] = 0;
        sum += a;
    }
    if (total <= 0 || sum <= 0.0) return quotas;

    std::vector<std::pair<int, double>> remainders;
    int assigned = 0;
    for (const auto& [cls, a] : alpha) {
        const double raw = double(total) * a / sum;
        const int base = int(std::floor(raw));
        quotas[cls] = base;
        assigned += base;
        remainders.emplace_back(cls, raw - double(base));
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (int k = 0; k < total - assigned && k < int(remainders.size()); ++k) {
        ++quotas[remainders[std::size_t(k)].first];
    }
    return quotas;
}

std::vector<TrainingSample> class_aware_sample(const std::vector<Proposal>& proposals,
                                               const std::vector<GroundTruthInstance>& gts,
                                               ClassSamplingPlan& plan,
                                               int total,
                                               std::uint64_t rng_seed,
                                               double iou_cut) {
    if (total < 0) throw std::invalid_argument("sample total must be non-negative");
    plan.per_class_quota = largest_remainder_quotas(plan.alpha, total);
    if (total == 0) return {};

    const std::vector<std::uint64_t> keys = tie_break_keys(proposals.size(), rng_seed);

    std::map<int, std::vector<int>> candidates;  // class -> positive candidates
    std::vector<int> background_pool;
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        const Proposal& p = proposals[i];
        if (p.best_gt_index && p.best_gt_iou > iou_cut) {
            candidates[gts[std::size_t(*p.best_gt_index)].class_id].push_back(int(i));
        } else {
            background_pool.push_back(int(i));
        }
    }

    std::vector<TrainingSample> out;
    int taken = 0;
    for (auto& [cls, quota] : plan.per_class_quota) {
        auto it = candidates.find(cls);
        if (it == candidates.end() || quota <= 0) continue;
        auto& pool = it->second;
        std::sort(pool.begin(), pool.end(), [&](int a, int b) {
            const double ia = proposals[std::size_t(a)].best_gt_iou;
            const double ib = proposals[std::size_t(b)].best_gt_iou;
            if (ia != ib) return ia > ib;
            return keys[std::size_t(a)] < keys[std::size_t(b)];
        });
        const int take = std::min<int>(quota, int(pool.size()));
        for (int k = 0; k < take; ++k) {
            const Proposal& p = proposals[std::size_t(pool[std::size_t(k)])];
            TrainingSample s;
            s.proposal = p;
            s.label = SampleLabel::positive;
            s.class_id = cls;
            s.matched_gt_index = p.best_gt_index;
            out.push_back(std::move(s));
            ++taken;
        }
    }

    std::sort(background_pool.begin(), background_pool.end(), [&](int a, int b) {
        return keys[std::size_t(a)] < keys[std::size_t(b)];
    });
    const int n_bg = std::min<int>(total - taken, int(background_pool.size()));
    for (int k = 0; k < n_bg; ++k) {
        TrainingSample s;
        s.proposal = proposals[std::size_t(background_pool[std::size_t(k)])];
        s.label = SampleLabel::background;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace detkit
