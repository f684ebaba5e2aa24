// SPDX-License-Identifier: Apache-2.0
//
// Frame-level anomaly scoring: reconstruction error, regularity score,
// exact ROC / AUC / EER, residual heatmaps and the loss x optimizer sweep.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sitgru/error.hpp"
#include "sitgru/optim.hpp"
#include "sitgru/tensor.hpp"

namespace sitgru {

/// Euclidean distance between a frame (or cuboid) and its reconstruction.
inline double reconstruction_error(const Tensor& frame, const Tensor& recon) {
    if (frame.size() != recon.size()) {
        throw DimensionError("reconstruction_error: " + shape_string(frame.shape()) + " vs " + shape_string(recon.shape()));
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const double d = frame[i] - recon[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

struct TimedCost {
    double time;  // position on the frame axis (cuboid center)
    double cost;
};

/// Averages consecutive costs in groups of `group` (time and cost alike).
inline std::vector<TimedCost> average_in_groups(std::span<const TimedCost> costs, std::size_t group) {
    if (group == 0) throw ArgumentError("group size must be positive");
    std::vector<TimedCost> out;
    for (std::size_t i = 0; i < costs.size(); i += group) {
        const std::size_t end = std::min(costs.size(), i + group);
        TimedCost acc{0.0, 0.0};
        for (std::size_t k = i; k < end; ++k) {
            acc.time += costs[k].time;
            acc.cost += costs[k].cost;
        }
        const double n = static_cast<double>(end - i);
        out.push_back({acc.time / n, acc.cost / n});
    }
    return out;
}

/// Per-frame costs by linear interpolation between cuboid centers, held
/// constant before the first and after the last center. Costs are first
/// averaged in groups of `group` consecutive cuboids.
inline std::vector<double> frame_costs_from_cuboids(std::span<const TimedCost> cuboid_costs, std::size_t frame_count,
                                                    std::size_t group = 1) {
    if (cuboid_costs.empty()) throw ArgumentError("frame_costs_from_cuboids: no cuboid costs");
    for (std::size_t i = 1; i < cuboid_costs.size(); ++i)
        if (!(cuboid_costs[i].time > cuboid_costs[i - 1].time))
            throw ArgumentError("frame_costs_from_cuboids: cuboid centers must be strictly increasing");
    const std::vector<TimedCost> pts = average_in_groups(cuboid_costs, group);
    std::vector<double> out(frame_count);
    std::size_t seg = 0;
    for (std::size_t f = 0; f < frame_count; ++f) {
        const double t = static_cast<double>(f);
        if (t <= pts.front().time) {
            out[f] = pts.front().cost;
        } else if (t >= pts.back().time) {
            out[f] = pts.back().cost;
        } else {
            while (pts[seg + 1].time < t) ++seg;
            const double a = (t - pts[seg].time) / (pts[seg + 1].time - pts[seg].time);
            out[f] = pts[seg].cost + a * (pts[seg + 1].cost - pts[seg].cost);
        }
    }
    return out;
}

/// r_s(t) = 1 - (r_e(t) - min r_e) / max r_e, over one video. All-zero
/// errors give r_s = 1 everywhere.
inline std::vector<double> regularity_score(std::span<const double> errors) {
    if (errors.empty()) throw ArgumentError("regularity_score: no errors");
    for (double e : errors)
        if (!(e >= 0.0)) throw ArgumentError("regularity_score: negative or NaN reconstruction error");
    const auto [lo, hi] = std::minmax_element(errors.begin(), errors.end());
    std::vector<double> out(errors.size(), 1.0);
    if (*hi == 0.0) return out;
    for (std::size_t i = 0; i < errors.size(); ++i) out[i] = 1.0 - (errors[i] - *lo) / *hi;
    return out;
}

struct Rates {
    double tpr;
    double fpr;
};

inline Rates rates(std::size_t tp, std::size_t fn, std::size_t fp, std::size_t tn) {
    if (tp + fn == 0) throw ArgumentError("rates: no positive samples (tp + fn = 0)");
    if (fp + tn == 0) throw ArgumentError("rates: no negative samples (fp + tn = 0)");
    return {static_cast<double>(tp) / static_cast<double>(tp + fn), static_cast<double>(fp) / static_cast<double>(tn + fp)};
}

struct RocPoint {
    double threshold;  // frames with score >= threshold are flagged
    double tpr;
    double fpr;
};

struct RocResult {
    std::vector<RocPoint> points;  // FPR non-decreasing
    double auc = 0.0;
    double eer = 0.0;
    double eer_tpr = 0.0;  // TPR at the interpolated equal-error point
};

/// Exact ROC over every distinct score (higher score = more anomalous),
/// trapezoidal AUC and the equal error rate where FPR = 1 - TPR.
inline RocResult roc_auc_eer(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw DimensionError("roc: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) + " labels");
    std::size_t pos = 0, neg = 0;
    for (int l : labels) (l ? pos : neg)++;
    if (pos == 0 || neg == 0) throw ArgumentError("roc: labels contain a single class; need both normal and anomalous frames");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocResult r;
    r.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double thr = scores[order[i]];
        while (i < order.size() && scores[order[i]] == thr) {
            (labels[order[i]] ? tp : fp)++;
            ++i;
        }
        const Rates rt = rates(tp, pos - tp, fp, neg - fp);
        r.points.push_back({thr, rt.tpr, rt.fpr});
    }
    r.points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});

    for (std::size_t i = 1; i < r.points.size(); ++i) {
        const auto& a = r.points[i - 1];
        const auto& b = r.points[i];
        r.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }

    // g = FPR - (1 - TPR) rises from -1 to +1 along the curve.
    for (std::size_t i = 1; i < r.points.size(); ++i) {
        const auto& a = r.points[i - 1];
        const auto& b = r.points[i];
        const double ga = a.fpr + a.tpr - 1.0;
        const double gb = b.fpr + b.tpr - 1.0;
        if (ga <= 0.0 && gb >= 0.0) {
            const double lambda = gb > ga ? -ga / (gb - ga) : 0.0;
            r.eer = a.fpr + lambda * (b.fpr - a.fpr);
            r.eer_tpr = a.tpr + lambda * (b.tpr - a.tpr);
            break;
        }
    }
    return r;
}

/// |frame - recon| per pixel, min-max normalized to [0,1].
inline Tensor residual_heatmap(const Tensor& frame, const Tensor& recon) {
    if (frame.shape() != recon.shape())
        throw DimensionError("residual_heatmap: " + shape_string(frame.shape()) + " vs " + shape_string(recon.shape()));
    Tensor out(frame.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(frame[i] - recon[i]);
    const auto [lo, hi] = std::minmax_element(out.values().begin(), out.values().end());
    const double min = *lo, max = *hi;
    for (double& v : out.values()) {
        if (max > min) v = (v - min) / (max - min);
        else v = max > 0.0 ? 1.0 : 0.0;
    }
    return out;
}

// --------------------------------------------------------------- sweep ---

struct DetectionScore {
    double auc = 0.0;
    double eer = 1.0;
};

struct SweepCell {
    LossKind loss;
    OptimizerKind optimizer;
    bool ok = false;
    DetectionScore score;
    std::string error;
};

struct SweepResult {
    std::string dataset;
    std::vector<SweepCell> cells;  // grid order
    std::optional<std::size_t> best;
};

using SweepEvaluator = std::function<DetectionScore(LossKind, OptimizerKind)>;

/// Highest AUC; ties go to the lower EER, then to the earlier cell.
inline std::optional<std::size_t> select_best(const std::vector<SweepCell>& cells) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!cells[i].ok) continue;
        if (!best) {
            best = i;
            continue;
        }
        const auto& b = cells[*best].score;
        const auto& c = cells[i].score;
        if (c.auc > b.auc || (c.auc == b.auc && c.eer < b.eer)) best = i;
    }
    return best;
}

/// Runs `evaluate` for every (loss, optimizer) pair. A failing cell is
/// recorded with its error message and the sweep carries on. `parallel_map`
/// may run cells concurrently; results land in grid order either way.
inline SweepResult sweep_loss_optimizer(std::string dataset, std::span<const std::pair<LossKind, OptimizerKind>> grid,
                                        const SweepEvaluator& evaluate,
                                        const std::function<void(std::size_t, const std::function<void(std::size_t)>&)>&
                                            parallel_map = {}) {
    if (grid.empty()) throw ArgumentError("sweep: empty grid");
    SweepResult result;
    result.dataset = std::move(dataset);
    result.cells.resize(grid.size());
    auto run_cell = [&](std::size_t i) {
        SweepCell& cell = result.cells[i];
        cell.loss = grid[i].first;
        cell.optimizer = grid[i].second;
        try {
            cell.score = evaluate(cell.loss, cell.optimizer);
            cell.ok = std::isfinite(cell.score.auc);
            if (!cell.ok) cell.error = "non-finite AUC";
        } catch (const std::exception& e) {
            cell.ok = false;
            cell.error = e.what();
        }
    };
    if (parallel_map) {
        parallel_map(grid.size(), run_cell);
    } else {
        for (std::size_t i = 0; i < grid.size(); ++i) run_cell(i);
    }
    result.best = select_best(result.cells);
    return result;
}

}  // namespace sitgru
