// SPDX-License-Identifier: Apache-2.0
//
// Analytic-vs-finite-difference comparisons for single cells (through time)
// and for the whole encoder-decoder on a downscaled configuration.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sitgru/cells.hpp"
#include "sitgru/network.hpp"
#include "sitgru/optim.hpp"
#include "sitgru/random.hpp"

namespace sitgru {

inline constexpr double kGradCheckEpsilon = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckFloor = 1e-8;  // FD magnitudes below this are skipped

struct GradCheckReport {
    std::string subject;
    double max_rel_error = 0.0;
    std::string worst;  // tensor[index] with the largest error
    std::size_t checked = 0;
    std::size_t skipped = 0;

    bool passed(double tolerance = kGradCheckTolerance) const { return max_rel_error < tolerance; }

    void merge(const GradCheckReport& other) {
        checked += other.checked;
        skipped += other.skipped;
        if (other.max_rel_error > max_rel_error) {
            max_rel_error = other.max_rel_error;
            worst = other.subject + ":" + other.worst;
        }
    }

    void compare(const std::string& name, const Tensor& analytic, const Tensor& numeric) {
        if (analytic.size() != numeric.size()) throw DimensionError("gradcheck: " + name + " shape mismatch");
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            const double a = analytic[i], n = numeric[i];
            if (std::abs(n) < kGradCheckFloor) {
                ++skipped;
                continue;
            }
            ++checked;
            const double rel = std::abs(a - n) / std::max(std::abs(a), std::abs(n));
            if (!(rel <= max_rel_error)) {  // also catches NaN
                max_rel_error = std::isnan(rel) ? std::numeric_limits<double>::infinity() : rel;
                worst = name + "[" + std::to_string(i) + "]";
            }
        }
    }
};

struct CellCheckSpec {
    std::size_t input = 2;
    std::size_t hidden = 3;
    std::size_t steps = 4;
    std::size_t batch = 1;
};

/// Random parameters with non-zero biases, so every path carries signal.
inline CellParams random_cell_params(CellKind kind, std::size_t d, std::size_t n, Rng& rng) {
    CellParams p = CellParams::glorot(kind, d, n, rng);
    for (auto& g : p.gates)
        for (double& v : g.b.values()) v = uniform(rng, -0.5, 0.5);
    return p;
}

/// Loss 0.5 * sum_t |h_t - y_t|^2 with random targets y_t.
inline GradCheckReport check_cell_gradients(CellKind kind, std::uint64_t seed, CellCheckSpec spec = {}) {
    Rng rng(derive_seed(seed, "gradcheck-cell"));
    const CellParams p = random_cell_params(kind, spec.input, spec.hidden, rng);
    const Shape xs_shape = spec.batch == 1 ? Shape{spec.input} : Shape{spec.batch, spec.input};
    const Shape hs_shape = spec.batch == 1 ? Shape{spec.hidden} : Shape{spec.batch, spec.hidden};
    std::vector<Tensor> xs, targets;
    for (std::size_t t = 0; t < spec.steps; ++t) {
        xs.push_back(random_uniform(xs_shape, -1.0, 1.0, rng));
        targets.push_back(random_uniform(hs_shape, -0.5, 1.0, rng));
    }
    const Tensor h0 = random_uniform(hs_shape, 0.0, 1.0, rng);

    auto loss = [&](std::span<const Tensor> hs) {
        double v = 0.0;
        for (std::size_t t = 0; t < hs.size(); ++t)
            for (std::size_t k = 0; k < hs[t].size(); ++k) {
                const double d = hs[t][k] - targets[t][k];
                v += 0.5 * d * d;
            }
        return v;
    };

    const Unrolled run = unroll_sequence(p, xs, h0);
    std::vector<Tensor> d_hs;
    for (std::size_t t = 0; t < spec.steps; ++t) d_hs.push_back(subtract(run.states[t].h, targets[t]));
    SequenceGrads analytic = backward_sequence(p, run, d_hs);
    SequenceGrads numeric = finite_diff_grad(p, xs, h0, loss, kGradCheckEpsilon);

    GradCheckReport report;
    report.subject = std::string(to_string(kind)) + "/cell";
    const auto layout = gate_layout(kind);
    for (std::size_t g = 0; g < layout.size(); ++g) {
        const std::string gate(to_string(layout[g]));
        report.compare("W_" + gate, analytic.gates[g].W, numeric.gates[g].W);
        report.compare("U_" + gate, analytic.gates[g].U, numeric.gates[g].U);
        report.compare("b_" + gate, analytic.gates[g].b, numeric.gates[g].b);
    }
    for (std::size_t t = 0; t < spec.steps; ++t)
        report.compare("dx" + std::to_string(t), analytic.d_xs[t], numeric.d_xs[t]);
    report.compare("dh0", analytic.d_h0, numeric.d_h0);
    return report;
}

struct NetworkCheckSpec {
    std::vector<std::size_t> layer_units{3, 2, 1};
    std::size_t frame_pixels = 5;
    std::size_t timesteps = 3;
    std::size_t batch = 3;
    LossKind loss = LossKind::Mse;
};

/// Finite differences over every trainable parameter of a downscaled model,
/// with batch normalization in training mode.
inline GradCheckReport check_network_gradients(CellKind kind, std::uint64_t seed, NetworkCheckSpec spec = {}) {
    NetworkConfig cfg;
    cfg.layer_units = spec.layer_units;
    cfg.cell_kind = kind;
    cfg.frame_pixels = spec.frame_pixels;
    cfg.timesteps = spec.timesteps;
    Model model = Model::create(cfg, derive_seed(seed, "gradcheck-net-init"));
    Rng rng(derive_seed(seed, "gradcheck-net-data"));
    for (Tensor* t : model.parameters())
        if (t->rank() == 1)  // biases, gamma, beta
            for (double& v : t->values()) v += uniform(rng, -0.3, 0.3);

    std::vector<Tensor> inputs, targets;
    for (std::size_t n = 0; n < spec.batch; ++n) {
        inputs.push_back(random_uniform({spec.timesteps, spec.frame_pixels}, -1.5, 1.5, rng));
        targets.push_back(random_uniform({spec.timesteps, spec.frame_pixels}, 0.0, 1.0, rng));
    }
    const double elements = static_cast<double>(spec.batch * spec.timesteps * spec.frame_pixels);

    auto batch_loss = [&](Model& m, std::vector<Tensor>* d_recon) {
        ForwardResult fr = forward_batch(m, inputs, true);
        double total = 0.0;
        for (std::size_t n = 0; n < spec.batch; ++n) {
            LossValue lv = loss_value_and_grad(spec.loss, fr.reconstructions[n], targets[n]);
            const double count = static_cast<double>(lv.grad.size());
            total += lv.value * count;
            if (d_recon) d_recon->push_back(scale(lv.grad, count / elements));
        }
        return std::make_pair(total / elements, std::move(fr.cache));
    };

    Model work = model;
    std::vector<Tensor> d_recon;
    auto [value, cache] = batch_loss(work, &d_recon);
    (void)value;
    ModelGrads analytic = backward_batch(work, cache, d_recon);

    GradCheckReport report;
    report.subject = std::string(to_string(kind)) + "/network";
    auto params = work.parameters();
    auto grads = analytic.tensors();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor numeric(params[i]->shape());
        for (std::size_t k = 0; k < params[i]->size(); ++k) {
            const double saved = (*params[i])[k];
            (*params[i])[k] = saved + kGradCheckEpsilon;
            const double up = batch_loss(work, nullptr).first;
            (*params[i])[k] = saved - kGradCheckEpsilon;
            const double down = batch_loss(work, nullptr).first;
            (*params[i])[k] = saved;
            numeric[k] = (up - down) / (2.0 * kGradCheckEpsilon);
        }
        report.compare("param" + std::to_string(i), *grads[i], numeric);
    }
    return report;
}

}  // namespace sitgru
