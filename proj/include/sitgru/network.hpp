// SPDX-License-Identifier: Apache-2.0
//
// Stacked recurrent encoder-decoder over frame cuboids.
//
// Frames are flattened to one feature vector per timestep. Each hidden layer
// unrolls its cell over the T timesteps, then applies the inter-layer
// activation and batch normalization. The last hidden layer feeds an affine
// readout to frame_pixels values per timestep, and a single-unit cell with
// shared scalar parameters runs over time at every pixel. A sigmoid on that
// cell's state gives the reconstruction.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <type_traits>
#include <string>
#include <vector>

#include "sitgru/cells.hpp"
#include "sitgru/cuboid.hpp"
#include "sitgru/error.hpp"
#include "sitgru/random.hpp"
#include "sitgru/tensor.hpp"

namespace sitgru {

/// Pixel value = sigmoid(kOutputGain * (h - 1/2)) for output-cell state h.
/// Fixed, so a constant state still yields a constant reconstruction.
inline constexpr double kOutputGain = 10.0;

struct NetworkConfig {
    std::vector<std::size_t> layer_units{32, 16, 8, 16, 32, 1};
    CellKind cell_kind = CellKind::SiTGru;
    ActivationKind inter_activation = ActivationKind::Tanh;
    std::size_t frame_pixels = 32 * 32;
    std::size_t timesteps = 4;

    void validate() const {
        if (layer_units.size() < 2) throw ArgumentError("layer_units needs at least one hidden layer and the output unit");
        if (layer_units.back() != 1) throw ArgumentError("layer_units must end with a single output unit");
        for (std::size_t u : layer_units)
            if (u == 0) throw ArgumentError("layer_units entries must be positive");
        if (frame_pixels == 0) throw ArgumentError("frame_pixels must be positive");
        if (timesteps == 0) throw ArgumentError("timesteps must be positive");
    }

    std::size_t hidden_layers() const { return layer_units.size() - 1; }
    // First half of the stack encodes, the rest decodes.
    std::size_t encoder_layers() const { return layer_units.size() / 2; }
};

struct BatchNorm {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    double eps = 1e-5;
    double momentum = 0.99;

    static BatchNorm identity(std::size_t features) {
        return {Tensor({features}, 1.0), Tensor({features}, 0.0), Tensor({features}, 0.0), Tensor({features}, 1.0)};
    }
    std::size_t features() const { return gamma.size(); }
};

struct BatchNormCache {
    bool training = false;
    Tensor x_hat;    // N x F, pre-affine
    Tensor inv_std;  // F
};

/// Normalizes an [N x features] batch per feature. Training mode uses the
/// batch statistics (biased variance) and folds them into the running
/// estimates; inference mode uses the running estimates.
inline Tensor batchnorm_forward(BatchNorm& bn, const Tensor& batch, bool training, BatchNormCache* cache = nullptr) {
    const std::size_t n = batch.rows(), f = batch.cols();
    if (f != bn.features()) {
        throw DimensionError("batchnorm: batch " + shape_string(batch.shape()) + " vs " + std::to_string(bn.features()) +
                             " features");
    }
    if (training && n < 2) throw ArgumentError("batchnorm: training mode needs a batch of at least 2, got " + std::to_string(n));

    Tensor mean({f}), var({f});
    if (training) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) mean[j] += batch[i * f + j];
        for (std::size_t j = 0; j < f; ++j) mean[j] /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) {
                const double d = batch[i * f + j] - mean[j];
                var[j] += d * d;
            }
        for (std::size_t j = 0; j < f; ++j) {
            var[j] /= static_cast<double>(n);
            bn.running_mean[j] = bn.momentum * bn.running_mean[j] + (1.0 - bn.momentum) * mean[j];
            bn.running_var[j] = bn.momentum * bn.running_var[j] + (1.0 - bn.momentum) * var[j];
        }
    } else {
        mean = bn.running_mean;
        var = bn.running_var;
    }

    Tensor inv_std({f});
    for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + bn.eps);
    Tensor x_hat(batch.shape());
    Tensor out(batch.shape());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) {
            const double xh = (batch[i * f + j] - mean[j]) * inv_std[j];
            x_hat[i * f + j] = xh;
            out[i * f + j] = bn.gamma[j] * xh + bn.beta[j];
        }
    if (cache) *cache = {training, std::move(x_hat), std::move(inv_std)};
    return out;
}

/// Inference-mode normalization without touching running statistics.
inline Tensor batchnorm_infer(const BatchNorm& bn, const Tensor& batch) {
    BatchNorm copy = bn;
    return batchnorm_forward(copy, batch, false);
}

struct BatchNormGrads {
    Tensor d_x;
    Tensor d_gamma;
    Tensor d_beta;
};

inline BatchNormGrads batchnorm_backward(const BatchNorm& bn, const BatchNormCache& cache, const Tensor& d_out) {
    if (!cache.training) throw StateError("batchnorm_backward needs a training-mode cache");
    const std::size_t n = d_out.rows(), f = d_out.cols();
    BatchNormGrads g{Tensor(d_out.shape()), Tensor({f}), Tensor({f})};
    Tensor sum_dxh({f}), sum_dxh_xh({f});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) {
            const double dy = d_out[i * f + j];
            const double xh = cache.x_hat[i * f + j];
            g.d_gamma[j] += dy * xh;
            g.d_beta[j] += dy;
            const double dxh = dy * bn.gamma[j];
            sum_dxh[j] += dxh;
            sum_dxh_xh[j] += dxh * xh;
        }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) {
            const double dxh = d_out[i * f + j] * bn.gamma[j];
            const double xh = cache.x_hat[i * f + j];
            g.d_x[i * f + j] = inv_n * cache.inv_std[j] *
                               (static_cast<double>(n) * dxh - sum_dxh[j] - xh * sum_dxh_xh[j]);
        }
    return g;
}

struct Readout {
    Tensor weight;  // frame_pixels x last_hidden
    Tensor bias;    // frame_pixels
};

struct Model {
    NetworkConfig config;
    std::vector<CellParams> layers;  // hidden layers
    std::vector<BatchNorm> norms;    // one per hidden layer
    Readout readout;
    CellParams output_cell;          // input 1, hidden 1, shared over pixels

    static Model create(const NetworkConfig& config, std::uint64_t seed) {
        config.validate();
        Rng rng(derive_seed(seed, "model-init"));
        Model m;
        m.config = config;
        std::size_t in = config.frame_pixels;
        for (std::size_t l = 0; l < config.hidden_layers(); ++l) {
            const std::size_t units = config.layer_units[l];
            m.layers.push_back(CellParams::glorot(config.cell_kind, in, units, rng));
            m.norms.push_back(BatchNorm::identity(units));
            in = units;
        }
        m.readout = {glorot_uniform(config.frame_pixels, in, rng), Tensor({config.frame_pixels})};
        m.output_cell = CellParams::glorot(config.cell_kind, 1, config.layer_units.back(), rng);
        return m;
    }

    /// Trainable tensors in checkpoint order.
    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> out;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (Tensor* t : layers[l].tensors()) out.push_back(t);
            out.push_back(&norms[l].gamma);
            out.push_back(&norms[l].beta);
        }
        out.push_back(&readout.weight);
        out.push_back(&readout.bias);
        for (Tensor* t : output_cell.tensors()) out.push_back(t);
        return out;
    }

    std::size_t parameter_count() {
        std::size_t total = 0;
        for (Tensor* t : parameters()) total += t->size();
        return total;
    }

    /// Parameters of the recurrent cells only (hidden layers + output cell).
    std::size_t recurrent_parameter_count() const {
        std::size_t total = output_cell.parameter_count();
        for (const auto& l : layers) total += l.parameter_count();
        return total;
    }
};

/// Gradient container laid out like Model::parameters().
struct ModelGrads {
    std::vector<std::vector<GateParams>> layers;
    std::vector<Tensor> gamma;
    std::vector<Tensor> beta;
    Tensor readout_weight;
    Tensor readout_bias;
    std::vector<GateParams> output_cell;

    static ModelGrads zeros_like(const Model& m) {
        ModelGrads g;
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            g.layers.push_back(zero_gate_grads(m.layers[l]));
            g.gamma.emplace_back(Shape{m.norms[l].features()});
            g.beta.emplace_back(Shape{m.norms[l].features()});
        }
        g.readout_weight = Tensor(m.readout.weight.shape());
        g.readout_bias = Tensor(m.readout.bias.shape());
        g.output_cell = zero_gate_grads(m.output_cell);
        return g;
    }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (auto& gp : layers[l]) out.insert(out.end(), {&gp.W, &gp.U, &gp.b});
            out.push_back(&gamma[l]);
            out.push_back(&beta[l]);
        }
        out.push_back(&readout_weight);
        out.push_back(&readout_bias);
        for (auto& gp : output_cell) out.insert(out.end(), {&gp.W, &gp.U, &gp.b});
        return out;
    }
};

struct ForwardCache {
    bool training = false;
    std::size_t batch = 0;
    std::vector<Unrolled> layer_runs;
    std::vector<std::vector<Tensor>> activated;         // per layer, per t: act(h_t)
    std::vector<std::vector<BatchNormCache>> norm_caches;
    std::vector<Tensor> top;                             // per t: last BN output, N x units
    Unrolled output_run;                                 // over (N * pixels) scalar sequences
    std::vector<Tensor> output;                          // per t: pixel values, (N * pixels) x 1
};

struct ForwardResult {
    std::vector<Tensor> reconstructions;  // one per input, same shape as the input
    ForwardCache cache;
};

namespace detail {

inline void check_cuboid(const NetworkConfig& cfg, const Tensor& c) {
    if (c.rank() < 2 || c.dim(0) != cfg.timesteps || c.size() != cfg.timesteps * cfg.frame_pixels) {
        throw DimensionError("cuboid " + shape_string(c.shape()) + " does not match network input [" +
                             std::to_string(cfg.timesteps) + " x " + std::to_string(cfg.frame_pixels) + "]");
    }
}

template <typename ModelRef>
ForwardResult forward_impl(ModelRef& m, std::span<const Tensor> inputs, bool training) {
    const NetworkConfig& cfg = m.config;
    if (inputs.empty()) throw ArgumentError("forward: empty batch");
    for (const Tensor& c : inputs) check_cuboid(cfg, c);
    const std::size_t batch = inputs.size(), T = cfg.timesteps, P = cfg.frame_pixels;

    ForwardResult result;
    ForwardCache& cache = result.cache;
    cache.training = training;
    cache.batch = batch;

    std::vector<Tensor> xs(T, Tensor({batch, P}));
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t t = 0; t < T; ++t)
            std::copy_n(inputs[n].data() + t * P, P, xs[t].data() + n * P);

    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const CellParams& cell = m.layers[l];
        Unrolled run = unroll_sequence(cell, xs, Tensor({batch, cell.hidden_size}));
        std::vector<Tensor> acts(T), ys(T);
        std::vector<BatchNormCache> norms(T);
        for (std::size_t t = 0; t < T; ++t) {
            acts[t] = apply_activation(run.states[t].h, cfg.inter_activation);
            if constexpr (std::is_const_v<ModelRef>) {
                ys[t] = batchnorm_infer(m.norms[l], acts[t]);
            } else {
                ys[t] = batchnorm_forward(m.norms[l], acts[t], training, &norms[t]);
            }
        }
        cache.layer_runs.push_back(std::move(run));
        cache.activated.push_back(std::move(acts));
        cache.norm_caches.push_back(std::move(norms));
        xs = std::move(ys);
    }
    cache.top = xs;

    std::vector<Tensor> pixel_inputs(T);
    for (std::size_t t = 0; t < T; ++t) {
        Tensor u = matmul_nt(xs[t], m.readout.weight);
        add_row_bias(u, m.readout.bias);
        pixel_inputs[t] = std::move(u).reshaped({batch * P, 1});
    }
    cache.output_run = unroll_sequence(m.output_cell, pixel_inputs, Tensor({batch * P, 1}));

    result.reconstructions.assign(batch, Tensor());
    for (std::size_t n = 0; n < batch; ++n) result.reconstructions[n] = Tensor(inputs[n].shape());
    cache.output.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        Tensor logits = cache.output_run.states[t].h;
        for (double& v : logits.values()) v = kOutputGain * (v - 0.5);
        cache.output[t] = apply_activation(logits, ActivationKind::Sigmoid);
        for (std::size_t n = 0; n < batch; ++n)
            std::copy_n(cache.output[t].data() + n * P, P, result.reconstructions[n].data() + t * P);
    }
    return result;
}

}  // namespace detail

/// Forward over a minibatch. Training mode normalizes with batch statistics
/// (batch of at least 2) and updates the running estimates.
inline ForwardResult forward_batch(Model& m, std::span<const Tensor> inputs, bool training) {
    return detail::forward_impl(m, inputs, training);
}

/// Inference-mode forward; leaves the model untouched.
inline ForwardResult forward_batch(const Model& m, std::span<const Tensor> inputs) {
    return detail::forward_impl(m, inputs, false);
}

inline Tensor forward_cuboid(const Model& m, const Tensor& cuboid) {
    return forward_batch(m, std::span<const Tensor>(&cuboid, 1)).reconstructions.front();
}

/// End-to-end gradients given dL/d(reconstruction) for every batch member.
inline ModelGrads backward_batch(const Model& m, const ForwardCache& cache, std::span<const Tensor> d_recon) {
    if (!cache.training) throw StateError("backward_batch needs the cache of a training-mode forward pass");
    if (d_recon.size() != cache.batch) {
        throw DimensionError("backward_batch: " + std::to_string(d_recon.size()) + " gradients for a batch of " +
                             std::to_string(cache.batch));
    }
    const NetworkConfig& cfg = m.config;
    const std::size_t batch = cache.batch, T = cfg.timesteps, P = cfg.frame_pixels;
    for (const Tensor& d : d_recon) detail::check_cuboid(cfg, d);

    ModelGrads grads = ModelGrads::zeros_like(m);

    std::vector<Tensor> d_out(T, Tensor({batch * P, 1}));
    for (std::size_t t = 0; t < T; ++t) {
        const Tensor& y = cache.output[t];
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t p = 0; p < P; ++p) {
                const double r = y[n * P + p];
                d_out[t][n * P + p] = d_recon[n][t * P + p] * r * (1.0 - r) * kOutputGain;
            }
    }
    SequenceGrads out_grads = backward_sequence(m.output_cell, cache.output_run, d_out);
    grads.output_cell = std::move(out_grads.gates);

    std::vector<Tensor> d_top(T);
    for (std::size_t t = 0; t < T; ++t) {
        const Tensor du = std::move(out_grads.d_xs[t]).reshaped({batch, P});
        axpy(grads.readout_weight, matmul_tn(du, cache.top[t]));
        axpy(grads.readout_bias, column_sums(du));
        d_top[t] = matmul(du, m.readout.weight);
    }

    for (std::size_t l = m.layers.size(); l-- > 0;) {
        std::vector<Tensor> d_h(T);
        for (std::size_t t = 0; t < T; ++t) {
            BatchNormGrads bg = batchnorm_backward(m.norms[l], cache.norm_caches[l][t], d_top[t]);
            axpy(grads.gamma[l], bg.d_gamma);
            axpy(grads.beta[l], bg.d_beta);
            d_h[t] = hadamard(bg.d_x, activation_grad(cache.activated[l][t], cfg.inter_activation));
        }
        SequenceGrads lg = backward_sequence(m.layers[l], cache.layer_runs[l], d_h);
        grads.layers[l] = std::move(lg.gates);
        d_top = std::move(lg.d_xs);
    }
    return grads;
}

}  // namespace sitgru
