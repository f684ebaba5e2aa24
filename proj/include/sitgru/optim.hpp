// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sitgru/cuboid.hpp"
#include "sitgru/error.hpp"
#include "sitgru/network.hpp"
#include "sitgru/random.hpp"

namespace sitgru {

enum class LossKind { Mse, Xent };

inline std::string_view to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "xent"; }

inline LossKind parse_loss_kind(std::string_view s) {
    if (s == "mse") return LossKind::Mse;
    if (s == "xent") return LossKind::Xent;
    throw ArgumentError("unknown loss '" + std::string(s) + "' (expected mse|xent)");
}

enum class OptimizerKind { Adam, AdaGrad, RmsProp, Sgd };

inline std::string_view to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::Adam: return "adam";
        case OptimizerKind::AdaGrad: return "adagrad";
        case OptimizerKind::RmsProp: return "rmsprop";
        case OptimizerKind::Sgd: return "sgd";
    }
    return "?";
}

inline OptimizerKind parse_optimizer_kind(std::string_view s) {
    for (OptimizerKind k : {OptimizerKind::Adam, OptimizerKind::AdaGrad, OptimizerKind::RmsProp, OptimizerKind::Sgd})
        if (to_string(k) == s) return k;
    throw ArgumentError("unknown optimizer '" + std::string(s) + "' (expected adam|adagrad|rmsprop|sgd)");
}

inline constexpr double kXentClamp = 1e-7;

struct LossValue {
    double value = 0.0;  // mean over elements
    Tensor grad;         // d value / d recon
};

/// MSE or pixelwise binary cross-entropy (targets in [0,1]), averaged over
/// every element.
inline LossValue loss_value_and_grad(LossKind kind, const Tensor& recon, const Tensor& target) {
    if (recon.size() != target.size()) {
        throw DimensionError("loss: reconstruction " + shape_string(recon.shape()) + " vs target " +
                             shape_string(target.shape()));
    }
    const double count = static_cast<double>(recon.size());
    LossValue out{0.0, Tensor(recon.shape())};
    for (std::size_t i = 0; i < recon.size(); ++i) {
        const double p = recon[i], t = target[i];
        if (kind == LossKind::Mse) {
            const double d = p - t;
            out.value += d * d;
            out.grad[i] = 2.0 * d / count;
        } else {
            if (t < 0.0 || t > 1.0) throw ArgumentError("cross-entropy target outside [0,1]: " + std::to_string(t));
            const double q = std::clamp(p, kXentClamp, 1.0 - kXentClamp);
            out.value -= t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
            out.grad[i] = (p == q) ? (q - t) / (q * (1.0 - q)) / count : 0.0;
        }
    }
    out.value /= count;
    return out;
}

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.9999;
    double eps = 1e-8;
    double rho = 0.9;  // RMSprop decay
};

/// Per-parameter accumulators for one model. Buffers are allocated lazily on
/// the first step and must keep matching the parameter shapes after that.
class Optimizer {
public:
    explicit Optimizer(OptimizerSettings settings = {}) : s_(settings) {}

    const OptimizerSettings& settings() const noexcept { return s_; }
    std::uint64_t steps() const noexcept { return steps_; }

    void step(std::span<Tensor* const> params, std::span<Tensor* const> grads) {
        if (params.size() != grads.size()) throw DimensionError("optimizer: parameter/gradient count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i]->shape() != grads[i]->shape()) {
                throw DimensionError("optimizer: parameter " + shape_string(params[i]->shape()) + " vs gradient " +
                                     shape_string(grads[i]->shape()));
            }
        }
        if (first_.empty()) {
            for (Tensor* p : params) {
                first_.emplace_back(p->shape());
                second_.emplace_back(p->shape());
            }
        } else if (first_.size() != params.size()) {
            throw DimensionError("optimizer: parameter set changed between steps");
        }
        ++steps_;
        const double t = static_cast<double>(steps_);
        const double bc1 = 1.0 - std::pow(s_.beta1, t);
        const double bc2 = 1.0 - std::pow(s_.beta2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            const Tensor& g = *grads[i];
            Tensor& m = first_[i];
            Tensor& v = second_[i];
            for (std::size_t k = 0; k < p.size(); ++k) {
                const double gk = g[k];
                switch (s_.kind) {
                    case OptimizerKind::Adam: {
                        m[k] = s_.beta1 * m[k] + (1.0 - s_.beta1) * gk;
                        v[k] = s_.beta2 * v[k] + (1.0 - s_.beta2) * gk * gk;
                        const double m_hat = m[k] / bc1;
                        const double v_hat = v[k] / bc2;
                        p[k] -= s_.lr * m_hat / (std::sqrt(v_hat) + s_.eps);
                        break;
                    }
                    case OptimizerKind::AdaGrad:
                        v[k] += gk * gk;
                        p[k] -= s_.lr * gk / (std::sqrt(v[k]) + s_.eps);
                        break;
                    case OptimizerKind::RmsProp:
                        v[k] = s_.rho * v[k] + (1.0 - s_.rho) * gk * gk;
                        p[k] -= s_.lr * gk / (std::sqrt(v[k]) + s_.eps);
                        break;
                    case OptimizerKind::Sgd:
                        p[k] -= s_.lr * gk;
                        break;
                }
            }
        }
    }

private:
    OptimizerSettings s_;
    std::vector<Tensor> first_;
    std::vector<Tensor> second_;
    std::uint64_t steps_ = 0;
};

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t batch_size = 8;
    double split = 0.85;
    LossKind loss = LossKind::Mse;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double lr = 1e-5;
    std::uint64_t seed = 0;
    double clip_norm = 0.0;  // 0 disables global-norm clipping

    void validate() const {
        if (epochs == 0) throw ArgumentError("epochs must be positive");
        if (batch_size < 2) throw ArgumentError("batch size must be at least 2 (batch normalization)");
        if (!(split > 0.0 && split < 1.0)) throw ArgumentError("split must lie strictly between 0 and 1");
        if (!(lr > 0.0)) throw ArgumentError("learning rate must be positive");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

struct FitResult {
    Model model;  // parameters after the best validation epoch
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Seeded shuffle, then `split` of the items for training and the rest for
/// validation (at least one each).
inline DataSplit split_indices(std::size_t count, double split, std::uint64_t seed) {
    if (count < 2) throw ArgumentError("need at least 2 cuboids to train, got " + std::to_string(count));
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "split"));
    deterministic_shuffle(order, rng);
    std::size_t n_train = static_cast<std::size_t>(std::floor(split * static_cast<double>(count)));
    n_train = std::clamp<std::size_t>(n_train, 1, count - 1);
    return {{order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)},
            {order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end()}};
}

/// Consecutive chunks of batch_size; a trailing chunk of one joins the
/// previous chunk so every batch can be normalized.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& items, std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < items.size(); i += batch_size) {
        const std::size_t end = std::min(items.size(), i + batch_size);
        batches.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i), items.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
    }
    return batches;
}

namespace detail {

inline void clip_global_norm(std::span<Tensor* const> grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor* g : grads)
        for (double v : g->values()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double s = max_norm / norm;
    for (Tensor* g : grads)
        for (double& v : g->values()) v *= s;
}

}  // namespace detail

/// Mean loss of the model over the given cuboids, inference mode.
inline double evaluate_loss(const Model& model, std::span<const Cuboid> data, std::span<const std::size_t> items,
                            LossKind loss, std::size_t batch_size) {
    double total = 0.0, count = 0.0;
    for (std::size_t i = 0; i < items.size(); i += batch_size) {
        const std::size_t end = std::min(items.size(), i + batch_size);
        std::vector<Tensor> inputs;
        for (std::size_t k = i; k < end; ++k) inputs.push_back(data[items[k]].frames);
        const ForwardResult fr = forward_batch(model, inputs);
        for (std::size_t k = i; k < end; ++k) {
            const LossValue lv = loss_value_and_grad(loss, fr.reconstructions[k - i], data[items[k]].reconstruction_target());
            const double n = static_cast<double>(lv.grad.size());
            total += lv.value * n;
            count += n;
        }
    }
    return total / count;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `model` to reconstruct each cuboid's target and returns the
/// parameters from the epoch with the lowest validation loss.
inline FitResult fit(Model model, std::span<const Cuboid> data, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    const DataSplit split = split_indices(data.size(), cfg.split, cfg.seed);
    if (split.train.size() < 2) {
        throw ArgumentError("training split holds " + std::to_string(split.train.size()) +
                            " cuboid(s); batch normalization needs at least 2");
    }
    OptimizerSettings os;
    os.kind = cfg.optimizer;
    os.lr = cfg.lr;
    Optimizer optimizer(os);

    FitResult result;
    result.model = model;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        std::vector<std::size_t> order = split.train;
        Rng rng(derive_seed(cfg.seed, "epoch-shuffle", epoch));
        deterministic_shuffle(order, rng);

        double loss_sum = 0.0, loss_count = 0.0;
        for (const auto& batch : make_batches(order, cfg.batch_size)) {
            std::vector<Tensor> inputs;
            inputs.reserve(batch.size());
            for (std::size_t i : batch) inputs.push_back(data[i].frames);
            ForwardResult fr = forward_batch(model, inputs, true);

            std::size_t elements = 0;
            for (std::size_t k = 0; k < batch.size(); ++k) elements += fr.reconstructions[k].size();
            std::vector<Tensor> d_recon;
            d_recon.reserve(batch.size());
            for (std::size_t k = 0; k < batch.size(); ++k) {
                LossValue lv = loss_value_and_grad(cfg.loss, fr.reconstructions[k], data[batch[k]].reconstruction_target());
                const double n = static_cast<double>(lv.grad.size());
                loss_sum += lv.value * n;
                loss_count += n;
                // Per-sample mean -> batch mean over all elements.
                d_recon.push_back(scale(lv.grad, n / static_cast<double>(elements)));
            }
            ModelGrads grads = backward_batch(model, fr.cache, d_recon);
            auto g = grads.tensors();
            if (cfg.clip_norm > 0.0) detail::clip_global_norm(g, cfg.clip_norm);
            auto p = model.parameters();
            optimizer.step(p, g);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / loss_count;
        rec.val_loss = evaluate_loss(model, data, split.validation, cfg.loss, cfg.batch_size);
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        rec.seconds = std::max(elapsed.count(), 1e-9);
        result.epochs.push_back(rec);
        if (rec.val_loss < result.best_val_loss) {
            result.best_val_loss = rec.val_loss;
            result.best_epoch = epoch;
            result.model = model;
        }
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::string epochs_csv(std::span<const EpochRecord> records, bool with_seconds = true) {
    std::ostringstream os;
    os << "epoch,train_loss,val_loss" << (with_seconds ? ",seconds" : "") << '\n';
    for (const auto& r : records) {
        os << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss);
        if (with_seconds) os << ',' << format_double(r.seconds);
        os << '\n';
    }
    return os.str();
}

}  // namespace sitgru
