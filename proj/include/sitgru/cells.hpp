// SPDX-License-Identifier: Apache-2.0
//
// Recurrent cells: the standard GRU, the single-tunnelled GRU (no reset gate,
// sigmoid candidate) with its tanh/ReLU candidate ablations, a GRU with the
// update gate removed, and a conventional LSTM.
//
// Every step works on batch-major tensors: x is [batch x input] (or a single
// row [input]) and h is [batch x hidden]. Weights follow the usual
// W: hidden x input, U: hidden x hidden, b: hidden convention.
#pragma once

#include <array>
#include <atomic>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sitgru/error.hpp"
#include "sitgru/random.hpp"
#include "sitgru/tensor.hpp"

namespace sitgru {

enum class CellKind { Gru, SiTGru, SiTGruTanhNoReset, SiTGruRelu, GruNoUpdate, Lstm };

inline constexpr std::array<CellKind, 6> kAllCellKinds = {
    CellKind::Gru,        CellKind::SiTGru,      CellKind::SiTGruTanhNoReset,
    CellKind::SiTGruRelu, CellKind::GruNoUpdate, CellKind::Lstm,
};

inline std::string_view to_string(CellKind kind) {
    switch (kind) {
        case CellKind::Gru: return "gru";
        case CellKind::SiTGru: return "sitgru";
        case CellKind::SiTGruTanhNoReset: return "sitgru_tanh";
        case CellKind::SiTGruRelu: return "sitgru_relu";
        case CellKind::GruNoUpdate: return "gru_no_update";
        case CellKind::Lstm: return "lstm";
    }
    return "?";
}

inline CellKind parse_cell_kind(std::string_view name) {
    for (CellKind k : kAllCellKinds)
        if (to_string(k) == name) return k;
    throw ArgumentError("unknown cell kind '" + std::string(name) +
                        "' (expected gru|sitgru|sitgru_tanh|sitgru_relu|gru_no_update|lstm)");
}

enum class Gate { Update, Reset, Candidate, Input, Forget, Output, CellInput };

inline std::string_view to_string(Gate g) {
    switch (g) {
        case Gate::Update: return "z";
        case Gate::Reset: return "r";
        case Gate::Candidate: return "h";
        case Gate::Input: return "i";
        case Gate::Forget: return "f";
        case Gate::Output: return "o";
        case Gate::CellInput: return "g";
    }
    return "?";
}

/// Gates owned by each kind, in parameter/serialization order.
inline std::span<const Gate> gate_layout(CellKind kind) {
    static constexpr std::array<Gate, 3> gru{Gate::Update, Gate::Reset, Gate::Candidate};
    static constexpr std::array<Gate, 2> single{Gate::Update, Gate::Candidate};
    static constexpr std::array<Gate, 2> no_update{Gate::Reset, Gate::Candidate};
    static constexpr std::array<Gate, 4> lstm{Gate::Input, Gate::Forget, Gate::Output, Gate::CellInput};
    switch (kind) {
        case CellKind::Gru: return gru;
        case CellKind::SiTGru:
        case CellKind::SiTGruTanhNoReset:
        case CellKind::SiTGruRelu: return single;
        case CellKind::GruNoUpdate: return no_update;
        case CellKind::Lstm: return lstm;
    }
    return {};
}

/// Activation of the candidate memory (the "g" input for LSTM).
inline ActivationKind candidate_activation(CellKind kind) {
    switch (kind) {
        case CellKind::SiTGru: return ActivationKind::Sigmoid;
        case CellKind::SiTGruRelu: return ActivationKind::Relu;
        default: return ActivationKind::Tanh;
    }
}

inline bool is_single_tunnelled(CellKind kind) {
    return kind == CellKind::SiTGru || kind == CellKind::SiTGruTanhNoReset || kind == CellKind::SiTGruRelu;
}

/// Closed-form recurrent parameter count for input size d and hidden size n.
inline std::size_t param_count(CellKind kind, std::size_t d, std::size_t n) {
    if (d < 1 || n < 1) throw ArgumentError("param_count: sizes must be >= 1");
    return gate_layout(kind).size() * (d * n + n * n + n);
}

struct GateParams {
    Tensor W;  // hidden x input
    Tensor U;  // hidden x hidden
    Tensor b;  // hidden
};

struct CellParams {
    CellKind kind = CellKind::SiTGru;
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    std::vector<GateParams> gates;  // ordered as gate_layout(kind)

    static CellParams zeros(CellKind kind, std::size_t d, std::size_t n) {
        if (d < 1 || n < 1) throw ArgumentError("cell sizes must be >= 1");
        CellParams p{kind, d, n, {}};
        for (std::size_t i = 0; i < gate_layout(kind).size(); ++i)
            p.gates.push_back({Tensor({n, d}), Tensor({n, n}), Tensor({n})});
        return p;
    }

    /// Glorot-uniform weights, zero biases.
    static CellParams glorot(CellKind kind, std::size_t d, std::size_t n, Rng& rng) {
        CellParams p = zeros(kind, d, n);
        for (auto& g : p.gates) {
            g.W = glorot_uniform(n, d, rng);
            g.U = glorot_uniform(n, n, rng);
        }
        return p;
    }

    bool has_gate(Gate g) const {
        for (Gate x : gate_layout(kind))
            if (x == g) return true;
        return false;
    }

    std::size_t gate_index(Gate g) const {
        const auto layout = gate_layout(kind);
        for (std::size_t i = 0; i < layout.size(); ++i)
            if (layout[i] == g) return i;
        throw ArgumentError(std::string(to_string(kind)) + " cell has no '" + std::string(to_string(g)) + "' gate");
    }

    GateParams& gate(Gate g) { return gates.at(gate_index(g)); }
    const GateParams& gate(Gate g) const { return gates.at(gate_index(g)); }

    std::size_t parameter_count() const {
        std::size_t total = 0;
        for (const auto& g : gates) total += g.W.size() + g.U.size() + g.b.size();
        return total;
    }

    /// W, U, b of every gate in layout order.
    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for (auto& g : gates) out.insert(out.end(), {&g.W, &g.U, &g.b});
        return out;
    }
    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        for (const auto& g : gates) out.insert(out.end(), {&g.W, &g.U, &g.b});
        return out;
    }
};

/// Intermediates stored by a forward step for the matching backward step.
struct StepCache {
    bool populated = false;
    CellKind kind = CellKind::SiTGru;
    Tensor x;
    Tensor h_prev;
    Tensor c_prev;                 // LSTM only
    std::vector<Tensor> act;       // post-activation output of each gate, layout order
    Tensor candidate_operand;      // what U_h multiplies: h_prev * r, or h_prev
    Tensor tanh_c;                 // LSTM only
};

struct CellState {
    Tensor h;
    Tensor c;  // LSTM cell memory, empty otherwise
    StepCache cache;
};

/// Test hooks for structural equivalence checks.
struct StepOptions {
    bool force_reset_ones = false;            // GRU: r_t := 1
    bool zero_candidate_preactivation = false;
};

struct CellGrads {
    std::vector<GateParams> gates;
    Tensor d_x;
    Tensor d_h_prev;
    Tensor d_c_prev;  // LSTM only
};

namespace fault_injection {
// Negates the candidate input-weight gradient; used to prove the gradient
// checker notices a broken backward pass.
inline std::atomic<bool>& flip_candidate_gradient() {
    static std::atomic<bool> flag{false};
    return flag;
}
}  // namespace fault_injection

namespace detail {

inline void check_step_shapes(const CellParams& p, const Tensor& x, const Tensor& h_prev) {
    if (x.cols() != p.input_size || h_prev.cols() != p.hidden_size || x.rows() != h_prev.rows()) {
        throw DimensionError("cell step: input " + shape_string(x.shape()) + " / state " +
                             shape_string(h_prev.shape()) + " incompatible with " + std::string(to_string(p.kind)) +
                             " cell (input " + std::to_string(p.input_size) + ", hidden " +
                             std::to_string(p.hidden_size) + ")");
    }
}

inline Tensor preactivation(const GateParams& g, const Tensor& x, const Tensor& operand) {
    Tensor pre = matmul_nt(x, g.W);
    axpy(pre, matmul_nt(operand, g.U));
    add_row_bias(pre, g.b);
    return pre;
}

inline Tensor gate_output(const GateParams& g, const Tensor& x, const Tensor& operand, ActivationKind act) {
    return apply_activation(preactivation(g, x, operand), act);
}

inline Tensor one_minus(const Tensor& t) {
    Tensor out = t;
    for (double& v : out.values()) v = 1.0 - v;
    return out;
}

// h = z * h_prev + (1 - z) * cand
inline Tensor interpolate(const Tensor& z, const Tensor& h_prev, const Tensor& cand) {
    Tensor h = h_prev;
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = z[i] * h_prev[i] + (1.0 - z[i]) * cand[i];
    return h;
}

// Accumulate the parameter/input/state gradients of one gate given the
// gradient w.r.t. its pre-activation.
inline void accumulate_gate(const GateParams& g, const Tensor& d_pre, const Tensor& x, const Tensor& operand,
                            GateParams& grad, Tensor& d_x, Tensor& d_operand) {
    grad.W = matmul_tn(d_pre, x).reshaped(grad.W.shape());
    grad.U = matmul_tn(d_pre, operand).reshaped(grad.U.shape());
    grad.b = column_sums(d_pre);
    axpy(d_x, matmul(d_pre, g.W));
    axpy(d_operand, matmul(d_pre, g.U));
}

}  // namespace detail

/// Standard GRU: update and reset gates, tanh candidate.
inline CellState gru_step(const CellParams& p, const Tensor& x, const Tensor& h_prev, StepOptions opts = {}) {
    if (p.kind != CellKind::Gru) throw ArgumentError("gru_step needs GRU parameters");
    detail::check_step_shapes(p, x, h_prev);
    CellState s;
    auto& c = s.cache;
    c.kind = p.kind;
    c.x = x;
    c.h_prev = h_prev;
    Tensor z = detail::gate_output(p.gate(Gate::Update), x, h_prev, ActivationKind::Sigmoid);
    Tensor r = opts.force_reset_ones ? Tensor(h_prev.shape(), 1.0)
                                     : detail::gate_output(p.gate(Gate::Reset), x, h_prev, ActivationKind::Sigmoid);
    c.candidate_operand = hadamard(h_prev, r);
    Tensor pre = detail::preactivation(p.gate(Gate::Candidate), x, c.candidate_operand);
    if (opts.zero_candidate_preactivation) pre.fill(0.0);
    Tensor cand = apply_activation(pre, ActivationKind::Tanh);
    s.h = detail::interpolate(z, h_prev, cand);
    c.act = {std::move(z), std::move(r), std::move(cand)};
    c.populated = true;
    return s;
}

/// Reset-free GRU family. The candidate activation is sigmoid for SiTGru,
/// tanh for SiTGruTanhNoReset and ReLU for SiTGruRelu.
inline CellState sitgru_step(const CellParams& p, const Tensor& x, const Tensor& h_prev, StepOptions opts = {}) {
    if (!is_single_tunnelled(p.kind)) throw ArgumentError("sitgru_step needs reset-free parameters");
    detail::check_step_shapes(p, x, h_prev);
    CellState s;
    auto& c = s.cache;
    c.kind = p.kind;
    c.x = x;
    c.h_prev = h_prev;
    c.candidate_operand = h_prev;
    Tensor z = detail::gate_output(p.gate(Gate::Update), x, h_prev, ActivationKind::Sigmoid);
    Tensor pre = detail::preactivation(p.gate(Gate::Candidate), x, h_prev);
    if (opts.zero_candidate_preactivation) pre.fill(0.0);
    Tensor cand = apply_activation(pre, candidate_activation(p.kind));
    s.h = detail::interpolate(z, h_prev, cand);
    c.act = {std::move(z), std::move(cand)};
    c.populated = true;
    return s;
}

/// GRU without its update gate: r and the candidate are still computed, but
/// the state is carried over unchanged.
inline CellState noupdate_step(const CellParams& p, const Tensor& x, const Tensor& h_prev, StepOptions opts = {}) {
    if (p.kind != CellKind::GruNoUpdate) throw ArgumentError("noupdate_step needs no-update-gate parameters");
    detail::check_step_shapes(p, x, h_prev);
    CellState s;
    auto& c = s.cache;
    c.kind = p.kind;
    c.x = x;
    c.h_prev = h_prev;
    Tensor r = detail::gate_output(p.gate(Gate::Reset), x, h_prev, ActivationKind::Sigmoid);
    c.candidate_operand = hadamard(h_prev, r);
    Tensor pre = detail::preactivation(p.gate(Gate::Candidate), x, c.candidate_operand);
    if (opts.zero_candidate_preactivation) pre.fill(0.0);
    c.act = {std::move(r), apply_activation(pre, ActivationKind::Tanh)};
    s.h = h_prev;
    c.populated = true;
    return s;
}

/// Conventional LSTM: input/forget/output gates, tanh cell input and tanh
/// applied to the cell memory.
inline CellState lstm_step(const CellParams& p, const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                           StepOptions opts = {}) {
    if (p.kind != CellKind::Lstm) throw ArgumentError("lstm_step needs LSTM parameters");
    detail::check_step_shapes(p, x, h_prev);
    if (c_prev.shape() != h_prev.shape()) {
        throw DimensionError("lstm_step: cell memory " + shape_string(c_prev.shape()) + " vs hidden " +
                             shape_string(h_prev.shape()));
    }
    CellState s;
    auto& c = s.cache;
    c.kind = p.kind;
    c.x = x;
    c.h_prev = h_prev;
    c.c_prev = c_prev;
    c.candidate_operand = h_prev;
    Tensor i = detail::gate_output(p.gate(Gate::Input), x, h_prev, ActivationKind::Sigmoid);
    Tensor f = detail::gate_output(p.gate(Gate::Forget), x, h_prev, ActivationKind::Sigmoid);
    Tensor o = detail::gate_output(p.gate(Gate::Output), x, h_prev, ActivationKind::Sigmoid);
    Tensor pre = detail::preactivation(p.gate(Gate::CellInput), x, h_prev);
    if (opts.zero_candidate_preactivation) pre.fill(0.0);
    Tensor g = apply_activation(pre, ActivationKind::Tanh);
    s.c = c_prev;
    for (std::size_t k = 0; k < s.c.size(); ++k) s.c[k] = f[k] * c_prev[k] + i[k] * g[k];
    c.tanh_c = apply_activation(s.c, ActivationKind::Tanh);
    s.h = hadamard(o, c.tanh_c);
    c.act = {std::move(i), std::move(f), std::move(o), std::move(g)};
    c.populated = true;
    return s;
}

/// Dispatches on p.kind. c_prev is only read by LSTM (zeros when empty).
inline CellState cell_step(const CellParams& p, const Tensor& x, const Tensor& h_prev, const Tensor& c_prev = {},
                           StepOptions opts = {}) {
    switch (p.kind) {
        case CellKind::Gru: return gru_step(p, x, h_prev, opts);
        case CellKind::SiTGru:
        case CellKind::SiTGruTanhNoReset:
        case CellKind::SiTGruRelu: return sitgru_step(p, x, h_prev, opts);
        case CellKind::GruNoUpdate: return noupdate_step(p, x, h_prev, opts);
        case CellKind::Lstm: return lstm_step(p, x, h_prev, c_prev.empty() ? Tensor(h_prev.shape()) : c_prev, opts);
    }
    throw ArgumentError("unknown cell kind");
}

/// Gradients of a scalar loss w.r.t. the step's parameters, x and h_prev,
/// given dL/dh_t (and dL/dc_t for LSTM, zero when empty).
inline CellGrads cell_backward(const CellParams& p, const CellState& state, const Tensor& d_h,
                               const Tensor& d_c = {}) {
    const StepCache& c = state.cache;
    if (!c.populated) throw StateError("cell_backward: forward cache is missing");
    if (c.kind != p.kind) {
        throw StateError("cell_backward: cache was produced by a " + std::string(to_string(c.kind)) +
                         " step, parameters are " + std::string(to_string(p.kind)));
    }
    if (d_h.shape() != state.h.shape()) {
        throw DimensionError("cell_backward: d_h " + shape_string(d_h.shape()) + " vs h " +
                             shape_string(state.h.shape()));
    }

    CellGrads g;
    g.gates.resize(p.gates.size());
    for (std::size_t i = 0; i < p.gates.size(); ++i)
        g.gates[i] = {Tensor(p.gates[i].W.shape()), Tensor(p.gates[i].U.shape()), Tensor(p.gates[i].b.shape())};
    g.d_x = Tensor(c.x.shape());
    g.d_h_prev = Tensor(c.h_prev.shape());

    const std::size_t n = d_h.size();
    switch (p.kind) {
        case CellKind::GruNoUpdate: {
            // h_t = h_{t-1}: the candidate never reaches the output.
            g.d_h_prev = d_h;
            break;
        }
        case CellKind::Gru:
        case CellKind::SiTGru:
        case CellKind::SiTGruTanhNoReset:
        case CellKind::SiTGruRelu: {
            const std::size_t zi = p.gate_index(Gate::Update);
            const std::size_t hi = p.gate_index(Gate::Candidate);
            const Tensor& z = c.act[zi];
            const Tensor& cand = c.act[hi];
            const ActivationKind cand_act = candidate_activation(p.kind);
            Tensor d_zpre(z.shape()), d_cpre(z.shape());
            for (std::size_t k = 0; k < n; ++k) {
                d_zpre[k] = d_h[k] * (c.h_prev[k] - cand[k]) * z[k] * (1.0 - z[k]);
                d_cpre[k] = d_h[k] * (1.0 - z[k]) * activation_derivative(cand[k], cand_act);
                g.d_h_prev[k] = d_h[k] * z[k];
            }
            Tensor d_operand(c.h_prev.shape());
            detail::accumulate_gate(p.gates[hi], d_cpre, c.x, c.candidate_operand, g.gates[hi], g.d_x, d_operand);
            if (p.kind == CellKind::Gru) {
                const std::size_t ri = p.gate_index(Gate::Reset);
                const Tensor& r = c.act[ri];
                Tensor d_rpre(r.shape());
                for (std::size_t k = 0; k < n; ++k) {
                    g.d_h_prev[k] += d_operand[k] * r[k];
                    d_rpre[k] = d_operand[k] * c.h_prev[k] * r[k] * (1.0 - r[k]);
                }
                detail::accumulate_gate(p.gates[ri], d_rpre, c.x, c.h_prev, g.gates[ri], g.d_x, g.d_h_prev);
            } else {
                axpy(g.d_h_prev, d_operand);
            }
            detail::accumulate_gate(p.gates[zi], d_zpre, c.x, c.h_prev, g.gates[zi], g.d_x, g.d_h_prev);
            break;
        }
        case CellKind::Lstm: {
            const Tensor& i = c.act[0];
            const Tensor& f = c.act[1];
            const Tensor& o = c.act[2];
            const Tensor& gg = c.act[3];
            Tensor d_pre[4] = {Tensor(i.shape()), Tensor(i.shape()), Tensor(i.shape()), Tensor(i.shape())};
            g.d_c_prev = Tensor(c.c_prev.shape());
            for (std::size_t k = 0; k < n; ++k) {
                const double tc = c.tanh_c[k];
                const double dc = (d_c.empty() ? 0.0 : d_c[k]) + d_h[k] * o[k] * (1.0 - tc * tc);
                d_pre[0][k] = dc * gg[k] * i[k] * (1.0 - i[k]);
                d_pre[1][k] = dc * c.c_prev[k] * f[k] * (1.0 - f[k]);
                d_pre[2][k] = d_h[k] * tc * o[k] * (1.0 - o[k]);
                d_pre[3][k] = dc * i[k] * (1.0 - gg[k] * gg[k]);
                g.d_c_prev[k] = dc * f[k];
            }
            for (std::size_t q = 0; q < 4; ++q)
                detail::accumulate_gate(p.gates[q], d_pre[q], c.x, c.h_prev, g.gates[q], g.d_x, g.d_h_prev);
            break;
        }
    }
    if (fault_injection::flip_candidate_gradient().load() && p.kind != CellKind::GruNoUpdate) {
        Tensor& w = g.gates.back().W;
        for (double& v : w.values()) v = -v;
    }
    return g;
}

struct Unrolled {
    std::vector<CellState> states;
    Tensor h_last;
    Tensor c_last;  // LSTM only
};

/// Runs the cell over xs starting from h0 (and zero cell memory).
inline Unrolled unroll_sequence(const CellParams& p, std::span<const Tensor> xs, const Tensor& h0,
                                StepOptions opts = {}) {
    if (xs.empty()) throw ArgumentError("unroll_sequence: empty input sequence");
    Unrolled out;
    out.states.reserve(xs.size());
    Tensor h = h0;
    Tensor c = p.kind == CellKind::Lstm ? Tensor(h0.shape()) : Tensor();
    for (const Tensor& x : xs) {
        out.states.push_back(cell_step(p, x, h, c, opts));
        h = out.states.back().h;
        c = out.states.back().c;
    }
    out.h_last = std::move(h);
    out.c_last = std::move(c);
    return out;
}

struct SequenceGrads {
    std::vector<GateParams> gates;
    std::vector<Tensor> d_xs;
    Tensor d_h0;

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for (auto& g : gates) out.insert(out.end(), {&g.W, &g.U, &g.b});
        return out;
    }
};

inline std::vector<GateParams> zero_gate_grads(const CellParams& p) {
    std::vector<GateParams> out;
    for (const auto& g : p.gates) out.push_back({Tensor(g.W.shape()), Tensor(g.U.shape()), Tensor(g.b.shape())});
    return out;
}

/// Backpropagation through time. d_hs[t] is the direct loss gradient at
/// step t (an empty tensor means zero); parameter gradients are summed over
/// all steps.
inline SequenceGrads backward_sequence(const CellParams& p, const Unrolled& run, std::span<const Tensor> d_hs) {
    const std::size_t steps = run.states.size();
    if (d_hs.size() != steps) {
        throw DimensionError("backward_sequence: " + std::to_string(d_hs.size()) + " upstream gradients for " +
                             std::to_string(steps) + " steps");
    }
    SequenceGrads out;
    out.gates = zero_gate_grads(p);
    out.d_xs.resize(steps);
    Tensor carry_h(run.h_last.shape());
    Tensor carry_c = p.kind == CellKind::Lstm ? Tensor(run.h_last.shape()) : Tensor();
    for (std::size_t t = steps; t-- > 0;) {
        Tensor d_h = carry_h;
        if (!d_hs[t].empty()) axpy(d_h, d_hs[t]);
        CellGrads g = cell_backward(p, run.states[t], d_h, carry_c);
        for (std::size_t q = 0; q < out.gates.size(); ++q) {
            axpy(out.gates[q].W, g.gates[q].W);
            axpy(out.gates[q].U, g.gates[q].U);
            axpy(out.gates[q].b, g.gates[q].b);
        }
        out.d_xs[t] = std::move(g.d_x);
        carry_h = std::move(g.d_h_prev);
        carry_c = std::move(g.d_c_prev);
    }
    out.d_h0 = std::move(carry_h);
    return out;
}

/// Scalar loss of the per-step hidden states.
using SequenceLoss = std::function<double(std::span<const Tensor> hs)>;

/// Central-difference gradient of loss(unroll(p, xs, h0)) w.r.t. every
/// parameter component, every input component and h0.
inline SequenceGrads finite_diff_grad(const CellParams& p, std::span<const Tensor> xs, const Tensor& h0,
                                      const SequenceLoss& loss, double eps = 1e-5) {
    auto evaluate = [&](const CellParams& q, std::span<const Tensor> inputs, const Tensor& h) {
        const Unrolled run = unroll_sequence(q, inputs, h);
        std::vector<Tensor> hs;
        hs.reserve(run.states.size());
        for (const auto& s : run.states) hs.push_back(s.h);
        return loss(hs);
    };
    auto central = [&](double& slot, auto&& f) {
        const double saved = slot;
        slot = saved + eps;
        const double up = f();
        slot = saved - eps;
        const double down = f();
        slot = saved;
        return (up - down) / (2.0 * eps);
    };

    SequenceGrads out;
    out.gates = zero_gate_grads(p);
    CellParams work = p;
    auto params = work.tensors();
    auto grads = out.tensors();
    for (std::size_t t = 0; t < params.size(); ++t)
        for (std::size_t k = 0; k < params[t]->size(); ++k)
            (*grads[t])[k] = central((*params[t])[k], [&] { return evaluate(work, xs, h0); });

    std::vector<Tensor> inputs(xs.begin(), xs.end());
    out.d_xs.resize(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        out.d_xs[t] = Tensor(inputs[t].shape());
        for (std::size_t k = 0; k < inputs[t].size(); ++k)
            out.d_xs[t][k] = central(inputs[t][k], [&] { return evaluate(p, inputs, h0); });
    }
    Tensor h = h0;
    out.d_h0 = Tensor(h0.shape());
    for (std::size_t k = 0; k < h.size(); ++k) out.d_h0[k] = central(h[k], [&] { return evaluate(p, xs, h); });
    return out;
}

}  // namespace sitgru
