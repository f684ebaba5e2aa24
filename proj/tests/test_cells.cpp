// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "sitgru/cells.hpp"
#include "sitgru/gradcheck.hpp"

namespace sitgru {
namespace {

CellParams filled(CellKind kind, std::size_t d, std::size_t n, double value) {
    CellParams p = CellParams::zeros(kind, d, n);
    for (Tensor* t : p.tensors()) t->fill(value);
    return p;
}

TEST(GruStepTest, ZeroParamsKeepZeroState) {
    const CellParams p = CellParams::zeros(CellKind::Gru, 2, 3);
    const CellState s = gru_step(p, Tensor::vector({0.3, -1.2}), Tensor({3}));
    EXPECT_EQ(s.h, Tensor({3}));
    EXPECT_DOUBLE_EQ(s.cache.act[0][0], 0.5);  // z
    EXPECT_DOUBLE_EQ(s.cache.act[1][0], 0.5);  // r
}

TEST(GruStepTest, SaturatedUpdateGateCopiesState) {
    Rng rng(1);
    CellParams p = CellParams::glorot(CellKind::Gru, 2, 3, rng);
    p.gate(Gate::Update) = {Tensor({3, 2}), Tensor({3, 3}), Tensor({3}, 20.0)};
    const Tensor h_prev = Tensor::vector({0.2, -0.7, 0.9});
    const CellState s = gru_step(p, Tensor::vector({60, -9}), h_prev);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(s.h[k], h_prev[k], 1e-8);
}

TEST(GruStepTest, ScalarHandEvaluation) {
    const CellState s = gru_step(filled(CellKind::Gru, 1, 1, 1.0), Tensor::vector({1.0}), Tensor::vector({0.5}));
    EXPECT_NEAR(s.h[0], 0.53684, 1e-5);
}

TEST(GruStepTest, ShapeMismatchThrows) {
    const CellParams p = CellParams::zeros(CellKind::Gru, 2, 3);
    EXPECT_THROW(gru_step(p, Tensor({3}), Tensor({3})), DimensionError);
    EXPECT_THROW(gru_step(p, Tensor({2}), Tensor({2})), DimensionError);
    EXPECT_THROW(gru_step(CellParams::zeros(CellKind::SiTGru, 2, 3), Tensor({2}), Tensor({3})), ArgumentError);
}

TEST(SitgruStepTest, ZeroParamsGiveQuarter) {
    const CellState s = sitgru_step(CellParams::zeros(CellKind::SiTGru, 1, 1), Tensor::vector({0.9}), Tensor({1}));
    EXPECT_DOUBLE_EQ(s.h[0], 0.25);
}

TEST(SitgruStepTest, SaturatedUpdateGateCopiesState) {
    Rng rng(2);
    for (CellKind kind : {CellKind::SiTGru, CellKind::SiTGruTanhNoReset, CellKind::SiTGruRelu}) {
        CellParams p = CellParams::glorot(kind, 3, 2, rng);
        p.gate(Gate::Update) = {Tensor({2, 3}), Tensor({2, 2}), Tensor({2}, 20.0)};
        const Tensor h_prev = Tensor::vector({0.35, 0.8});
        const CellState s = sitgru_step(p, Tensor::vector({0.4, -0.75, 0.3}), h_prev);
        for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(s.h[k], h_prev[k], 1e-8);
    }
}

TEST(SitgruStepTest, ScalarHandEvaluation) {
    const CellState s = sitgru_step(filled(CellKind::SiTGru, 1, 1, 1.0), Tensor::vector({1.0}), Tensor::vector({0.5}));
    EXPECT_NEAR(s.h[0], 0.53217, 1e-5);
}

TEST(SitgruStepTest, HasNoResetGate) {
    for (CellKind kind : {CellKind::SiTGru, CellKind::SiTGruTanhNoReset, CellKind::SiTGruRelu}) {
        const CellParams p = CellParams::zeros(kind, 2, 2);
        EXPECT_FALSE(p.has_gate(Gate::Reset));
        EXPECT_EQ(p.gates.size(), 2u);
        EXPECT_THROW(p.gate(Gate::Reset), ArgumentError);
    }
}

TEST(NoUpdateStepTest, StateIsCarriedOver) {
    Rng rng(3);
    const CellParams p = CellParams::glorot(CellKind::GruNoUpdate, 2, 1, rng);
    EXPECT_EQ(noupdate_step(p, Tensor::vector({5, -5}), Tensor::vector({0.7})).h, Tensor::vector({0.7}));
    EXPECT_EQ(noupdate_step(p, Tensor::vector({5, -5}), Tensor({1})).h, Tensor({1}));
}

TEST(NoUpdateStepTest, FourStepUnrollReturnsInitialState) {
    Rng rng(4);
    const CellParams p = CellParams::glorot(CellKind::GruNoUpdate, 2, 3, rng);
    const Tensor h0 = Tensor::vector({0.1, -0.4, 0.9});
    std::vector<Tensor> xs;
    for (int t = 0; t < 4; ++t) xs.push_back(random_uniform({2}, -3, 3, rng));
    const Unrolled run = unroll_sequence(p, xs, h0);
    EXPECT_EQ(run.h_last, h0);
    for (const auto& s : run.states) {
        EXPECT_EQ(s.h, h0);
        EXPECT_EQ(s.cache.act.size(), 2u);  // r and candidate are still computed
    }
}

TEST(LstmStepTest, ZeroParamsStayAtZero) {
    const CellParams p = CellParams::zeros(CellKind::Lstm, 2, 2);
    const CellState s = lstm_step(p, Tensor::vector({1, 1}), Tensor({2}), Tensor({2}));
    EXPECT_EQ(s.h, Tensor({2}));
    EXPECT_EQ(s.c, Tensor({2}));
}

TEST(LstmStepTest, ScalarHandEvaluation) {
    // All weights/biases 1, x = 1, h = 0.5, c = 0.25:
    // i = f = o = sigmoid(2.5), g = tanh(2.5), c' = f*c + i*g, h' = o*tanh(c').
    const CellState s =
        lstm_step(filled(CellKind::Lstm, 1, 1, 1.0), Tensor::vector({1.0}), Tensor::vector({0.5}), Tensor::vector({0.25}));
    const double gate = 1.0 / (1.0 + std::exp(-2.5));
    const double c = gate * 0.25 + gate * std::tanh(2.5);
    EXPECT_NEAR(s.c[0], c, 1e-15);
    EXPECT_NEAR(s.h[0], gate * std::tanh(c), 1e-15);
}

TEST(CellBackwardTest, ZeroUpstreamGivesZeroGradients) {
    Rng rng(5);
    for (CellKind kind : kAllCellKinds) {
        const CellParams p = random_cell_params(kind, 2, 3, rng);
        const CellState s = cell_step(p, random_uniform({2}, -1, 1, rng), random_uniform({3}, 0, 1, rng));
        const CellGrads g = cell_backward(p, s, Tensor({3}));
        for (const auto& gate : g.gates) {
            EXPECT_EQ(max_abs(gate.W), 0.0);
            EXPECT_EQ(max_abs(gate.U), 0.0);
            EXPECT_EQ(max_abs(gate.b), 0.0);
        }
        EXPECT_EQ(max_abs(g.d_x), 0.0);
        EXPECT_EQ(max_abs(g.d_h_prev), 0.0);
    }
}

TEST(CellBackwardTest, MissingCacheIsAStateError) {
    const CellParams p = CellParams::zeros(CellKind::SiTGru, 1, 1);
    CellState s;
    s.h = Tensor({1});
    EXPECT_THROW(cell_backward(p, s, Tensor({1})), StateError);
    const CellState gru = gru_step(CellParams::zeros(CellKind::Gru, 1, 1), Tensor({1}), Tensor({1}));
    EXPECT_THROW(cell_backward(p, gru, Tensor({1})), StateError);
}

TEST(CellBackwardTest, NoUpdatePassesGradientStraightThrough) {
    Rng rng(6);
    const CellParams p = random_cell_params(CellKind::GruNoUpdate, 2, 3, rng);
    const CellState s = noupdate_step(p, random_uniform({2}, -1, 1, rng), random_uniform({3}, -1, 1, rng));
    const Tensor d_h = Tensor::vector({0.3, -1.1, 2.0});
    const CellGrads g = cell_backward(p, s, d_h);
    EXPECT_EQ(g.d_h_prev, d_h);
    EXPECT_EQ(max_abs(g.d_x), 0.0);
    const auto& reset = g.gates[p.gate_index(Gate::Reset)];
    EXPECT_EQ(max_abs(reset.W), 0.0);
    EXPECT_EQ(max_abs(reset.U), 0.0);
    EXPECT_EQ(max_abs(reset.b), 0.0);
}

TEST(CellBackwardTest, RandomScalarSitgruMatchesFiniteDifferences) {
    const GradCheckReport r = check_cell_gradients(CellKind::SiTGru, 77, {1, 1, 1, 1});
    EXPECT_GT(r.checked, 0u);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(UnrollTest, EmptySequenceRejected) {
    const CellParams p = CellParams::zeros(CellKind::SiTGru, 1, 1);
    EXPECT_THROW(unroll_sequence(p, std::vector<Tensor>{}, Tensor({1})), ArgumentError);
}

TEST(UnrollTest, SingleStepEqualsStep) {
    Rng rng(8);
    for (CellKind kind : kAllCellKinds) {
        const CellParams p = random_cell_params(kind, 2, 2, rng);
        const Tensor x = random_uniform({2}, -1, 1, rng), h0 = random_uniform({2}, 0, 1, rng);
        const Unrolled run = unroll_sequence(p, std::vector<Tensor>{x}, h0);
        EXPECT_EQ(run.h_last, cell_step(p, x, h0).h);
    }
}

TEST(UnrollTest, StatesChain) {
    Rng rng(9);
    const CellParams p = random_cell_params(CellKind::Gru, 2, 3, rng);
    std::vector<Tensor> xs;
    for (int t = 0; t < 5; ++t) xs.push_back(random_uniform({2}, -1, 1, rng));
    const Unrolled run = unroll_sequence(p, xs, Tensor({3}));
    for (std::size_t t = 1; t < xs.size(); ++t) EXPECT_EQ(run.states[t].cache.h_prev, run.states[t - 1].h);
}

TEST(UnrollTest, BatchedStepMatchesRowByRow) {
    Rng rng(10);
    for (CellKind kind : kAllCellKinds) {
        const CellParams p = random_cell_params(kind, 3, 2, rng);
        const Tensor x = random_uniform({4, 3}, -1, 1, rng), h = random_uniform({4, 2}, 0, 1, rng);
        const CellState batched = cell_step(p, x, h);
        for (std::size_t r = 0; r < 4; ++r) {
            const Tensor xr({3}, std::vector<double>(x.data() + r * 3, x.data() + r * 3 + 3));
            const Tensor hr({2}, std::vector<double>(h.data() + r * 2, h.data() + r * 2 + 2));
            const CellState single = cell_step(p, xr, hr);
            for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(batched.h.at(r, k), single.h[k], 1e-15);
        }
    }
}

TEST(SitgruPropertyTest, HiddenStateStaysInUnitInterval) {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 1 + rng() % 4, n = 1 + rng() % 5;
        CellParams p = CellParams::glorot(CellKind::SiTGru, d, n, rng);
        for (Tensor* t : p.tensors())
            for (double& v : t->values()) v *= uniform(rng, 0.5, 4.0);
        std::vector<Tensor> xs;
        for (int t = 0; t < 12; ++t) xs.push_back(random_uniform({d}, -10, 10, rng));
        const Unrolled run = unroll_sequence(p, xs, random_uniform({n}, 0, 1, rng));
        for (const auto& s : run.states)
            for (double v : s.h.values()) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
    }
}

TEST(CellPropertyTest, GatesStrictlyInsideUnitInterval) {
    Rng rng(13);
    for (CellKind kind : {CellKind::Gru, CellKind::SiTGru, CellKind::GruNoUpdate, CellKind::Lstm}) {
        for (int trial = 0; trial < 50; ++trial) {
            const CellParams p = random_cell_params(kind, 3, 4, rng);
            const CellState s = cell_step(p, random_uniform({3}, -3, 3, rng), random_uniform({4}, -1, 1, rng));
            const auto layout = gate_layout(kind);
            for (std::size_t g = 0; g < layout.size(); ++g) {
                if (layout[g] == Gate::Candidate || layout[g] == Gate::CellInput) continue;
                for (double v : s.cache.act[g].values()) {
                    EXPECT_GT(v, 0.0);
                    EXPECT_LT(v, 1.0);
                }
            }
        }
    }
}

TEST(CellPropertyTest, StateIsConvexCombinationOfPreviousAndCandidate) {
    Rng rng(14);
    for (CellKind kind : {CellKind::Gru, CellKind::SiTGru, CellKind::SiTGruTanhNoReset, CellKind::SiTGruRelu}) {
        for (int trial = 0; trial < 50; ++trial) {
            const CellParams p = random_cell_params(kind, 2, 5, rng);
            const CellState s = cell_step(p, random_uniform({2}, -3, 3, rng), random_uniform({5}, -1, 1, rng));
            const Tensor& cand = s.cache.act.back();
            for (std::size_t k = 0; k < 5; ++k) {
                const double lo = std::min(s.cache.h_prev[k], cand[k]);
                const double hi = std::max(s.cache.h_prev[k], cand[k]);
                EXPECT_GE(s.h[k], lo - 1e-12);
                EXPECT_LE(s.h[k], hi + 1e-12);
            }
        }
    }
}

TEST(CellPropertyTest, GruWithResetForcedOpenEqualsTanhNoResetBitForBit) {
    Rng rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        const CellParams gru = random_cell_params(CellKind::Gru, 3, 4, rng);
        CellParams noreset = CellParams::zeros(CellKind::SiTGruTanhNoReset, 3, 4);
        noreset.gate(Gate::Update) = gru.gate(Gate::Update);
        noreset.gate(Gate::Candidate) = gru.gate(Gate::Candidate);
        const Tensor x = random_uniform({3}, -2, 2, rng), h = random_uniform({4}, -1, 1, rng);
        StepOptions open;
        open.force_reset_ones = true;
        EXPECT_EQ(gru_step(gru, x, h, open).h, sitgru_step(noreset, x, h).h);
    }
}

TEST(CellPropertyTest, CandidateActivationWithZeroPreactivation) {
    StepOptions zero;
    zero.zero_candidate_preactivation = true;
    Rng rng(16);
    const CellParams sit = random_cell_params(CellKind::SiTGru, 2, 3, rng);
    CellParams tanh_variant = sit;
    tanh_variant.kind = CellKind::SiTGruTanhNoReset;
    const Tensor x = random_uniform({2}, -1, 1, rng), h = random_uniform({3}, 0, 1, rng);
    EXPECT_EQ(sitgru_step(sit, x, h, zero).cache.act.back(), Tensor({3}, 0.5));
    EXPECT_EQ(sitgru_step(tanh_variant, x, h, zero).cache.act.back(), Tensor({3}, 0.0));
}

TEST(ParamCountTest, ClosedForms) {
    EXPECT_EQ(param_count(CellKind::SiTGru, 1, 8), 160u);
    EXPECT_EQ(param_count(CellKind::Gru, 1, 8), 240u);
    EXPECT_EQ(param_count(CellKind::GruNoUpdate, 1, 8), 160u);
    EXPECT_EQ(param_count(CellKind::Lstm, 1, 8), 320u);
    EXPECT_THROW(param_count(CellKind::Gru, 0, 8), ArgumentError);
    for (std::size_t d = 1; d <= 12; ++d)
        for (std::size_t n = 1; n <= 12; ++n) {
            const std::size_t base = d * n + n * n + n;
            EXPECT_EQ(param_count(CellKind::Gru, d, n), 3 * base);
            EXPECT_EQ(3 * param_count(CellKind::SiTGru, d, n), 2 * param_count(CellKind::Gru, d, n));
            for (CellKind k : kAllCellKinds) EXPECT_EQ(CellParams::zeros(k, d, n).parameter_count(), param_count(k, d, n));
        }
}

TEST(FiniteDiffTest, QuadraticLossOnOneStepUnitCell) {
    Rng rng(17);
    const CellParams p = random_cell_params(CellKind::SiTGru, 1, 1, rng);
    const std::vector<Tensor> xs{Tensor::vector({0.4})};
    const Tensor h0 = Tensor::vector({0.3});
    const double target = 0.9;
    auto loss = [&](std::span<const Tensor> hs) { return (hs[0][0] - target) * (hs[0][0] - target); };
    const SequenceGrads numeric = finite_diff_grad(p, xs, h0, loss);
    const Unrolled run = unroll_sequence(p, xs, h0);
    const std::vector<Tensor> d_hs{Tensor::vector({2.0 * (run.h_last[0] - target)})};
    SequenceGrads analytic = backward_sequence(p, run, d_hs);
    SequenceGrads num = numeric;
    auto a = analytic.tensors();
    auto n = num.tensors();
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < a[i]->size(); ++k) EXPECT_NEAR((*a[i])[k], (*n[i])[k], 1e-6);
    EXPECT_NEAR(analytic.d_h0[0], numeric.d_h0[0], 1e-6);
}

TEST(FiniteDiffTest, ConstantLossGivesZeroGradients) {
    Rng rng(18);
    const CellParams p = random_cell_params(CellKind::Gru, 2, 2, rng);
    const std::vector<Tensor> xs{random_uniform({2}, -1, 1, rng), random_uniform({2}, -1, 1, rng)};
    SequenceGrads g = finite_diff_grad(p, xs, Tensor({2}), [](std::span<const Tensor>) { return 0.0; });
    for (Tensor* t : g.tensors()) EXPECT_EQ(max_abs(*t), 0.0);
    for (const auto& dx : g.d_xs) EXPECT_EQ(max_abs(dx), 0.0);
}

class CellGradientTest : public ::testing::TestWithParam<CellKind> {};

TEST_P(CellGradientTest, FourStepUnrollMatchesFiniteDifferences) {
    const GradCheckReport r = check_cell_gradients(GetParam(), 1234, {2, 3, 4, 1});
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST_P(CellGradientTest, TwentyRandomDrawsMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const GradCheckReport r = check_cell_gradients(GetParam(), seed, {2, 3, 4, 2});
        EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst;
    }
}

TEST_P(CellGradientTest, FlippedGradientIsDetected) {
    if (GetParam() == CellKind::GruNoUpdate) GTEST_SKIP() << "candidate never reaches the output";
    fault_injection::flip_candidate_gradient() = true;
    const GradCheckReport r = check_cell_gradients(GetParam(), 5, {2, 3, 4, 1});
    fault_injection::flip_candidate_gradient() = false;
    EXPECT_GT(r.max_rel_error, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, CellGradientTest, ::testing::ValuesIn(kAllCellKinds),
                         [](const auto& info) { return std::string(to_string(info.param)); });

}  // namespace
}  // namespace sitgru
