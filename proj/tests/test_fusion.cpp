#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mgfusion/autodiff/gradcheck.hpp"
#include "mgfusion/forecast/trainer.hpp"
#include "mgfusion/fusion/dmgab.hpp"
#include "oracles.hpp"

using namespace mgfusion;
using namespace mgfusion::fusion;

namespace {

Array random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Array a(std::move(shape));
    for (double& x : a.storage()) x = rng.uniform(lo, hi);
    return a;
}

void fill(Parameter* p, double v) { std::fill(p->value.storage().begin(), p->value.storage().end(), v); }

graphs::GraphSet random_set(std::size_t g, std::size_t n, Rng& rng) {
    graphs::GraphSet set;
    for (std::size_t k = 0; k < g; ++k) {
        Array m(Shape{n, n});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) m.at(i, j) = m.at(j, i) = rng.uniform();
        set.graphs.push_back({graphs::kGraphOrder[k % 5], std::move(m)});
    }
    return set;
}

FusionConfig small_config(std::size_t heads, std::size_t head_dim, std::size_t blocks) {
    FusionConfig c;
    c.heads = heads;
    c.head_dim = head_dim;
    c.model_dim = heads * head_dim;
    c.blocks = blocks;
    return c;
}

// Probability-vector check over the last axis.
void expect_rows_are_distributions(const Array& w) {
    const std::size_t len = w.shape().back();
    for (std::size_t r = 0; r < w.size() / len; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            EXPECT_GE(w[r * len + k], 0.0);
            s += w[r * len + k];
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

AttentionParams identity_attention(ParameterSet& ps, std::size_t d, Rng& rng) {
    AttentionParams p;
    p.query = ad::DenseLayer::create(ps, "q", 2 * d, d, rng, true);
    p.key = ad::DenseLayer::create(ps, "k", 2 * d, d, rng, true);
    p.value = ad::DenseLayer::create(ps, "v", d, d, rng, true);
    for (auto* w : {p.query.weight, p.key.weight, p.value.weight}) {
        fill(w, 0.0);
        for (std::size_t i = 0; i < d; ++i) w->value.at(i, i) = 1.0;
    }
    return p;
}

}  // namespace

TEST(WeightTensor, StacksGraphsExactly) {
    Rng rng(1);
    const auto t = oracle::random_table(rng, 10, 4, 40);
    const auto set = graphs::assemble_graph_set(t, {});
    ParameterSet ps;
    Parameter& w = init_weight_tensor(set, ps);
    ASSERT_EQ(w.value.shape(), (Shape{5, 10, 10}));
    for (std::size_t g = 0; g < 5; ++g)
        for (std::size_t i = 0; i < 10; ++i)
            for (std::size_t j = 0; j < 10; ++j) EXPECT_EQ(w.value.at(g, i, j), set[g](i, j));
    const auto four = graphs::assemble_graph_set(t, {}, graphs::GraphMask::parse("D,N,F,T"));
    ParameterSet ps4;
    EXPECT_EQ(init_weight_tensor(four, ps4).value.shape(), (Shape{4, 10, 10}));
}

TEST(Mgse, AdditiveAndDegenerateCases) {
    Rng rng(2);
    const auto set = random_set(3, 4, rng);
    ParameterSet ps;
    FusionModel model(set, small_config(2, 2, 1), ps, rng);
    const MgseTable& table = model.mgse_table();
    {
        Tape tape;
        const Array e = build_mgse(tape, table).value();
        Tape t2;
        Var codes = t2.constant(Array::identity(3));
        const Array emg = table.graph_out(t2, ad::relu(table.graph_hidden(t2, codes))).value();
        for (std::size_t g = 0; g < 3; ++g)
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t k = 0; k < 4; ++k) {
                    EXPECT_EQ(e.at(g, i, k), table.spatial->value.at(i, k) + emg.at(g, k));
                }
    }
    fill(table.graph_out.weight, 0.0);
    fill(table.graph_out.bias, 0.0);
    {
        Tape tape;
        const Array e = build_mgse(tape, table).value();
        for (std::size_t g = 0; g < 3; ++g)
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(e.at(g, i, k), table.spatial->value.at(i, k));
    }
}

TEST(Mgse, SpatialZeroMakesRowsIdentical) {
    Rng rng(3);
    const auto set = random_set(3, 5, rng);
    ParameterSet ps;
    FusionModel model(set, small_config(2, 2, 1), ps, rng);
    fill(model.mgse_table().spatial, 0.0);
    Tape tape;
    const Array e = build_mgse(tape, model.mgse_table()).value();
    for (std::size_t g = 0; g < 3; ++g)
        for (std::size_t i = 1; i < 5; ++i)
            for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(e.at(g, i, k), e.at(g, 0, k));
}

TEST(Mgse, GradientThroughGraphNetwork) {
    Rng rng(4);
    const auto set = random_set(5, 4, rng);
    ParameterSet ps;
    FusionModel model(set, small_config(2, 3, 1), ps, rng);
    const Array w = random_array({5, 4, 6}, rng);
    auto build = [&](Tape& tape) { return ad::sum_all(ad::hadamard(build_mgse(tape, model.mgse_table()), tape.constant(w))); };
    std::vector<ad::ProbeSite> sites;
    for (auto& p : ps) {
        if (p.name.find("embedding") == std::string::npos) continue;
        for (std::size_t i = 0; i < p.value.size(); ++i) sites.push_back({&p, i});
    }
    EXPECT_LT(ad::check_gradients(ps, build, sites, 1e-6).max_rel_error(), 1e-6);
}

TEST(SpatialAttention, SingleNodeAttendsToItself) {
    Rng rng(5);
    ParameterSet ps;
    auto cfg = small_config(2, 2, 1);
    AttentionParams p;
    p.query = ad::DenseLayer::create(ps, "q", 8, 4, rng);
    p.key = ad::DenseLayer::create(ps, "k", 8, 4, rng);
    p.value = ad::DenseLayer::create(ps, "v", 4, 4, rng);
    Tape tape;
    Var h = tape.constant(random_array({3, 1, 4}, rng));
    Var e = tape.constant(random_array({3, 1, 4}, rng));
    Array weights;
    Var out = spatial_attention(h, e, p, cfg, &weights);
    for (double x : weights.storage()) EXPECT_EQ(x, 1.0);
    const Array v = ad::relu(p.value(tape, h)).value();
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(out.value()[i], v[i], 1e-15);
}

TEST(SpatialAttention, HandComputedTwoNodes) {
    Rng rng(6);
    ParameterSet ps;
    const auto p = identity_attention(ps, 2, rng);
    const auto cfg = small_config(1, 2, 1);
    const double h[2][2] = {{0.3, 1.2}, {0.8, 0.1}};
    Tape tape;
    Var hv = tape.constant(Array(Shape{1, 2, 2}, {h[0][0], h[0][1], h[1][0], h[1][1]}));
    Var ev = tape.constant(Array(Shape{1, 2, 2}, {0.5, -0.5, 2.0, 1.0}));
    Var out = spatial_attention(hv, ev, p, cfg);
    for (int i = 0; i < 2; ++i) {
        double s[2];
        for (int k = 0; k < 2; ++k) s[k] = (h[i][0] * h[k][0] + h[i][1] * h[k][1]) / std::sqrt(2.0);
        const double m = std::max(s[0], s[1]);
        const double a0 = std::exp(s[0] - m) / (std::exp(s[0] - m) + std::exp(s[1] - m));
        const double a1 = 1.0 - a0;
        for (int c = 0; c < 2; ++c) EXPECT_NEAR(out.value().at(0, i, c), a0 * h[0][c] + a1 * h[1][c], 1e-12);
    }
}

TEST(SpatialAttention, ExcludeSelfZeroesDiagonal) {
    Rng rng(7);
    ParameterSet ps;
    auto cfg = small_config(2, 2, 1);
    cfg.exclude_self = true;
    AttentionParams p;
    p.query = ad::DenseLayer::create(ps, "q", 8, 4, rng);
    p.key = ad::DenseLayer::create(ps, "k", 8, 4, rng);
    p.value = ad::DenseLayer::create(ps, "v", 4, 4, rng);
    Tape tape;
    Array w;
    spatial_attention(tape.constant(random_array({2, 5, 4}, rng)), tape.constant(random_array({2, 5, 4}, rng)), p, cfg,
                      &w);
    expect_rows_are_distributions(w);
    for (std::size_t b = 0; b < w.dim(0); ++b)
        for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(w.at(b, i, i), 0.0);
}

TEST(GraphAttention, SingleGraphGivesUnitWeight) {
    Rng rng(8);
    ParameterSet ps;
    const auto cfg = small_config(2, 2, 1);
    AttentionParams p;
    p.query = ad::DenseLayer::create(ps, "q", 8, 4, rng);
    p.key = ad::DenseLayer::create(ps, "k", 8, 4, rng);
    p.value = ad::DenseLayer::create(ps, "v", 4, 4, rng);
    Tape tape;
    Var h = tape.constant(random_array({1, 5, 4}, rng));
    Array w;
    Var out = graph_attention(h, tape.constant(random_array({1, 5, 4}, rng)), p, cfg, &w);
    for (double x : w.storage()) EXPECT_EQ(x, 1.0);
    const Array v = ad::relu(p.value(tape, h)).value();
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(out.value()[i], v[i], 1e-15);
}

TEST(GraphAttention, EquivariantUnderGraphPermutation) {
    Rng rng(9);
    ParameterSet ps;
    const auto cfg = small_config(2, 3, 1);
    AttentionParams p;
    p.query = ad::DenseLayer::create(ps, "q", 12, 6, rng);
    p.key = ad::DenseLayer::create(ps, "k", 12, 6, rng);
    p.value = ad::DenseLayer::create(ps, "v", 6, 6, rng);
    const Array h = random_array({4, 3, 6}, rng);
    const Array e = random_array({4, 3, 6}, rng);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    auto permuted = [&](const Array& a) {
        Array out(a.shape());
        for (std::size_t g = 0; g < 4; ++g)
            for (std::size_t r = 0; r < 18; ++r) out[g * 18 + r] = a[perm[g] * 18 + r];
        return out;
    };
    Tape tape;
    const Array base = graph_attention(tape.constant(h), tape.constant(e), p, cfg).value();
    const Array moved = graph_attention(tape.constant(permuted(h)), tape.constant(permuted(e)), p, cfg).value();
    const Array expect = permuted(base);
    for (std::size_t i = 0; i < moved.size(); ++i) EXPECT_NEAR(moved[i], expect[i], 1e-12);
}

TEST(GatedFusion, SaturationAndConvexity) {
    Rng rng(10);
    ParameterSet ps;
    GateParams gate{&ps.add_uniform("ws", Shape{3, 3}, 3, rng), &ps.add_uniform("wg", Shape{3, 3}, 3, rng),
                    &ps.add("b", Array(Shape{3}))};
    const Array hs = random_array({2, 4, 3}, rng);
    const Array hg = random_array({2, 4, 3}, rng);
    Tape tape;
    Array z;
    gated_fusion(tape.constant(hs), tape.constant(hg), gate, &z);
    for (double x : z.storage()) {
        EXPECT_GT(x, 0.0);
        EXPECT_LT(x, 1.0);
    }
    fill(gate.bias, 1e3);
    Array out = gated_fusion(tape.constant(hs), tape.constant(hg), gate).value();
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], hs[i], 1e-12);
    fill(gate.bias, -1e3);
    out = gated_fusion(tape.constant(hs), tape.constant(hg), gate).value();
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], hg[i], 1e-12);
    fill(gate.bias, 0.3);
    out = gated_fusion(tape.constant(hs), tape.constant(hs), gate).value();
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], hs[i], 1e-15);
    EXPECT_THROW(gated_fusion(tape.constant(hs), tape.constant(random_array({2, 4, 2}, rng)), gate), ShapeError);
}

TEST(Fuse, SumsTheGraphAxis) {
    Tape tape;
    Var ones = tape.constant(Array(Shape{5, 3, 3}, 1.0));
    for (double x : fuse(ones).value().storage()) EXPECT_EQ(x, 5.0);
    Rng rng(11);
    Array onehot(Shape{4, 3, 3});
    const Array slice = random_array({3, 3}, rng);
    for (std::size_t i = 0; i < 9; ++i) onehot[2 * 9 + i] = slice[i];
    EXPECT_EQ(fuse(tape.constant(onehot)).value().storage(), slice.storage());
}

TEST(Fuse, MatchesDoubleLoopOnRandomTensors) {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t g = 1 + rng.uniform_index(6), n = 1 + rng.uniform_index(20);
        const Array t = random_array({g, n, n}, rng, -10.0, 10.0);
        Tape tape;
        const Array w = fuse(tape.constant(t)).value();
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < g; ++i) s += t.at(i, j, k);
                EXPECT_NEAR(w.at(j, k), s, 1e-12);
            }
    }
}

TEST(Dmgab, BridgeWithoutBlocksIsIdentity) {
    Rng rng(13);
    const auto set = random_set(5, 6, rng);
    ParameterSet ps;
    FusionModel model(set, small_config(2, 4, 0), ps, rng);
    Tape tape;
    const Array out = model.dmgab_forward(tape).value();
    const Array& t = model.weight_tensor().value;
    ASSERT_EQ(out.shape(), t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], t[i], 1e-9);
}

TEST(Dmgab, SgattOffBypassesBlocksAndKeepsShapes) {
    Rng rng(14);
    const auto set = random_set(4, 5, rng);
    ParameterSet ps;
    FusionModel model(set, small_config(2, 4, 2), ps, rng);
    std::vector<Shape> before;
    for (auto& p : ps) before.push_back(p.value.shape());
    model.set_sgatt(false);
    Tape tape;
    const Array off = model.dmgab_forward(tape).value();
    Tape manual;
    const Array direct =
        model.bridge_out()(manual, model.bridge_in()(manual, manual.param(model.weight_tensor()))).value();
    EXPECT_EQ(off.storage(), direct.storage());
    model.set_sgatt(true);
    Tape on;
    EXPECT_EQ(model.dmgab_forward(on).value().shape(), (Shape{4, 5, 5}));
    std::size_t k = 0;
    for (auto& p : ps) EXPECT_EQ(p.value.shape(), before[k++]);
}

TEST(Dmgab, ZeroValueProjectionsMakeBlocksIdentity) {
    Rng rng(15);
    const auto set = random_set(3, 5, rng);
    ParameterSet ps;
    FusionModel model(set, small_config(2, 3, 2), ps, rng);
    for (const auto& b : model.blocks()) {
        for (auto* p : {b.spatial.value.weight, b.spatial.value.bias, b.graph.value.weight, b.graph.value.bias}) fill(p, 0.0);
    }
    Tape tape;
    Var h = model.bridge_in()(tape, tape.param(model.weight_tensor()));
    Var e = build_mgse(tape, model.mgse_table());
    for (std::size_t l = 0; l < 2; ++l) {
        Var next = model.block_forward(h, e, l);
        EXPECT_EQ(next.value().storage(), h.value().storage());
        h = next;
    }
}

TEST(Dmgab, AttentionTraceInvariants) {
    Rng rng(16);
    for (int trial = 0; trial < 20; ++trial) {
        const auto set = random_set(1 + rng.uniform_index(5), 2 + rng.uniform_index(8), rng);
        ParameterSet ps;
        FusionModel model(set, small_config(2, 4, 2), ps, rng);
        for (auto& p : ps) {
            for (double& x : p.value.storage()) x *= 3.0;
        }
        FusionTrace trace;
        Tape tape;
        model.fused_matrix(tape, &trace);
        ASSERT_EQ(trace.spatial_attention.size(), 2u);
        for (const auto& a : trace.spatial_attention) expect_rows_are_distributions(a);
        for (const auto& a : trace.graph_attention) expect_rows_are_distributions(a);
        // scaled parameters can saturate the sigmoid to exactly 0 or 1 in f64
        for (const auto& z : trace.gates)
            for (double x : z.storage()) {
                EXPECT_GE(x, 0.0);
                EXPECT_LE(x, 1.0);
            }
    }
}

TEST(Dmgab, NodePermutationEquivariance) {
    Rng rng(17);
    const std::size_t n = 5;
    const auto set = random_set(3, n, rng);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};  // new index i holds old node perm[i]
    graphs::GraphSet moved;
    for (const auto& g : set.graphs) {
        Array m(Shape{n, n});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) m.at(i, j) = g(perm[i], perm[j]);
        moved.graphs.push_back({g.kind, std::move(m)});
    }
    const auto cfg = small_config(2, 4, 2);
    ParameterSet pa, pb;
    Rng ra(1), rb(1);
    FusionModel a(set, cfg, pa, ra);
    FusionModel b(moved, cfg, pb, rb);
    // same parameters, with node-indexed rows/columns permuted
    auto ita = pa.begin();
    for (auto itb = pb.begin(); itb != pb.end(); ++itb, ++ita) {
        if (itb->name == "fusion.weight_tensor") continue;
        itb->value = ita->value;
    }
    auto& es_a = a.mgse_table().spatial->value;
    auto& es_b = b.mgse_table().spatial->value;
    auto& in_a = a.bridge_in().weight->value;
    auto& in_b = b.bridge_in().weight->value;
    auto& out_a = a.bridge_out().weight->value;
    auto& out_b = b.bridge_out().weight->value;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cfg.model_dim; ++c) {
            es_b.at(i, c) = es_a.at(perm[i], c);
            in_b.at(i, c) = in_a.at(perm[i], c);
            out_b.at(c, i) = out_a.at(c, perm[i]);
        }
    for (std::size_t i = 0; i < n; ++i) b.bridge_out().bias->value[i] = a.bridge_out().bias->value[perm[i]];
    Tape ta, tb;
    const Array wa = a.fused_matrix(ta).value();
    const Array wb = b.fused_matrix(tb).value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(wb.at(i, j), wa.at(perm[i], perm[j]), 1e-12);
}

TEST(FusionConfig, HeadsTimesDimMustMatch) {
    FusionConfig c;
    c.model_dim = 10;
    EXPECT_THROW(c.validate(), ConfigError);
    Rng rng(1);
    ParameterSet ps;
    EXPECT_THROW({ FusionModel m(random_set(2, 3, rng), c, ps, rng); }, ConfigError);
}

TEST(EndToEnd, FullPipelineGradientCheck) {
    Rng rng(18);
    const auto t = oracle::random_table(rng, 6, 4, 200);
    const auto set = graphs::assemble_graph_set(t, {});
    forecast::ForecasterConfig fc;
    fc.window = 8;
    fc.horizon = 3;
    fc.channels = 4;
    forecast::JointModel model(set, small_config(4, 4, 2), fc, 0);
    Array series(Shape{60, 6});
    for (double& x : series.storage()) x = rng.uniform();
    const std::vector<std::size_t> starts{0, 10, 20, 30};
    const auto batch = forecast::make_batch(series, starts, fc.window, fc.horizon);
    Rng site_rng(0);
    const auto sites = ad::sample_sites(model.parameters(), 200, site_rng);
    const auto report = ad::check_gradients(
        model.parameters(), [&](Tape& tape) { return model.loss(tape, batch); }, sites, 1e-5);
    EXPECT_LT(report.max_rel_error(), 1e-4);
    EXPECT_EQ(report.per_param.size(), model.parameters().size());
}
