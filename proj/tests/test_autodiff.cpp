#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "mgfusion/autodiff/conv.hpp"
#include "mgfusion/autodiff/dense.hpp"
#include "mgfusion/autodiff/gradcheck.hpp"
#include "mgfusion/autodiff/optim.hpp"

using namespace mgfusion;
using namespace mgfusion::ad;

namespace {

Array random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Array a(std::move(shape));
    for (double& x : a.storage()) x = rng.uniform(lo, hi);
    return a;
}

// Checks every coordinate of every parameter for a loss sum(w * f(params)),
// with w a fixed random weighting so every output element matters.
double max_op_error(ParameterSet& params, const std::function<Var(Tape&, std::vector<Var>&)>& op, Rng& rng) {
    Array weights;
    {
        Tape probe;
        std::vector<Var> in;
        for (auto& p : params) in.push_back(probe.param(p));
        weights = random_array(op(probe, in).shape(), rng);
    }
    auto build = [&](Tape& tape) {
        std::vector<Var> in;
        for (auto& p : params) in.push_back(tape.param(p));
        Var out = op(tape, in);
        return sum_all(hadamard(out, tape.constant(weights)));
    };
    const auto sites = sample_sites(params, params.scalar_count(), rng);
    return check_gradients(params, build, sites, 1e-6).max_rel_error();
}

struct OpCase {
    const char* name;
    std::vector<Shape> shapes;
    std::function<Var(Tape&, std::vector<Var>&)> op;
    double lo = -1.0;
    double hi = 1.0;
};

std::vector<OpCase> op_cases() {
    return {
        {"add_bias", {{3, 4}, {4}}, [](Tape&, std::vector<Var>& v) { return add(v[0], v[1]); }},
        {"sub_broadcast", {{2, 3, 4}, {3, 1}}, [](Tape&, std::vector<Var>& v) { return sub(v[0], v[1]); }},
        {"hadamard", {{3, 4}, {3, 4}}, [](Tape&, std::vector<Var>& v) { return hadamard(v[0], v[1]); }},
        {"mul_broadcast", {{2, 3}, {1, 3}}, [](Tape&, std::vector<Var>& v) { return mul(v[0], v[1]); }},
        {"affine", {{5}}, [](Tape&, std::vector<Var>& v) { return affine(v[0], -2.5, 0.75); }},
        {"one_minus", {{5}}, [](Tape&, std::vector<Var>& v) { return one_minus(v[0]); }},
        {"relu", {{4, 5}}, [](Tape&, std::vector<Var>& v) { return relu(v[0]); }},
        {"sigmoid", {{4, 5}}, [](Tape&, std::vector<Var>& v) { return sigmoid(v[0]); }, -4.0, 4.0},
        {"abs", {{4, 5}}, [](Tape&, std::vector<Var>& v) { return abs(v[0]); }},
        {"exp", {{4, 5}}, [](Tape&, std::vector<Var>& v) { return ad::exp(v[0]); }},
        {"power", {{6}}, [](Tape&, std::vector<Var>& v) { return power(v[0], -0.5); }, 0.5, 2.0},
        {"matmul", {{3, 4}, {4, 2}}, [](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); }},
        {"matmul_batched", {{2, 3, 4}, {4, 5}}, [](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); }},
        {"bmm", {{2, 3, 4}, {2, 4, 3}}, [](Tape&, std::vector<Var>& v) { return bmm(v[0], v[1]); }},
        {"reshape", {{2, 6}}, [](Tape&, std::vector<Var>& v) { return reshape(v[0], Shape{3, 4}); }},
        {"permute", {{2, 3, 4}}, [](Tape&, std::vector<Var>& v) { return permute(v[0], {2, 0, 1}); }},
        {"transpose", {{2, 3, 4}}, [](Tape&, std::vector<Var>& v) { return transpose(v[0]); }},
        {"reduce_sum", {{2, 3, 4}}, [](Tape&, std::vector<Var>& v) { return reduce_sum(v[0], 1); }},
        {"mean_all", {{3, 4}}, [](Tape&, std::vector<Var>& v) { return mean_all(v[0]); }},
        {"softmax_last", {{3, 5}}, [](Tape&, std::vector<Var>& v) { return softmax(v[0], -1); }, -3.0, 3.0},
        {"softmax_mid", {{2, 4, 3}}, [](Tape&, std::vector<Var>& v) { return softmax(v[0], 1); }, -3.0, 3.0},
        {"concat", {{2, 3}, {2, 2}}, [](Tape&, std::vector<Var>& v) { return concat({v[0], v[1]}, 1); }},
        {"slice", {{4, 3}}, [](Tape&, std::vector<Var>& v) { return slice(v[0], 0, 1, 2); }},
        {"temporal_conv", {{2, 6, 3, 2}, {3, 2, 4}, {4}},
         [](Tape&, std::vector<Var>& v) { return temporal_conv(v[0], v[1], v[2]); }},
        {"node_mix", {{3, 3}, {2, 4, 3, 2}}, [](Tape&, std::vector<Var>& v) { return node_mix(v[0], v[1]); }},
    };
}

}  // namespace

TEST(Backward, SquareAtThreeGivesSix) {
    Tape tape;
    Var x = tape.variable(Array::scalar(3.0));
    Var loss = hadamard(x, x);
    tape.backward(loss);
    EXPECT_DOUBLE_EQ(tape.grad(x)[0], 6.0);
}

TEST(Backward, SumOfSoftmaxHasZeroGradient) {
    Rng rng(7);
    Tape tape;
    Var x = tape.variable(random_array({4, 6}, rng, -5.0, 5.0));
    tape.backward(sum_all(softmax(x, 1)));
    for (double g : tape.grad(x)) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(Backward, RejectsNonScalarLoss) {
    Tape tape;
    Var x = tape.variable(Array::vector({1.0, 2.0}));
    EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Backward, TapeIsSingleUseUntilReset) {
    Tape tape;
    Var x = tape.variable(Array::scalar(2.0));
    Var l = hadamard(x, x);
    tape.backward(l);
    EXPECT_THROW(tape.backward(l), Error);
    tape.reset();
    Var y = tape.variable(Array::scalar(2.0));
    tape.backward(hadamard(y, y));
    EXPECT_DOUBLE_EQ(tape.grad(y)[0], 4.0);
}

TEST(Backward, ReluSubgradientAtZeroIsZero) {
    Tape tape;
    Var x = tape.variable(Array::vector({-1.0, 0.0, 2.0}));
    tape.backward(sum_all(relu(x)));
    EXPECT_EQ(tape.grad(x), (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(Backward, ParametersAccumulateAcrossUses) {
    ParameterSet ps;
    Parameter& p = ps.add("p", Array::vector({1.5, -2.0}));
    Tape tape;
    Var a = tape.param(p);
    Var b = tape.param(p);
    tape.backward(sum_all(add(hadamard(a, a), scale(b, 3.0))));
    EXPECT_DOUBLE_EQ(p.grad[0], 2 * 1.5 + 3.0);
    EXPECT_DOUBLE_EQ(p.grad[1], 2 * -2.0 + 3.0);
}

TEST(Backward, IsLinearInTheLoss) {
    Rng rng(11);
    const Array x0 = random_array({3, 4}, rng);
    const Array w0 = random_array({4, 2}, rng);
    auto grads = [&](double a, double b) {
        Tape tape;
        Var x = tape.variable(x0);
        Var w = tape.constant(w0);
        Var l1 = sum_all(sigmoid(matmul(x, w)));
        Var l2 = mean_all(hadamard(x, x));
        tape.backward(add(scale(l1, a), scale(l2, b)));
        return tape.grad(x);
    };
    const auto g1 = grads(1.0, 0.0);
    const auto g2 = grads(0.0, 1.0);
    const auto gc = grads(2.5, -0.75);
    for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], 2.5 * g1[i] - 0.75 * g2[i], 1e-14);
}

TEST(Backward, DeterministicForSameInputs) {
    auto run = [] {
        Rng rng(3);
        Tape tape;
        Var x = tape.variable(random_array({5, 5}, rng));
        Var y = softmax(matmul(x, transpose(x)), 1);
        tape.backward(sum_all(hadamard(y, y)));
        auto out = y.value().storage();
        auto g = tape.grad(x);
        out.insert(out.end(), g.begin(), g.end());
        return out;
    };
    EXPECT_EQ(run(), run());
}

TEST(Primitives, MatchCentralDifferences) {
    for (const auto& c : op_cases()) {
        Rng rng(101);
        double worst = 0.0;
        for (int instance = 0; instance < 100; ++instance) {
            ParameterSet ps;
            for (std::size_t k = 0; k < c.shapes.size(); ++k) {
                Array a = random_array(c.shapes[k], rng, c.lo, c.hi);
                // keep |x| away from the kinks of relu/abs
                for (double& x : a.storage()) {
                    if (std::fabs(x) < 1e-3) x = 0.5;
                }
                ps.add("in" + std::to_string(k), std::move(a));
            }
            worst = std::max(worst, max_op_error(ps, c.op, rng));
        }
        EXPECT_LT(worst, 1e-6) << c.name;
    }
}

TEST(Primitives, ElementwiseBroadcastMatchesLoops) {
    Rng rng(5);
    const Array a = random_array({2, 3, 4}, rng);
    const Array b = random_array({3, 1}, rng);
    Tape tape;
    Var out = mul(tape.constant(a), tape.constant(b));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 4; ++k) {
                EXPECT_EQ(out.value().at(i, j, k), a.at(i, j, k) * b.at(j, 0));
            }
    EXPECT_THROW(add(tape.constant(a), tape.constant(random_array({2, 4}, rng))), ShapeError);
}

TEST(Primitives, MatmulMatchesNaiveProduct) {
    Rng rng(9);
    const Array a = random_array({4, 7}, rng);
    const Array b = random_array({7, 3}, rng);
    Tape tape;
    Var c = matmul(tape.constant(a), tape.constant(b));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 7; ++k) s += a.at(i, k) * b.at(k, j);
            EXPECT_NEAR(c.value().at(i, j), s, 1e-14);
        }
}

TEST(Primitives, SoftmaxIsProbabilityVectorEvenForLargeInputs) {
    Rng rng(13);
    Tape tape;
    Array a = random_array({50, 8}, rng, -800.0, 800.0);
    Var y = softmax(tape.constant(a), 1);
    for (std::size_t r = 0; r < 50; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 8; ++c) {
            EXPECT_GE(y.value().at(r, c), 0.0);
            s += y.value().at(r, c);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Primitives, TemporalConvMatchesDirectSum) {
    Rng rng(17);
    const Array x = random_array({2, 5, 3, 2}, rng);
    const Array w = random_array({2, 2, 4}, rng);
    const Array b = random_array({4}, rng);
    Tape tape;
    Var y = temporal_conv(tape.constant(x), tape.constant(w), tape.constant(b));
    ASSERT_EQ(y.shape(), (Shape{2, 4, 3, 4}));
    const auto& yv = y.value();
    for (std::size_t bi = 0; bi < 2; ++bi)
        for (std::size_t t = 0; t < 4; ++t)
            for (std::size_t n = 0; n < 3; ++n)
                for (std::size_t co = 0; co < 4; ++co) {
                    double s = b[co];
                    for (std::size_t tap = 0; tap < 2; ++tap)
                        for (std::size_t ci = 0; ci < 2; ++ci) {
                            s += x[((bi * 5 + t + tap) * 3 + n) * 2 + ci] * w[(tap * 2 + ci) * 4 + co];
                        }
                    EXPECT_NEAR(yv[((bi * 4 + t) * 3 + n) * 4 + co], s, 1e-14);
                }
}

TEST(Adam, ZeroGradientLeavesValueButCountsStep) {
    ParameterSet ps;
    Parameter& p = ps.add("p", Array::vector({0.25, -1.0}));
    adam_step(p, AdamConfig{});
    EXPECT_EQ(p.value[0], 0.25);
    EXPECT_EQ(p.value[1], -1.0);
    EXPECT_EQ(p.step, 1u);
}

TEST(Adam, FirstStepWithUnitGradient) {
    ParameterSet ps;
    Parameter& p = ps.add("p", Array::scalar(0.0));
    p.grad[0] = 1.0;
    AdamConfig cfg;
    adam_step(p, cfg);
    // m_hat = 1, v_hat = 1 after bias correction
    EXPECT_NEAR(p.value[0], -cfg.lr / (1.0 + cfg.eps), 1e-18);
    EXPECT_NEAR(p.value[0], -9.9999e-5, 1e-9);
}

TEST(Adam, MinimisesSquareFromOne) {
    ParameterSet ps;
    Parameter& p = ps.add("x", Array::scalar(1.0));
    AdamConfig cfg;
    cfg.lr = 0.1;
    for (int i = 0; i < 1000; ++i) {
        ps.zero_grad();
        Tape tape;
        Var x = tape.param(p);
        tape.backward(hadamard(x, x));
        adam_step(ps, cfg);
    }
    EXPECT_LT(std::fabs(p.value[0]), 1e-3);
}

TEST(GradCheck, SamplesEveryParameterFirst) {
    ParameterSet ps;
    Rng rng(1);
    ps.add("a", Array(Shape{10}));
    ps.add("b", Array(Shape{1}));
    ps.add("c", Array(Shape{3}));
    const auto sites = sample_sites(ps, 5, rng);
    ASSERT_EQ(sites.size(), 5u);
    EXPECT_EQ(sites[0].param->name, "a");
    EXPECT_EQ(sites[1].param->name, "b");
    EXPECT_EQ(sites[2].param->name, "c");
    EXPECT_EQ(sample_sites(ps, 100, rng).size(), 14u);
}

TEST(GradCheck, CorruptOffsetIsReported) {
    ParameterSet ps;
    Rng rng(2);
    ps.add("w", random_array({3}, rng));
    auto build = [&](Tape& t) {
        Var w = t.param(*ps.find("w"));
        return sum_all(hadamard(w, w));
    };
    const auto sites = sample_sites(ps, 3, rng);
    EXPECT_LT(check_gradients(ps, build, sites).max_rel_error(), 1e-8);
    const auto bad = check_gradients(ps, build, sites, 1e-5, 0.5);
    EXPECT_GT(bad.max_rel_error(), 0.1);
    EXPECT_EQ(bad.worst()->param, "w");
}

TEST(Dense, AppliesOverLastAxis) {
    ParameterSet ps;
    Rng rng(4);
    auto layer = DenseLayer::create(ps, "d", 3, 2, rng);
    const Array x = random_array({2, 4, 3}, rng);
    Tape tape;
    Var y = layer(tape, tape.constant(x));
    ASSERT_EQ(y.shape(), (Shape{2, 4, 2}));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t o = 0; o < 2; ++o) {
                double s = layer.bias->value[o];
                for (std::size_t k = 0; k < 3; ++k) s += x.at(i, j, k) * layer.weight->value.at(k, o);
                EXPECT_NEAR(y.value().at(i, j, o), s, 1e-14);
            }
}
