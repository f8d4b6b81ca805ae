#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "mgfusion/autodiff/gradcheck.hpp"
#include "mgfusion/data/dataset.hpp"
#include "mgfusion/data/synthetic.hpp"
#include "mgfusion/forecast/trainer.hpp"

using namespace mgfusion;
using namespace mgfusion::forecast;

namespace {

Array random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Array a(std::move(shape));
    for (double& x : a.storage()) x = rng.uniform(lo, hi);
    return a;
}

Array random_symmetric(std::size_t n, Rng& rng) {
    Array w(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) w.at(i, j) = w.at(j, i) = rng.uniform(-2.0, 2.0);
    return w;
}

Array synthetic_series(std::size_t nodes, std::size_t length, std::uint64_t seed,
                       graphs::NodeTable* table = nullptr) {
    data::SyntheticSpec spec;
    spec.nodes = nodes;
    spec.length = length;
    spec.seed = seed;
    spec.communities = 2;
    auto bundle = data::generate_synthetic(spec);
    const auto seg = split_segments(length, {});
    const auto scaled = data::scaled_series(bundle.nodes, data::fit_scaling(bundle.nodes, seg.train));
    if (table != nullptr) *table = bundle.nodes;
    return scaled;
}

fusion::FusionConfig small_fusion() {
    fusion::FusionConfig c;
    c.model_dim = 8;
    c.heads = 2;
    c.head_dim = 4;
    return c;
}

}  // namespace

TEST(NormalizeAdjacency, ZeroGivesIdentity) {
    Tape tape;
    const Array a = normalize_adjacency(tape.constant(Array(Shape{4, 4}))).value();
    EXPECT_EQ(a, Array::identity(4));
}

TEST(NormalizeAdjacency, SymmetricWithSpectralRadiusAtMostOne) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        Tape tape;
        const Array a = normalize_adjacency(tape.constant(random_symmetric(10, rng))).value();
        Eigen::MatrixXd m(10, 10);
        for (std::size_t i = 0; i < 10; ++i)
            for (std::size_t j = 0; j < 10; ++j) {
                EXPECT_NEAR(a.at(i, j), a.at(j, i), 1e-15);
                m(i, j) = a.at(i, j);
            }
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues();
        EXPECT_LE(ev.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
    }
}

TEST(NormalizeAdjacency, RejectsNonSquare) {
    Tape tape;
    EXPECT_THROW(normalize_adjacency(tape.constant(Array(Shape{3, 4}))), ShapeError);
}

TEST(Forecaster, OutputShapeAcrossConfigs) {
    Rng rng(2);
    for (std::size_t window : {12u, 24u})
        for (std::size_t horizon : {3u, 12u, 24u})
            for (std::size_t channels : {2u, 8u})
                for (std::size_t kernel : {2u, 3u}) {
                    ForecasterConfig cfg{window, horizon, channels, kernel};
                    ParameterSet ps;
                    Forecaster f(5, cfg, ps, rng);
                    Tape tape;
                    Var out = f.forward(tape.constant(random_array({3, window, 5}, rng)),
                                        tape.constant(Array::identity(5)));
                    EXPECT_EQ(out.shape(), (Shape{3, horizon, 5}));
                }
}

TEST(Forecaster, RejectsMismatchedShapes) {
    Rng rng(3);
    ParameterSet ps;
    Forecaster f(4, ForecasterConfig{}, ps, rng);
    Tape tape;
    EXPECT_THROW(f.forward(tape.constant(Array(Shape{2, 23, 4})), tape.constant(Array::identity(4))), ShapeError);
    EXPECT_THROW(f.forward(tape.constant(Array(Shape{2, 24, 5})), tape.constant(Array::identity(4))), ShapeError);
    EXPECT_THROW(f.forward(tape.constant(Array(Shape{2, 24, 4})), tape.constant(Array::identity(5))), ShapeError);
    EXPECT_THROW(ForecasterConfig({4, 3, 8, 3}).validate(), ConfigError);
}

TEST(Forecaster, PersistenceRepeatsLastValue) {
    Rng rng(4);
    ParameterSet ps;
    ForecasterConfig cfg{10, 4, 3, 3};
    Forecaster f(6, cfg, ps, rng);
    f.make_persistence();
    const Array x = random_array({5, 10, 6}, rng, -3.0, 3.0);
    for (const Array& adj : {Array::identity(6), random_symmetric(6, rng)}) {
        Tape tape;
        const Array out = f.forward(tape.constant(x), normalize_adjacency(tape.constant(adj))).value();
        for (std::size_t b = 0; b < 5; ++b)
            for (std::size_t h = 0; h < 4; ++h)
                for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(out.at(b, h, i), x.at(b, 9, i), 1e-12);
    }
}

TEST(Forecaster, PersistenceRmseMatchesAnalyticValue) {
    const Array series = synthetic_series(8, 600, 5);
    ForecasterConfig fc;
    fc.window = 24;
    fc.horizon = 6;
    JointModel model(graphs::GraphSet{{{graphs::GraphKind::distance, Array::identity(8)}}}, small_fusion(), fc, 0);
    model.forecaster().make_persistence();
    const auto split = split_windows(600, fc.window, fc.horizon);
    const auto [pred, target] = model.predict_windows(series, split.test, 32);
    const Metrics m = evaluate(pred, target);

    double sq = 0.0;
    std::size_t count = 0;
    for (std::size_t s : split.test.starts)
        for (std::size_t h = 0; h < fc.horizon; ++h)
            for (std::size_t i = 0; i < 8; ++i) {
                const double e = series.at(s + fc.window - 1, i) - series.at(s + fc.window + h, i);
                sq += e * e;
                ++count;
            }
    EXPECT_NEAR(m.rmse, std::sqrt(sq / static_cast<double>(count)), 1e-9);
}

TEST(Forecaster, GradientReachesWeightTensor) {
    Rng rng(6);
    const Array series = random_array({80, 5}, rng, 0.0, 1.0);
    graphs::GraphSet set;
    for (auto kind : {graphs::GraphKind::distance, graphs::GraphKind::temporal})
        set.graphs.push_back({kind, random_symmetric(5, rng)});
    ForecasterConfig fc{12, 3, 4, 3};
    JointModel model(set, small_fusion(), fc, 1);
    const std::vector<std::size_t> starts{0, 7, 30, 51};
    const auto batch = make_batch(series, starts, fc.window, fc.horizon);
    ad::Parameter& t = model.fusion().weight_tensor();
    std::vector<ad::ProbeSite> sites;
    for (std::size_t i : {1u, 7u, 13u, 26u, 44u}) sites.push_back({&t, i});
    const auto report = ad::check_gradients(
        model.parameters(), [&](Tape& tape) { return model.loss(tape, batch); }, sites, 1e-5);
    EXPECT_LT(report.max_rel_error(), 1e-6);
    double largest = 0.0;
    for (double g : t.grad.storage()) largest = std::max(largest, std::fabs(g));
    EXPECT_GT(largest, 0.0);
}

TEST(L1Loss, Examples) {
    Tape tape;
    auto l1 = [&](std::vector<double> p, std::vector<double> t) {
        return l1_loss(tape.constant(Array::vector(p)), tape.constant(Array::vector(t))).value()[0];
    };
    EXPECT_EQ(l1({1.0, -2.0, 3.5}, {1.0, -2.0, 3.5}), 0.0);
    EXPECT_NEAR(l1({2.5, 3.5, 0.5}, {2.0, 3.0, 0.0}), 0.5, 1e-15);
    EXPECT_DOUBLE_EQ(l1({1.0, 2.0}, {0.0, 4.0}), 1.5);
    EXPECT_THROW(l1({1.0}, {1.0, 2.0}), ShapeError);
}

TEST(L1Loss, EqualsEvaluatedMae) {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const Array p = random_array({3, 4, 5}, rng, -5.0, 5.0);
        const Array t = random_array({3, 4, 5}, rng, -5.0, 5.0);
        Tape tape;
        EXPECT_NEAR(l1_loss(tape.constant(p), tape.constant(t)).value()[0], evaluate(p, t).mae, 1e-12);
    }
}

TEST(Evaluate, HandComputedExample) {
    const Metrics m = evaluate(Array::vector({3.0, -4.0}), Array::vector({0.0, 0.0}));
    EXPECT_NEAR(m.mae, 3.5, 1e-12);
    EXPECT_NEAR(m.rmse, 3.5355339059327378, 1e-12);
    const Array same = Array::vector({0.25, 1.5, -7.0});
    const Metrics z = evaluate(same, same);
    EXPECT_EQ(z.mae, 0.0);
    EXPECT_EQ(z.rmse, 0.0);
}

TEST(Evaluate, RmseNeverBelowMae) {
    Rng rng(8);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(50);
        const Metrics m = evaluate(random_array({n}, rng, -10.0, 10.0), Array(Shape{n}));
        EXPECT_GE(m.rmse, m.mae);
        EXPECT_GE(m.mae, 0.0);
    }
}

TEST(Evaluate, PerStepBreakdown) {
    Array pred(Shape{2, 3, 2});
    Array target(Shape{2, 3, 2});
    // step 2 carries all the error
    pred.at(0, 1, 0) = 2.0;
    pred.at(1, 1, 1) = -2.0;
    const Metrics m = evaluate(pred, target);
    ASSERT_EQ(m.per_step.size(), 3u);
    EXPECT_EQ(m.at_step(1).rmse, 0.0);
    EXPECT_DOUBLE_EQ(m.at_step(2).mae, 1.0);
    EXPECT_DOUBLE_EQ(m.at_step(2).rmse, std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(m.mae, 4.0 / 12.0);
    EXPECT_THROW(m.at_step(4), ConfigError);
    EXPECT_THROW(m.at_step(0), ConfigError);
}

TEST(Windows, CountsAndBoundaries) {
    const auto one = windows_in({0, 30}, 24, 6);
    EXPECT_EQ(one.size(), 1u);
    EXPECT_EQ(windows_in({10, 110}, 24, 6).size(), 100u - 24u - 6u + 1u);

    const auto split = split_windows(1000, 24, 12);
    auto indices = [&](const WindowSet& ws) {
        std::set<std::size_t> out;
        for (std::size_t s : ws.starts)
            for (std::size_t t = s; t < s + 36; ++t) out.insert(t);
        return out;
    };
    const auto train = indices(split.train);
    for (std::size_t t : indices(split.test)) EXPECT_EQ(train.count(t), 0u);
    for (std::size_t t : indices(split.val)) EXPECT_EQ(train.count(t), 0u);
    EXPECT_EQ(split.train.size(), 700u - 36u + 1u);
    EXPECT_EQ(split.test.segment.begin, 800u);
}

TEST(Windows, TooShortSeriesStatesMinimum) {
    try {
        split_windows(100, 24, 24);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("need at least 480"), std::string::npos) << e.what();
    }
    EXPECT_THROW(split_windows(1000, 24, 12, SplitRatios{0.5, 0.1, 0.1}), ConfigError);
}

TEST(Windows, BatchLayout) {
    Array series(Shape{20, 3});
    for (std::size_t t = 0; t < 20; ++t)
        for (std::size_t i = 0; i < 3; ++i) series.at(t, i) = 10.0 * static_cast<double>(t) + static_cast<double>(i);
    const std::vector<std::size_t> starts{2, 9};
    const auto b = make_batch(series, starts, 5, 3);
    EXPECT_EQ(b.inputs.shape(), (Shape{2, 5, 3}));
    EXPECT_EQ(b.inputs.at(1, 4, 2), 132.0);
    EXPECT_EQ(b.targets.at(0, 0, 1), 71.0);
    const std::vector<std::size_t> bad{15};
    EXPECT_THROW(make_batch(series, bad, 5, 3), ShapeError);
}

TEST(TrainConfig, DefaultsAndValidation) {
    const TrainConfig cfg;
    EXPECT_EQ(cfg.adam.lr, 1e-4);
    EXPECT_EQ(cfg.batch_size, 32u);
    EXPECT_EQ(cfg.epochs, 40u);
    TrainConfig bad;
    bad.epochs = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Train, LossDropsOnSyntheticData) {
    graphs::NodeTable table;
    const Array series = synthetic_series(8, 600, 0, &table);
    graphs::NodeTable train_part = table.with_series_prefix(split_segments(600, {}).train.end);
    const auto set = graphs::assemble_graph_set(train_part, {});
    ForecasterConfig fc{12, 3, 4, 3};
    JointModel model(set, small_fusion(), fc, 0);
    TrainConfig tc;
    tc.adam.lr = 1e-3;
    tc.epochs = 8;
    const Array before = model.fused_matrix();
    const auto result = train(model, series, tc);
    ASSERT_EQ(result.history.size(), 8u);
    EXPECT_LT(result.history.back().train_loss, 0.5 * result.initial_loss);
    EXPECT_GE(result.best_epoch, 1u);
    EXPECT_NE(result.fused, before);  // the weight tensor is trained
    EXPECT_EQ(result.test.per_step.size(), 3u);
}

TEST(Train, SameSeedSameHistory) {
    const Array series = synthetic_series(5, 300, 3);
    graphs::GraphSet set;
    Rng rng(9);
    set.graphs.push_back({graphs::GraphKind::distance, random_symmetric(5, rng)});
    ForecasterConfig fc{8, 2, 3, 3};
    TrainConfig tc;
    tc.epochs = 3;
    tc.adam.lr = 1e-3;
    std::vector<EpochRecord> h[2];
    Array fused[2];
    for (int run = 0; run < 2; ++run) {
        JointModel model(set, small_fusion(), fc, 4);
        const auto r = train(model, series, tc);
        h[run] = r.history;
        fused[run] = r.fused;
    }
    for (std::size_t e = 0; e < 3; ++e) {
        EXPECT_EQ(h[0][e].train_loss, h[1][e].train_loss);
        EXPECT_EQ(h[0][e].val_mae, h[1][e].val_mae);
    }
    EXPECT_EQ(fused[0], fused[1]);
}

TEST(Train, NonFiniteLossAborts) {
    Array series(Shape{300, 4}, 0.5);
    series.at(100, 2) = std::numeric_limits<double>::quiet_NaN();
    graphs::GraphSet set{{{graphs::GraphKind::distance, Array(Shape{4, 4})}}};
    JointModel model(set, small_fusion(), ForecasterConfig{8, 2, 3, 3}, 0);
    TrainConfig tc;
    tc.epochs = 1;
    try {
        train(model, series, tc);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
    }
}
