#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mgfusion/autodiff/optim.hpp"
#include "mgfusion/forecast/forecaster.hpp"
#include "mgfusion/forecast/metrics.hpp"
#include "mgfusion/forecast/windows.hpp"
#include "mgfusion/fusion/dmgab.hpp"

namespace mgfusion::forecast {

struct TrainConfig {
    ad::AdamConfig adam{};  // lr 1e-4
    std::size_t batch_size = 32;
    std::size_t epochs = 40;
    std::uint64_t seed = 0;
    SplitRatios split{};

    void validate() const {
        if (batch_size == 0 || epochs == 0) throw ConfigError("batch size and epochs must be positive");
        if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
        split.validate();
    }
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_mae = 0.0;
    double val_rmse = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    double initial_loss = 0.0;  // loss of the first batch before any update
    std::size_t best_epoch = 0;
    Metrics test;
    Array fused;  // W* at the best checkpoint
};

/// Fusion block and forecaster trained jointly on one parameter set.
class JointModel {
public:
    JointModel(const graphs::GraphSet& set, const fusion::FusionConfig& fusion_cfg,
               const ForecasterConfig& forecaster_cfg, std::uint64_t seed)
        : init_rng_(seed),
          fusion_(set, fusion_cfg, params_, init_rng_),
          forecaster_(set.nodes(), forecaster_cfg, params_, init_rng_) {}

    JointModel(const JointModel&) = delete;
    JointModel& operator=(const JointModel&) = delete;

    ParameterSet& parameters() { return params_; }
    fusion::FusionModel& fusion() { return fusion_; }
    const fusion::FusionModel& fusion() const { return fusion_; }
    Forecaster& forecaster() { return forecaster_; }
    const Forecaster& forecaster() const { return forecaster_; }

    /// Predictions for a batch; records everything on `tape`.
    Var predict(Tape& tape, const Array& inputs, fusion::FusionTrace* trace = nullptr) const {
        Var a_hat = normalize_adjacency(fusion_.fused_matrix(tape, trace));
        return forecaster_.forward(tape.constant(inputs), a_hat);
    }

    Var loss(Tape& tape, const WindowBatch& batch, fusion::FusionTrace* trace = nullptr) const {
        return l1_loss(predict(tape, batch.inputs, trace), tape.constant(batch.targets));
    }

    Array fused_matrix() const {
        Tape tape;
        return fusion_.fused_matrix(tape).value();
    }

    /// Runs the model over every window of a set; predictions and targets
    /// are stacked as [windows, horizon, N].
    std::pair<Array, Array> predict_windows(const Array& series, const WindowSet& windows,
                                            std::size_t batch_size) const {
        const std::size_t h = forecaster_.config().horizon;
        const std::size_t n = forecaster_.nodes();
        Array pred(Shape{windows.size(), h, n});
        Array target(Shape{windows.size(), h, n});
        Tape fused_tape;
        const Array a_hat = normalize_adjacency(fusion_.fused_matrix(fused_tape)).value();
        for (std::size_t first = 0; first < windows.size(); first += batch_size) {
            const std::size_t count = std::min(batch_size, windows.size() - first);
            const auto batch = make_batch(series, std::span(windows.starts).subspan(first, count),
                                          forecaster_.config().window, h);
            Tape tape;
            const Var out = forecaster_.forward(tape.constant(batch.inputs), tape.constant(a_hat));
            std::copy(out.value().values().begin(), out.value().values().end(),
                      pred.values().begin() + static_cast<long>(first * h * n));
            std::copy(batch.targets.values().begin(), batch.targets.values().end(),
                      target.values().begin() + static_cast<long>(first * h * n));
        }
        return {std::move(pred), std::move(target)};
    }

private:
    ParameterSet params_;
    Rng init_rng_;
    fusion::FusionModel fusion_;
    Forecaster forecaster_;
};

/// Per-batch loop: fused matrix -> normalisation -> forecast -> L1 -> backward
/// -> Adam on every parameter, the weight tensor included. Keeps the
/// checkpoint with the lowest validation MAE and scores it on the test split.
inline TrainResult train(JointModel& model, const Array& series, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    const auto& fc = model.forecaster().config();
    const WindowSplit split = split_windows(series.dim(0), fc.window, fc.horizon, cfg.split);
    Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    auto& params = model.parameters();

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Array> best = params.snapshot();
    std::vector<std::size_t> order = split.train.starts;
    bool first_batch = true;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - first);
            const auto batch = make_batch(series, std::span(order).subspan(first, count), fc.window, fc.horizon);
            params.zero_grad();
            Tape tape;
            Var loss = model.loss(tape, batch);
            const double value = loss.value()[0];
            if (!std::isfinite(value)) {
                throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batches + 1));
            }
            if (first_batch) {
                result.initial_loss = value;
                first_batch = false;
            }
            tape.backward(loss);
            ad::adam_step(params, cfg.adam);
            loss_sum += value;
            ++batches;
        }
        const auto [vp, vt] = model.predict_windows(series, split.val, cfg.batch_size);
        const Metrics vm = evaluate(vp, vt);
        if (!std::isfinite(vm.mae)) {
            throw NumericalError("non-finite validation error after epoch " + std::to_string(epoch));
        }
        EpochRecord rec{epoch, loss_sum / static_cast<double>(batches), vm.mae, vm.rmse};
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (vm.mae < best_val) {
            best_val = vm.mae;
            result.best_epoch = epoch;
            best = params.snapshot();
        }
    }
    params.restore(best);
    const auto [tp, tt] = model.predict_windows(series, split.test, cfg.batch_size);
    result.test = evaluate(tp, tt);
    result.fused = model.fused_matrix();
    return result;
}

}  // namespace mgfusion::forecast
