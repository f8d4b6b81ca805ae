#pragma once

#include <string>

#include "mgfusion/autodiff/conv.hpp"
#include "mgfusion/autodiff/dense.hpp"
#include "mgfusion/autodiff/ops.hpp"

namespace mgfusion::forecast {

using ad::Array;
using ad::Parameter;
using ad::ParameterSet;
using ad::Shape;
using ad::Tape;
using ad::Var;

/// A_hat = D^-1/2 (|W| + I) D^-1/2 with D the row sums of |W| + I.
inline Var normalize_adjacency(Var w) {
    const Shape& s = w.shape();
    if (s.size() != 2 || s[0] != s[1]) throw ShapeError("adjacency must be square, got " + ad::shape_str(s));
    const std::size_t n = s[0];
    Tape& tape = w.tape();
    Var a = ad::add(ad::abs(w), tape.constant(Array::identity(n)));
    Var dinv = ad::power(ad::reduce_sum(a, 1), -0.5);
    return ad::mul(ad::mul(a, ad::reshape(dinv, Shape{n, 1})), ad::reshape(dinv, Shape{1, n}));
}

struct ForecasterConfig {
    std::size_t window = 24;   // observation steps
    std::size_t horizon = 24;  // predicted steps
    std::size_t channels = 8;
    std::size_t kernel = 3;  // temporal kernel width

    std::size_t hidden_steps() const { return window - 2 * (kernel - 1); }

    void validate() const {
        if (channels < 1 || kernel < 1 || horizon < 1) throw ConfigError("forecaster sizes must be positive");
        if (window < 2 * (kernel - 1) + 1) {
            throw ConfigError("window " + std::to_string(window) + " too short for two temporal kernels of width " +
                              std::to_string(kernel));
        }
    }
};

/// Temporal gated conv -> two graph propagations -> temporal conv -> readout.
class Forecaster {
public:
    Forecaster(std::size_t nodes, const ForecasterConfig& cfg, ParameterSet& params, Rng& rng,
               const std::string& prefix = "forecaster")
        : cfg_(cfg), nodes_(nodes) {
        cfg_.validate();
        const std::size_t c = cfg_.channels;
        const std::size_t k = cfg_.kernel;
        tconv_value_ = &params.add_uniform(prefix + ".tconv_in.value", Shape{k, 1, c}, k, rng);
        tconv_value_bias_ = &params.add_uniform(prefix + ".tconv_in.value_bias", Shape{c}, k, rng);
        tconv_gate_ = &params.add_uniform(prefix + ".tconv_in.gate", Shape{k, 1, c}, k, rng);
        tconv_gate_bias_ = &params.add_uniform(prefix + ".tconv_in.gate_bias", Shape{c}, k, rng);
        self1_ = &params.add_uniform(prefix + ".gconv1.self", Shape{c, c}, c, rng);
        theta1_ = &params.add_uniform(prefix + ".gconv1.neighbor", Shape{c, c}, c, rng);
        self2_ = &params.add_uniform(prefix + ".gconv2.self", Shape{c, c}, c, rng);
        theta2_ = &params.add_uniform(prefix + ".gconv2.neighbor", Shape{c, c}, c, rng);
        tconv_out_ = &params.add_uniform(prefix + ".tconv_out.weight", Shape{k, c, c}, k * c, rng);
        tconv_out_bias_ = &params.add_uniform(prefix + ".tconv_out.bias", Shape{c}, k * c, rng);
        readout_ = ad::DenseLayer::create(params, prefix + ".readout", cfg_.hidden_steps() * c, cfg_.horizon, rng);
    }

    Forecaster(const Forecaster&) = delete;
    Forecaster& operator=(const Forecaster&) = delete;

    const ForecasterConfig& config() const noexcept { return cfg_; }
    std::size_t nodes() const noexcept { return nodes_; }

    /// x: [B, window, N], a_hat: [N, N] -> predictions [B, horizon, N].
    Var forward(Var x, Var a_hat) const {
        const Shape& xs = x.shape();
        if (xs.size() != 3 || xs[1] != cfg_.window || xs[2] != nodes_) {
            throw ShapeError("forecaster input must be [B, " + std::to_string(cfg_.window) + ", " +
                             std::to_string(nodes_) + "], got " + ad::shape_str(xs));
        }
        if (a_hat.shape() != Shape{nodes_, nodes_}) {
            throw ShapeError("adjacency must be " + std::to_string(nodes_) + "x" + std::to_string(nodes_) + ", got " +
                             ad::shape_str(a_hat.shape()));
        }
        Tape& tape = x.tape();
        const std::size_t b = xs[0];
        Var h = ad::reshape(x, Shape{b, cfg_.window, nodes_, 1});
        Var value = temporal_conv(tape, h, *tconv_value_, *tconv_value_bias_);
        Var gate = ad::sigmoid(temporal_conv(tape, h, *tconv_gate_, *tconv_gate_bias_));
        h = ad::hadamard(value, gate);
        h = graph_conv(tape, h, a_hat, *self1_, *theta1_);
        h = graph_conv(tape, h, a_hat, *self2_, *theta2_);
        h = temporal_conv(tape, h, *tconv_out_, *tconv_out_bias_);
        // [B, T', N, C] -> [B, N, T' * C] -> [B, N, horizon] -> [B, horizon, N]
        const std::size_t steps = h.shape()[1];
        h = ad::reshape(ad::permute(h, {0, 2, 1, 3}), Shape{b, nodes_, steps * cfg_.channels});
        return ad::permute(readout_(tape, h), {0, 2, 1});
    }

    /// Hand-set weights that repeat the last observed value over the horizon
    /// whatever A_hat is. Needs channels >= 2 (one channel per sign).
    void make_persistence() {
        const std::size_t c = cfg_.channels;
        const std::size_t k = cfg_.kernel;
        if (c < 2) throw ConfigError("persistence needs at least 2 channels");
        auto zero = [](Parameter* p) { std::fill(p->value.storage().begin(), p->value.storage().end(), 0.0); };
        for (Parameter* p : {tconv_value_, tconv_value_bias_, tconv_gate_, tconv_gate_bias_, self1_, self2_, theta1_, theta2_,
                             tconv_out_, tconv_out_bias_, readout_.weight, readout_.bias}) {
            zero(p);
        }
        tconv_value_->value.at(k - 1, 0, 0) = 1.0;
        tconv_value_->value.at(k - 1, 0, 1) = -1.0;
        // sigmoid(40) rounds to exactly 1.0
        std::fill(tconv_gate_bias_->value.storage().begin(), tconv_gate_bias_->value.storage().end(), 40.0);
        for (std::size_t i = 0; i < c; ++i) {
            self1_->value.at(i, i) = 1.0;
            self2_->value.at(i, i) = 1.0;
            tconv_out_->value.at(k - 1, i, i) = 1.0;
        }
        // relu(x) - relu(-x) == x
        const std::size_t last = (cfg_.hidden_steps() - 1) * c;
        for (std::size_t h = 0; h < cfg_.horizon; ++h) {
            readout_.weight->value.at(last + 0, h) = 1.0;
            readout_.weight->value.at(last + 1, h) = -1.0;
        }
    }

private:
    // [B, T, N, Cin] -> [B, T - k + 1, N, Cout]
    static Var temporal_conv(Tape& tape, Var x, Parameter& weight, Parameter& bias) {
        return ad::temporal_conv(x, tape.param(weight), tape.param(bias));
    }

    // H <- ReLU(H Theta_self + A_hat H Theta_nb) over the node axis of [B, T, N, C].
    static Var graph_conv(Tape& tape, Var h, Var a_hat, Parameter& self, Parameter& neighbor) {
        Var own = ad::matmul(h, tape.param(self));
        return ad::relu(ad::add(own, ad::matmul(ad::node_mix(a_hat, h), tape.param(neighbor))));
    }

    ForecasterConfig cfg_;
    std::size_t nodes_;
    Parameter* tconv_value_ = nullptr;
    Parameter* tconv_value_bias_ = nullptr;
    Parameter* tconv_gate_ = nullptr;
    Parameter* tconv_gate_bias_ = nullptr;
    Parameter* self1_ = nullptr;
    Parameter* self2_ = nullptr;
    Parameter* theta1_ = nullptr;
    Parameter* theta2_ = nullptr;
    Parameter* tconv_out_ = nullptr;
    Parameter* tconv_out_bias_ = nullptr;
    ad::DenseLayer readout_;
};

}  // namespace mgfusion::forecast
