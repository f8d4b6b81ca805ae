#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "mgfusion/autodiff/array.hpp"
#include "mgfusion/random.hpp"

namespace mgfusion::ad {

/// Trainable array with its accumulated gradient and Adam moment buffers.
struct Parameter {
    Parameter(std::string n, Array v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), first_moment(value.size(), 0.0),
          second_moment(value.size(), 0.0) {}

    std::string name;
    Array value;
    Array grad;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;

    void zero_grad() { std::fill(grad.storage().begin(), grad.storage().end(), 0.0); }
};

/// Owns parameters at stable addresses, in registration order.
class ParameterSet {
public:
    ParameterSet() = default;
    ParameterSet(const ParameterSet&) = delete;
    ParameterSet& operator=(const ParameterSet&) = delete;
    ParameterSet(ParameterSet&&) = default;
    ParameterSet& operator=(ParameterSet&&) = default;

    Parameter& add(std::string name, Array value) {
        for (const auto& p : params_) {
            if (p.name == name) throw ConfigError("duplicate parameter name '" + name + "'");
        }
        return params_.emplace_back(std::move(name), std::move(value));
    }

    /// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialisation.
    Parameter& add_uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
        Array a(std::move(shape));
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        for (double& x : a.storage()) x = rng.uniform(-bound, bound);
        return add(std::move(name), std::move(a));
    }

    Parameter* find(const std::string& name) {
        for (auto& p : params_) {
            if (p.name == name) return &p;
        }
        return nullptr;
    }

    Parameter& get(const std::string& name) {
        if (auto* p = find(name)) return *p;
        throw ConfigError("unknown parameter '" + name + "'");
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    std::vector<Array> snapshot() const {
        std::vector<Array> out;
        out.reserve(params_.size());
        for (const auto& p : params_) out.push_back(p.value);
        return out;
    }

    void restore(const std::vector<Array>& values) {
        if (values.size() != params_.size()) throw ConfigError("snapshot does not match parameter set");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i].shape() != params_[i].value.shape()) {
                throw ShapeError("snapshot shape mismatch for '" + params_[i].name + "'");
            }
            params_[i].value = values[i];
        }
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    std::size_t size() const { return params_.size(); }

private:
    std::deque<Parameter> params_;
};

}  // namespace mgfusion::ad
