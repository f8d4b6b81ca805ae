#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "mgfusion/autodiff/array.hpp"
#include "mgfusion/autodiff/parameter.hpp"

namespace mgfusion::ad {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    const Array& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }
    bool requires_grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Define-by-run record of array operations. A fresh tape is built for every
/// forward pass; backward() runs once, after which the tape must be reset.
class Tape {
public:
    /// Propagates the output adjoint of node `self` into its inputs.
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Array value) { return push(std::move(value), false, nullptr, {}); }

    /// Leaf that receives a gradient but is not bound to a Parameter.
    Var variable(Array value) { return push(std::move(value), true, nullptr, {}); }

    /// Leaf bound to a Parameter; backward() accumulates into param.grad.
    Var param(Parameter& p) { return push(p.value, true, &p, {}); }

    /// Records an operation output; requires_grad is inherited from inputs.
    Var record(Array value, std::span<const Var> inputs, Backward fn) {
        bool needs = false;
        for (const Var& v : inputs) {
            assert(&v.tape() == this);
            needs = needs || nodes_[v.id()].requires_grad;
        }
        return push(std::move(value), needs, nullptr, needs ? std::move(fn) : Backward{});
    }

    Var record(Array value, std::initializer_list<Var> inputs, Backward fn) {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
    }

    const Array& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient buffer of a node during backward(); empty for constants.
    std::span<double> grad_buffer(std::size_t id) {
        Node& n = nodes_[id];
        if (!n.requires_grad) return {};
        if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
        return n.grad;
    }

    /// dLoss/dNode after backward(); zeros when the node did not influence the loss.
    std::vector<double> grad(Var v) const {
        const Node& n = nodes_[v.id()];
        if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
        return n.grad;
    }

    Array grad_array(Var v) const { return Array(v.shape(), grad(v)); }

    void backward(Var loss) {
        if (loss.size() != 1) {
            throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
        }
        if (backward_done_) throw Error("tape already consumed by backward(); reset before reuse");
        backward_done_ = true;
        if (!nodes_[loss.id()].requires_grad) return;
        grad_buffer(loss.id())[0] = 1.0;
        for (std::size_t id = loss.id() + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (n.grad.empty()) continue;
            if (n.backward) n.backward(*this, id);
            if (n.param != nullptr) {
                auto& g = nodes_[id].grad;
                auto& pg = nodes_[id].param->grad.storage();
                for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
            }
        }
    }

    void reset() {
        nodes_.clear();
        backward_done_ = false;
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Array value;
        std::vector<double> grad;
        Backward backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };

    Var push(Array value, bool requires_grad, Parameter* param, Backward fn) {
        nodes_.push_back(Node{std::move(value), {}, std::move(fn), param, requires_grad});
        return Var(this, nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

inline const Array& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace mgfusion::ad
