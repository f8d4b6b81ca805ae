#pragma once

#include <string>

#include "mgfusion/autodiff/ops.hpp"

namespace mgfusion::ad {

/// Affine map over the last axis: x[..., in] -> x[..., out].
struct DenseLayer {
    Parameter* weight = nullptr;  // [in, out]
    Parameter* bias = nullptr;    // [out]

    std::size_t in_features() const { return weight->value.dim(0); }
    std::size_t out_features() const { return weight->value.dim(1); }

    static DenseLayer create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
                             Rng& rng, bool zero_bias = false) {
        DenseLayer layer;
        layer.weight = &params.add_uniform(name + ".weight", Shape{in, out}, in, rng);
        if (zero_bias) {
            layer.bias = &params.add(name + ".bias", Array(Shape{out}));
        } else {
            layer.bias = &params.add_uniform(name + ".bias", Shape{out}, in, rng);
        }
        return layer;
    }

    Var operator()(Tape& tape, Var x) const { return add(matmul(x, tape.param(*weight)), tape.param(*bias)); }
};

}  // namespace mgfusion::ad
