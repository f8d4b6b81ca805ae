#pragma once

#include <string>

#include "mgfusion/autodiff/ops.hpp"

namespace mgfusion::ad {

/// Valid 1-D convolution along axis 1 of x [B, T, N, Cin] with
/// w [k, Cin, Cout] and bias [Cout] -> [B, T - k + 1, N, Cout].
inline Var temporal_conv(Var x, Var w, Var bias) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.size() != 4 || ws.size() != 3 || ws[1] != xs[3] || bias.shape() != Shape{ws[2]} || ws[0] > xs[1]) {
        throw ShapeError("temporal_conv shapes disagree: x " + shape_str(xs) + ", w " + shape_str(ws) + ", bias " +
                         shape_str(bias.shape()));
    }
    const std::size_t b = xs[0], t = xs[1], n = xs[2], cin = xs[3];
    const std::size_t k = ws[0], cout = ws[2];
    const std::size_t steps = t - k + 1;
    const std::size_t rows = steps * n;  // rows of one shifted [T', N] block
    Array out(Shape{b, steps, n, cout});
    {
        const double* bv = bias.value().values().data();
        double* o = out.values().data();
        for (std::size_t r = 0; r < b * rows; ++r)
            for (std::size_t c = 0; c < cout; ++c) o[r * cout + c] = bv[c];
    }
    const double* xv = x.value().values().data();
    const double* wv = w.value().values().data();
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t tap = 0; tap < k; ++tap) {
            kernels::gemm_nn(rows, cin, cout, xv + (bi * t + tap) * n * cin, wv + tap * cin * cout,
                             out.values().data() + bi * rows * cout);
        }
    const std::size_t idx = x.id(), idw = w.id(), idb = bias.id();
    return x.tape().record(std::move(out), {x, w, bias}, [=](Tape& tp, std::size_t self) {
        const auto g = tp.grad_buffer(self);
        const auto gx = tp.grad_buffer(idx);
        const auto gw = tp.grad_buffer(idw);
        const auto gb = tp.grad_buffer(idb);
        const double* xs_ = tp.value(idx).values().data();
        const double* ws_ = tp.value(idw).values().data();
        for (std::size_t bi = 0; bi < b; ++bi) {
            const double* gblk = g.data() + bi * rows * cout;
            for (std::size_t tap = 0; tap < k; ++tap) {
                const std::size_t xoff = (bi * t + tap) * n * cin;
                if (!gx.empty()) kernels::gemm_nt(rows, cout, cin, gblk, ws_ + tap * cin * cout, gx.data() + xoff);
                if (!gw.empty()) kernels::gemm_tn(cin, rows, cout, xs_ + xoff, gblk, gw.data() + tap * cin * cout);
            }
        }
        if (!gb.empty()) {
            for (std::size_t r = 0; r < b * rows; ++r)
                for (std::size_t c = 0; c < cout; ++c) gb[c] += g[r * cout + c];
        }
    });
}

/// Mixes the node axis of h [B, T, N, C] with a [N, N]: out[b, t] = a * h[b, t].
inline Var node_mix(Var a, Var h) {
    const Shape& hs = h.shape();
    if (hs.size() != 4 || a.shape() != Shape{hs[2], hs[2]}) {
        throw ShapeError("node_mix shapes disagree: a " + shape_str(a.shape()) + ", h " + shape_str(hs));
    }
    const std::size_t blocks = hs[0] * hs[1];
    const std::size_t n = hs[2], c = hs[3];
    Array out(hs);
    const double* av = a.value().values().data();
    const double* hv = h.value().values().data();
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        kernels::gemm_nn(n, n, c, av, hv + blk * n * c, out.values().data() + blk * n * c);
    }
    const std::size_t ida = a.id(), idh = h.id();
    return a.tape().record(std::move(out), {a, h}, [=](Tape& tp, std::size_t self) {
        const auto g = tp.grad_buffer(self);
        const auto ga = tp.grad_buffer(ida);
        const auto gh = tp.grad_buffer(idh);
        const double* av_ = tp.value(ida).values().data();
        const double* hv_ = tp.value(idh).values().data();
        for (std::size_t blk = 0; blk < blocks; ++blk) {
            const double* gblk = g.data() + blk * n * c;
            if (!ga.empty()) kernels::gemm_nt(n, c, n, gblk, hv_ + blk * n * c, ga.data());
            if (!gh.empty()) kernels::gemm_tn(n, n, c, av_, gblk, gh.data() + blk * n * c);
        }
    });
}

}  // namespace mgfusion::ad
