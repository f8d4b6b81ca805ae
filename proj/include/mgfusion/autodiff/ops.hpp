#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mgfusion/autodiff/tape.hpp"

namespace mgfusion::ad {

namespace kernels {

// Row-major accumulating products: C[MxN] += op(A) * op(B).
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline auto as_index(std::size_t v) { return static_cast<Eigen::Index>(v); }

inline void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    MutMap(c, as_index(m), as_index(n)).noalias() +=
        ConstMap(a, as_index(m), as_index(k)) * ConstMap(b, as_index(k), as_index(n));
}

// C[MxN] += A[MxK] * B[NxK]^T
inline void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    MutMap(c, as_index(m), as_index(n)).noalias() +=
        ConstMap(a, as_index(m), as_index(k)) * ConstMap(b, as_index(n), as_index(k)).transpose();
}

// C[MxN] += A[KxM]^T * B[KxN]
inline void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    MutMap(c, as_index(m), as_index(n)).noalias() +=
        ConstMap(a, as_index(k), as_index(m)).transpose() * ConstMap(b, as_index(k), as_index(n));
}

/// Maps flat output indices of a broadcast result back to one operand.
class BroadcastIndex {
public:
    BroadcastIndex(const Shape& in, const Shape& out) : in_size_(numel(in)) {
        if (in == out) {
            kind_ = Kind::same;
            return;
        }
        // Operand equal to the trailing dimensions of the output: plain modulo.
        if (in.size() <= out.size() && std::equal(in.begin(), in.end(), out.end() - static_cast<long>(in.size()))) {
            kind_ = Kind::modulo;
            return;
        }
        kind_ = Kind::general;
        const std::size_t r = out.size();
        std::vector<std::size_t> in_stride(r, 0);
        std::size_t stride = 1;
        for (std::size_t ax = r; ax-- > 0;) {
            const std::size_t off = r - ax;
            if (off <= in.size()) {
                const std::size_t d = in[in.size() - off];
                in_stride[ax] = d == 1 ? 0 : stride;
                stride *= d;
            }
        }
        const std::size_t total = numel(out);
        map_.resize(total);
        std::vector<std::size_t> idx(r, 0);
        std::size_t cur = 0;
        for (std::size_t flat = 0; flat < total; ++flat) {
            map_[flat] = cur;
            for (std::size_t ax = r; ax-- > 0;) {
                ++idx[ax];
                cur += in_stride[ax];
                if (idx[ax] < out[ax]) break;
                cur -= in_stride[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
    }

    std::size_t operator()(std::size_t flat) const {
        switch (kind_) {
            case Kind::same: return flat;
            case Kind::modulo: return flat % in_size_;
            default: return map_[flat];
        }
    }

    bool same() const noexcept { return kind_ == Kind::same; }
    bool modulo() const noexcept { return kind_ == Kind::modulo; }
    std::size_t in_size() const noexcept { return in_size_; }

private:
    enum class Kind { same, modulo, general };
    Kind kind_ = Kind::same;
    std::size_t in_size_;
    std::vector<std::size_t> map_;
};

/// Calls f(out, ia, ib) for every output element, walking contiguous runs
/// when one operand is full-size and the other repeats.
template <class F>
inline void for_each_broadcast(const BroadcastIndex& ia, const BroadcastIndex& ib, std::size_t n, F&& f) {
    if (ia.same() && ib.same()) {
        for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    } else if (ia.same() && ib.modulo()) {
        const std::size_t m = ib.in_size();
        for (std::size_t base = 0; base < n; base += m)
            for (std::size_t j = 0; j < m; ++j) f(base + j, base + j, j);
    } else if (ia.modulo() && ib.same()) {
        const std::size_t m = ia.in_size();
        for (std::size_t base = 0; base < n; base += m)
            for (std::size_t j = 0; j < m; ++j) f(base + j, j, base + j);
    } else {
        for (std::size_t i = 0; i < n; ++i) f(i, ia(i), ib(i));
    }
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t off = 1; off <= r; ++off) {
        const std::size_t da = off <= a.size() ? a[a.size() - off] : 1;
        const std::size_t db = off <= b.size() ? b[b.size() - off] : 1;
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcast-compatible");
        }
        out[r - off] = std::max(da, db);
    }
    return out;
}

inline std::size_t normalize_axis(long axis, std::size_t rank) {
    const long r = static_cast<long>(rank);
    const long ax = axis < 0 ? axis + r : axis;
    if (ax < 0 || ax >= r) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    }
    return static_cast<std::size_t>(ax);
}

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t len = 1;
    std::size_t inner = 1;
};

inline AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

}  // namespace kernels

enum class BinaryOp { add, sub, mul, hadamard };

/// Binary elementwise op with right-aligned broadcasting of size-1 axes.
inline Var elementwise(BinaryOp op, Var a, Var b) {
    const Shape out_shape = kernels::broadcast_shape(a.shape(), b.shape());
    const auto ia = std::make_shared<kernels::BroadcastIndex>(a.shape(), out_shape);
    const auto ib = std::make_shared<kernels::BroadcastIndex>(b.shape(), out_shape);
    const double* av = a.value().values().data();
    const double* bv = b.value().values().data();
    Array out(out_shape);
    double* o = out.values().data();
    const std::size_t n = out.size();
    switch (op) {
        case BinaryOp::add:
            kernels::for_each_broadcast(*ia, *ib, n, [&](std::size_t i, std::size_t x, std::size_t y) { o[i] = av[x] + bv[y]; });
            break;
        case BinaryOp::sub:
            kernels::for_each_broadcast(*ia, *ib, n, [&](std::size_t i, std::size_t x, std::size_t y) { o[i] = av[x] - bv[y]; });
            break;
        case BinaryOp::mul:
        case BinaryOp::hadamard:
            kernels::for_each_broadcast(*ia, *ib, n, [&](std::size_t i, std::size_t x, std::size_t y) { o[i] = av[x] * bv[y]; });
            break;
    }
    const std::size_t ida = a.id();
    const std::size_t idb = b.id();
    return a.tape().record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        const auto ga = t.grad_buffer(ida);
        const auto gb = t.grad_buffer(idb);
        const std::size_t count = g.size();
        const double* gp = g.data();
        if (op == BinaryOp::add || op == BinaryOp::sub) {
            if (!ga.empty()) {
                double* gap = ga.data();
                kernels::for_each_broadcast(*ia, *ib, count, [&](std::size_t i, std::size_t x, std::size_t) { gap[x] += gp[i]; });
            }
            if (!gb.empty()) {
                double* gbp = gb.data();
                const double sign = op == BinaryOp::add ? 1.0 : -1.0;
                kernels::for_each_broadcast(*ia, *ib, count, [&](std::size_t i, std::size_t, std::size_t y) { gbp[y] += sign * gp[i]; });
            }
            return;
        }
        const double* va = t.value(ida).values().data();
        const double* vb = t.value(idb).values().data();
        if (!ga.empty()) {
            double* gap = ga.data();
            kernels::for_each_broadcast(*ia, *ib, count,
                                        [&](std::size_t i, std::size_t x, std::size_t y) { gap[x] += gp[i] * vb[y]; });
        }
        if (!gb.empty()) {
            double* gbp = gb.data();
            kernels::for_each_broadcast(*ia, *ib, count,
                                        [&](std::size_t i, std::size_t x, std::size_t y) { gbp[y] += gp[i] * va[x]; });
        }
    });
}

inline Var add(Var a, Var b) { return elementwise(BinaryOp::add, a, b); }
inline Var sub(Var a, Var b) { return elementwise(BinaryOp::sub, a, b); }
inline Var mul(Var a, Var b) { return elementwise(BinaryOp::mul, a, b); }
inline Var hadamard(Var a, Var b) { return elementwise(BinaryOp::hadamard, a, b); }

/// out = scale * a + shift
inline Var affine(Var a, double scale, double shift) {
    Array out(a.shape());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * av[i] + shift;
    const std::size_t ida = a.id();
    return a.tape().record(std::move(out), {a}, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        const auto ga = t.grad_buffer(ida);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += scale * g[i];
    });
}

inline Var scale(Var a, double s) { return affine(a, s, 0.0); }
inline Var add_scalar(Var a, double c) { return affine(a, 1.0, c); }
inline Var one_minus(Var a) { return affine(a, -1.0, 1.0); }

namespace detail {

// Unary op whose derivative is expressed through input x and output y.
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
    Array out(a.shape());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    const std::size_t ida = a.id();
    return a.tape().record(std::move(out), {a}, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        const auto ga = t.grad_buffer(ida);
        const auto& x = t.value(ida);
        const auto& y = t.value(self);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
}

}  // namespace detail

enum class Activation { relu, sigmoid };

inline Var relu(Var a) {
    // Subgradient at 0 is 0.
    return detail::unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(Var a) {
    Array out(a.shape());
    const auto n = static_cast<Eigen::Index>(out.size());
    Eigen::Map<Eigen::ArrayXd>(out.values().data(), n) =
        Eigen::Map<const Eigen::ArrayXd>(a.value().values().data(), n).logistic();
    const std::size_t ida = a.id();
    return a.tape().record(std::move(out), {a}, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        const auto ga = t.grad_buffer(ida);
        const auto& y = t.value(self);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

inline Var activation(Activation kind, Var a) { return kind == Activation::relu ? relu(a) : sigmoid(a); }

inline Var abs(Var a) {
    return detail::unary(
        a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var exp(Var a) {
    return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

/// x^p for positive x (used for degree normalisation).
inline Var power(Var a, double p) {
    return detail::unary(
        a, [p](double x) { return std::pow(x, p); }, [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

/// [..., m, k] x [k, n] -> [..., m, n]
inline Var matmul(Var a, Var b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() != 2 || sa.back() != sb[0]) {
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(sa) + " x " + shape_str(sb));
    }
    const std::size_t k = sb[0];
    const std::size_t n = sb[1];
    const std::size_t m = a.size() / k;
    Shape out_shape = sa;
    out_shape.back() = n;
    Array out(out_shape);
    kernels::gemm_nn(m, k, n, a.value().values().data(), b.value().values().data(), out.values().data());
    const std::size_t ida = a.id();
    const std::size_t idb = b.id();
    return a.tape().record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        const auto ga = t.grad_buffer(ida);
        const auto gb = t.grad_buffer(idb);
        if (!ga.empty()) kernels::gemm_nt(m, n, k, g.data(), t.value(idb).values().data(), ga.data());
        if (!gb.empty()) kernels::gemm_tn(k, m, n, t.value(ida).values().data(), g.data(), gb.data());
    });
}

/// Batched product: [B, m, k] x [B, k, n] -> [B, m, n]
inline Var bmm(Var a, Var b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1]) {
        throw ShapeError("bmm shapes disagree: " + shape_str(sa) + " x " + shape_str(sb));
    }
    const std::size_t batch = sa[0];
    const std::size_t m = sa[1];
    const std::size_t k = sa[2];
    const std::size_t n = sb[2];
    Array out(Shape{batch, m, n});
    for (std::size_t bi = 0; bi < batch; ++bi) {
        kernels::gemm_nn(m, k, n, a.value().values().data() + bi * m * k, b.value().values().data() + bi * k * n,
                         out.values().data() + bi * m * n);
    }
    const std::size_t ida = a.id();
    const std::size_t idb = b.id();
    return a.tape().record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        const auto ga = t.grad_buffer(ida);
        const auto gb = t.grad_buffer(idb);
        const double* av = t.value(ida).values().data();
        const double* bv = t.value(idb).values().data();
        for (std::size_t bi = 0; bi < batch; ++bi) {
            const double* gp = g.data() + bi * m * n;
            if (!ga.empty()) kernels::gemm_nt(m, n, k, gp, bv + bi * k * n, ga.data() + bi * m * k);
            if (!gb.empty()) kernels::gemm_tn(k, m, n, av + bi * m * k, gp, gb.data() + bi * k * n);
        }
    });
}

inline Var reshape(Var a, Shape shape) {
    Array out = a.value().reshaped(std::move(shape));
    const std::size_t ida = a.id();
    return a.tape().record(std::move(out), {a}, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        const auto ga = t.grad_buffer(ida);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

/// Axis permutation: out axis i is input axis perm[i].
inline Var permute(Var a, std::vector<std::size_t> perm) {
    const Shape& s = a.shape();
    const std::size_t r = s.size();
    if (perm.size() != r) throw ShapeError("permutation rank mismatch for " + shape_str(s));
    std::vector<bool> seen(r, false);
    for (std::size_t p : perm) {
        if (p >= r || seen[p]) throw ShapeError("invalid permutation for " + shape_str(s));
        seen[p] = true;
    }
    std::vector<std::size_t> in_stride(r, 1);
    for (std::size_t ax = r - 1; ax-- > 0;) in_stride[ax] = in_stride[ax + 1] * s[ax + 1];
    Shape out_shape(r);
    std::vector<std::size_t> src_stride(r);
    for (std::size_t i = 0; i < r; ++i) {
        out_shape[i] = s[perm[i]];
        src_stride[i] = in_stride[perm[i]];
    }
    // Flat source index for every output position.
    auto map = std::make_shared<std::vector<std::size_t>>(a.size());
    {
        std::vector<std::size_t> idx(r, 0);
        std::size_t cur = 0;
        for (std::size_t flat = 0; flat < map->size(); ++flat) {
            (*map)[flat] = cur;
            for (std::size_t ax = r; ax-- > 0;) {
                ++idx[ax];
                cur += src_stride[ax];
                if (idx[ax] < out_shape[ax]) break;
                cur -= src_stride[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
    }
    Array out(out_shape);
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[(*map)[i]];
    const std::size_t ida = a.id();
    return a.tape().record(std::move(out), {a}, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        const auto ga = t.grad_buffer(ida);
        for (std::size_t i = 0; i < g.size(); ++i) ga[(*map)[i]] += g[i];
    });
}

/// Swaps the last two axes.
inline Var transpose(Var a) {
    const std::size_t r = a.shape().size();
    if (r < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(a.shape()));
    std::vector<std::size_t> perm(r);
    for (std::size_t i = 0; i < r; ++i) perm[i] = i;
    std::swap(perm[r - 1], perm[r - 2]);
    return permute(a, std::move(perm));
}

/// Sum along one axis; the axis is removed from the shape.
inline Var reduce_sum(Var a, long axis) {
    const std::size_t ax = kernels::normalize_axis(axis, a.shape().size());
    const auto sp = kernels::split_at(a.shape(), ax);
    Shape out_shape = a.shape();
    out_shape.erase(out_shape.begin() + static_cast<long>(ax));
    Array out(out_shape);
    const auto& av = a.value();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t l = 0; l < sp.len; ++l)
            for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += av[(o * sp.len + l) * sp.inner + i];
    const std::size_t ida = a.id();
    return a.tape().record(std::move(out), {a}, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        const auto ga = t.grad_buffer(ida);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t l = 0; l < sp.len; ++l)
                for (std::size_t i = 0; i < sp.inner; ++i) ga[(o * sp.len + l) * sp.inner + i] += g[o * sp.inner + i];
    });
}

inline Var sum_all(Var a) {
    double s = 0.0;
    for (double x : a.value().values()) s += x;
    const std::size_t ida = a.id();
    return a.tape().record(Array::scalar(s), {a}, [=](Tape& t, std::size_t self) {
        const double g = t.grad_buffer(self)[0];
        for (double& x : t.grad_buffer(ida)) x += g;
    });
}

inline Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.size())); }

/// Max-stabilised softmax along `axis`.
inline Var softmax(Var a, long axis) {
    const std::size_t ax = kernels::normalize_axis(axis, a.shape().size());
    const auto sp = kernels::split_at(a.shape(), ax);
    Array out(a.shape());
    const auto& av = a.value();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.len * sp.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, av[base + l * sp.inner]);
            double total = 0.0;
            for (std::size_t l = 0; l < sp.len; ++l) {
                const double e = std::exp(av[base + l * sp.inner] - mx);
                out[base + l * sp.inner] = e;
                total += e;
            }
            for (std::size_t l = 0; l < sp.len; ++l) out[base + l * sp.inner] /= total;
        }
    }
    const std::size_t ida = a.id();
    return a.tape().record(std::move(out), {a}, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        const auto ga = t.grad_buffer(ida);
        const auto& y = t.value(self);
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                const std::size_t base = o * sp.len * sp.inner + i;
                double dot = 0.0;
                for (std::size_t l = 0; l < sp.len; ++l) dot += y[base + l * sp.inner] * g[base + l * sp.inner];
                for (std::size_t l = 0; l < sp.len; ++l) {
                    const std::size_t at = base + l * sp.inner;
                    ga[at] += y[at] * (g[at] - dot);
                }
            }
        }
    });
}

inline Var concat(const std::vector<Var>& parts, long axis) {
    if (parts.empty()) throw ShapeError("concat of zero arrays");
    const Shape& first = parts.front().shape();
    const std::size_t ax = kernels::normalize_axis(axis, first.size());
    std::vector<std::size_t> lens;
    std::size_t total_len = 0;
    for (const Var& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == ax || s[i] == first[i];
        if (!ok) {
            throw ShapeError("concat along axis " + std::to_string(ax) + ": " + shape_str(first) +
                             " incompatible with " + shape_str(s));
        }
        lens.push_back(s[ax]);
        total_len += s[ax];
    }
    Shape out_shape = first;
    out_shape[ax] = total_len;
    const auto sp = kernels::split_at(out_shape, ax);
    Array out(out_shape);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        offsets.push_back(off);
        const auto& pv = parts[p].value();
        const std::size_t chunk = lens[p] * sp.inner;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            std::copy_n(pv.values().begin() + static_cast<long>(o * chunk), chunk,
                        out.values().begin() + static_cast<long>(o * total_len * sp.inner + off * sp.inner));
        }
        off += lens[p];
    }
    std::vector<std::size_t> ids;
    for (const Var& p : parts) ids.push_back(p.id());
    return parts.front().tape().record(std::move(out), parts, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        for (std::size_t p = 0; p < ids.size(); ++p) {
            const auto gp = t.grad_buffer(ids[p]);
            if (gp.empty()) continue;
            const std::size_t chunk = lens[p] * sp.inner;
            for (std::size_t o = 0; o < sp.outer; ++o) {
                const double* src = g.data() + o * total_len * sp.inner + offsets[p] * sp.inner;
                double* dst = gp.data() + o * chunk;
                for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
            }
        }
    });
}

/// Contiguous range [start, start+len) along `axis`.
inline Var slice(Var a, long axis, std::size_t start, std::size_t len) {
    const std::size_t ax = kernels::normalize_axis(axis, a.shape().size());
    const auto sp = kernels::split_at(a.shape(), ax);
    if (len == 0 || start + len > sp.len) {
        throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of range for " + shape_str(a.shape()));
    }
    Shape out_shape = a.shape();
    out_shape[ax] = len;
    Array out(out_shape);
    const auto& av = a.value();
    const std::size_t chunk = len * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
        std::copy_n(av.values().begin() + static_cast<long>((o * sp.len + start) * sp.inner), chunk,
                    out.values().begin() + static_cast<long>(o * chunk));
    }
    const std::size_t ida = a.id();
    return a.tape().record(std::move(out), {a}, [=](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self);
        const auto ga = t.grad_buffer(ida);
        for (std::size_t o = 0; o < sp.outer; ++o) {
            const double* src = g.data() + o * chunk;
            double* dst = ga.data() + (o * sp.len + start) * sp.inner;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
    });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace mgfusion::ad
