#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mgfusion/autodiff/dense.hpp"
#include "mgfusion/autodiff/ops.hpp"
#include "mgfusion/graphs/builders.hpp"

// Dynamic multi-graph fusion: a trainable |G| x N x N weight tensor is lifted
// to |G| x N x D hidden states, refined by stacked spatial/graph attention
// blocks with gated fusion, projected back, and summed over the graph axis.

namespace mgfusion::fusion {

using ad::Array;
using ad::DenseLayer;
using ad::Parameter;
using ad::ParameterSet;
using ad::Shape;
using ad::Tape;
using ad::Var;

enum class EmbeddingInit { random, spectral };
enum class BridgeInit { pseudo_inverse, random };

struct FusionConfig {
    std::size_t model_dim = 64;  // D
    std::size_t heads = 8;       // M
    std::size_t head_dim = 8;    // d
    std::size_t blocks = 1;      // L
    bool sgatt = true;
    bool exclude_self = false;  // drop v_i from its own spatial attention
    EmbeddingInit embedding_init = EmbeddingInit::random;
    BridgeInit bridge_init = BridgeInit::pseudo_inverse;

    void validate() const {
        if (model_dim == 0 || heads == 0 || head_dim == 0) throw ConfigError("D, M and d must be positive");
        if (heads * head_dim != model_dim) {
            throw ConfigError("heads x head_dim must equal model_dim (M=" + std::to_string(heads) +
                              ", d=" + std::to_string(head_dim) + ", D=" + std::to_string(model_dim) + ")");
        }
    }
};

/// Query/key/value projections of one attention kind; each output is ReLU(dense(.)).
struct AttentionParams {
    DenseLayer query;  // 2D -> M*d
    DenseLayer key;    // 2D -> M*d
    DenseLayer value;  // D -> M*d
};

struct GateParams {
    Parameter* w_spatial = nullptr;  // D x D
    Parameter* w_graph = nullptr;    // D x D
    Parameter* bias = nullptr;       // D
};

struct BlockParams {
    AttentionParams spatial;
    AttentionParams graph;
    GateParams gate;
};

/// Spatial embedding table plus the two-layer graph-code network.
struct MgseTable {
    Parameter* spatial = nullptr;  // N x D
    DenseLayer graph_hidden;       // |G| -> D
    DenseLayer graph_out;          // D -> D
    std::size_t graphs = 0;
};

/// Attention weights and gates captured during a forward pass.
struct FusionTrace {
    std::vector<Array> spatial_attention;  // per block: [G*M, N, N]
    std::vector<Array> graph_attention;    // per block: [N*M, G, G]
    std::vector<Array> gates;              // per block: [G, N, D]
};

/// Stacks the graph set into a |G| x N x N array, in set order.
inline Array stack_graphs(const graphs::GraphSet& set) {
    if (set.size() == 0) throw ConfigError("graph set is empty");
    const std::size_t g = set.size();
    const std::size_t n = set.nodes();
    Array t(Shape{g, n, n});
    for (std::size_t k = 0; k < g; ++k) {
        const auto& m = set[k].values;
        if (m.dim(0) != n || m.dim(1) != n) throw ShapeError("graph set matrices differ in size");
        std::copy(m.values().begin(), m.values().end(), t.values().begin() + static_cast<long>(k * n * n));
    }
    return t;
}

/// Registers the stacked graphs as the trainable weight tensor.
inline Parameter& init_weight_tensor(const graphs::GraphSet& set, ParameterSet& params,
                                     const std::string& name = "fusion.weight_tensor") {
    return params.add(name, stack_graphs(set));
}

/// Per-(graph, node) embedding E[g, i, :] = E^S[i] + E^MG[g].
inline Var build_mgse(Tape& tape, const MgseTable& table) {
    Var codes = tape.constant(Array::identity(table.graphs));
    Var hidden = ad::relu(table.graph_hidden(tape, codes));
    Var graph_emb = table.graph_out(tape, hidden);  // [G, D]
    const std::size_t d = graph_emb.shape()[1];
    Var es = tape.param(*table.spatial);  // [N, D]
    return ad::add(ad::reshape(es, Shape{1, es.shape()[0], d}), ad::reshape(graph_emb, Shape{table.graphs, 1, d}));
}

namespace detail {

// [B, S, M*d] -> [B*M, S, d]
inline Var split_heads(Var x, std::size_t heads, std::size_t head_dim) {
    const std::size_t b = x.shape()[0];
    const std::size_t s = x.shape()[1];
    Var r = ad::reshape(x, Shape{b, s, heads, head_dim});
    return ad::reshape(ad::permute(r, {0, 2, 1, 3}), Shape{b * heads, s, head_dim});
}

// [B*M, S, d] -> [B, S, M*d]
inline Var merge_heads(Var x, std::size_t batch, std::size_t heads) {
    const std::size_t s = x.shape()[1];
    const std::size_t d = x.shape()[2];
    Var r = ad::reshape(x, Shape{batch, heads, s, d});
    return ad::reshape(ad::permute(r, {0, 2, 1, 3}), Shape{batch, s, heads * d});
}

// Scaled dot-product attention over axis 1 of [B, S, .] inputs.
inline Var attend(Tape& tape, Var x_qk, Var x_v, const AttentionParams& p, std::size_t heads, std::size_t head_dim,
                  bool exclude_self, Array* weights_out) {
    const std::size_t batch = x_qk.shape()[0];
    const std::size_t seq = x_qk.shape()[1];
    Var q = split_heads(ad::relu(p.query(tape, x_qk)), heads, head_dim);
    Var k = split_heads(ad::relu(p.key(tape, x_qk)), heads, head_dim);
    Var v = split_heads(ad::relu(p.value(tape, x_v)), heads, head_dim);
    Var scores = ad::scale(ad::bmm(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(head_dim)));
    if (exclude_self && seq > 1) {
        Array mask(Shape{seq, seq});
        for (std::size_t i = 0; i < seq; ++i) mask.at(i, i) = -1e30;
        scores = ad::add(scores, tape.constant(std::move(mask)));
    }
    Var weights = ad::softmax(scores, 2);
    if (weights_out != nullptr) *weights_out = weights.value();
    return merge_heads(ad::bmm(weights, v), batch, heads);
}

}  // namespace detail

/// Attention among the nodes of each graph slice. H, E: [G, N, D].
/// `weights_out` receives [G*M, N, N] with rows indexed (graph, head, query node).
inline Var spatial_attention(Var h, Var e, const AttentionParams& params, const FusionConfig& cfg,
                             Array* weights_out = nullptr) {
    Tape& tape = h.tape();
    Var x = ad::concat({h, e}, 2);
    return detail::attend(tape, x, h, params, cfg.heads, cfg.head_dim, cfg.exclude_self, weights_out);
}

/// Attention across the graph slices of each node. H, E: [G, N, D].
/// `weights_out` receives [N*M, G, G] with rows indexed (node, head, source graph).
inline Var graph_attention(Var h, Var e, const AttentionParams& params, const FusionConfig& cfg,
                           Array* weights_out = nullptr) {
    Tape& tape = h.tape();
    Var x = ad::permute(ad::concat({h, e}, 2), {1, 0, 2});  // [N, G, 2D]
    Var hn = ad::permute(h, {1, 0, 2});                      // [N, G, D]
    Var out = detail::attend(tape, x, hn, params, cfg.heads, cfg.head_dim, false, weights_out);
    return ad::permute(out, {1, 0, 2});
}

/// z = sigmoid(HS Wz1 + HG Wz2 + bz);  H = z * HS + (1 - z) * HG
inline Var gated_fusion(Var hs, Var hg, const GateParams& gate, Array* gate_out = nullptr) {
    if (hs.shape() != hg.shape()) {
        throw ShapeError("gated fusion inputs differ: " + ad::shape_str(hs.shape()) + " vs " +
                         ad::shape_str(hg.shape()));
    }
    Tape& tape = hs.tape();
    Var pre = ad::add(ad::add(ad::matmul(hs, tape.param(*gate.w_spatial)), ad::matmul(hg, tape.param(*gate.w_graph))),
                      tape.param(*gate.bias));
    Var z = ad::sigmoid(pre);
    if (gate_out != nullptr) *gate_out = z.value();
    return ad::add(ad::hadamard(z, hs), ad::hadamard(ad::one_minus(z), hg));
}

/// W*[j][k] = sum over graphs of T(g, j, k).
inline Var fuse(Var tensor) {
    if (tensor.shape().size() != 3) throw ShapeError("fuse expects a [G, N, N] tensor");
    return ad::reduce_sum(tensor, 0);
}

/// Weight tensor, embeddings, attention blocks and the N <-> D bridge.
class FusionModel {
public:
    FusionModel(const graphs::GraphSet& set, const FusionConfig& cfg, ParameterSet& params, Rng& rng,
                const std::string& prefix = "fusion")
        : cfg_(cfg), graphs_(set.size()), nodes_(set.nodes()) {
        cfg_.validate();
        const std::size_t d = cfg_.model_dim;
        const std::size_t n = nodes_;
        tensor_ = &init_weight_tensor(set, params, prefix + ".weight_tensor");

        mgse_.graphs = graphs_;
        mgse_.spatial = &params.add_uniform(prefix + ".embedding.spatial", Shape{n, d}, d, rng);
        if (cfg_.embedding_init == EmbeddingInit::spectral) spectral_embedding(set, *mgse_.spatial);
        mgse_.graph_hidden = DenseLayer::create(params, prefix + ".embedding.graph_hidden", graphs_, d, rng);
        mgse_.graph_out = DenseLayer::create(params, prefix + ".embedding.graph_out", d, d, rng);

        bridge_in_ = DenseLayer::create(params, prefix + ".bridge.in", n, d, rng, true);
        bridge_out_ = DenseLayer::create(params, prefix + ".bridge.out", d, n, rng, true);
        if (cfg_.bridge_init == BridgeInit::pseudo_inverse && d >= n) {
            pseudo_inverse(bridge_in_.weight->value, bridge_out_.weight->value);
        }

        const std::size_t hd = cfg_.heads * cfg_.head_dim;
        for (std::size_t l = 0; l < cfg_.blocks; ++l) {
            const std::string b = prefix + ".block" + std::to_string(l);
            BlockParams bp;
            bp.spatial.query = DenseLayer::create(params, b + ".spatial.query", 2 * d, hd, rng);
            bp.spatial.key = DenseLayer::create(params, b + ".spatial.key", 2 * d, hd, rng);
            bp.spatial.value = DenseLayer::create(params, b + ".spatial.value", d, hd, rng);
            bp.graph.query = DenseLayer::create(params, b + ".graph.query", 2 * d, hd, rng);
            bp.graph.key = DenseLayer::create(params, b + ".graph.key", 2 * d, hd, rng);
            bp.graph.value = DenseLayer::create(params, b + ".graph.value", d, hd, rng);
            bp.gate.w_spatial = &params.add_uniform(b + ".gate.w_spatial", Shape{d, d}, d, rng);
            bp.gate.w_graph = &params.add_uniform(b + ".gate.w_graph", Shape{d, d}, d, rng);
            bp.gate.bias = &params.add_uniform(b + ".gate.bias", Shape{d}, d, rng);
            blocks_.push_back(bp);
        }
    }

    FusionModel(const FusionModel&) = delete;
    FusionModel& operator=(const FusionModel&) = delete;

    const FusionConfig& config() const noexcept { return cfg_; }
    FusionConfig& config() noexcept { return cfg_; }
    std::size_t graph_count() const noexcept { return graphs_; }
    std::size_t node_count() const noexcept { return nodes_; }

    Parameter& weight_tensor() { return *tensor_; }
    const MgseTable& mgse_table() const { return mgse_; }
    const DenseLayer& bridge_in() const { return bridge_in_; }
    const DenseLayer& bridge_out() const { return bridge_out_; }
    const std::vector<BlockParams>& blocks() const { return blocks_; }

    /// Enables or bypasses the attention blocks; parameters are untouched.
    void set_sgatt(bool enabled) { cfg_.sgatt = enabled; }

    /// One SG-ATT block with its residual connection.
    Var block_forward(Var h, Var e, std::size_t l, FusionTrace* trace = nullptr) const {
        Array* sa = nullptr;
        Array* ga = nullptr;
        Array* gz = nullptr;
        if (trace != nullptr) {
            sa = &trace->spatial_attention.emplace_back();
            ga = &trace->graph_attention.emplace_back();
            gz = &trace->gates.emplace_back();
        }
        Var hs = spatial_attention(h, e, blocks_[l].spatial, cfg_, sa);
        Var hg = graph_attention(h, e, blocks_[l].graph, cfg_, ga);
        Var fused = gated_fusion(hs, hg, blocks_[l].gate, gz);
        return ad::add(fused, h);
    }

    /// T -> T' through the bridge and (optionally) the attention blocks.
    Var dmgab_forward(Tape& tape, FusionTrace* trace = nullptr) const {
        Var t = tape.param(*tensor_);
        Var h = bridge_in_(tape, t);
        if (cfg_.sgatt && !blocks_.empty()) {
            Var e = build_mgse(tape, mgse_);
            for (std::size_t l = 0; l < blocks_.size(); ++l) h = block_forward(h, e, l, trace);
        }
        return bridge_out_(tape, h);
    }

    /// Fused adjacency W* for the current parameters.
    Var fused_matrix(Tape& tape, FusionTrace* trace = nullptr) const { return fuse(dmgab_forward(tape, trace)); }

private:
    // out = in^T (in in^T)^-1, so that in * out = I when in has full row rank.
    static void pseudo_inverse(const Array& in, Array& out) {
        const auto rows = static_cast<Eigen::Index>(in.dim(0));
        const auto cols = static_cast<Eigen::Index>(in.dim(1));
        Eigen::MatrixXd a(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = in.at(i, j);
        const Eigen::MatrixXd gram = a * a.transpose();
        const Eigen::MatrixXd pinv = a.transpose() * gram.ldlt().solve(Eigen::MatrixXd::Identity(rows, rows));
        for (Eigen::Index i = 0; i < cols; ++i)
            for (Eigen::Index j = 0; j < rows; ++j) out.at(i, j) = pinv(i, j);
    }

    // Leading eigenvectors of the distance graph, scaled to unit row RMS.
    static void spectral_embedding(const graphs::GraphSet& set, Parameter& table) {
        const graphs::WeightMatrix* dist = nullptr;
        for (const auto& g : set.graphs) {
            if (g.kind == graphs::GraphKind::distance) dist = &g;
        }
        if (dist == nullptr) throw ConfigError("spectral embedding needs the distance graph in the set");
        const auto n = static_cast<Eigen::Index>(dist->n());
        Eigen::MatrixXd w(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) w(i, j) = dist->values.at(i, j);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(w);
        const auto& vecs = solver.eigenvectors();  // ascending eigenvalues
        const std::size_t d = table.value.dim(1);
        const std::size_t take = std::min<std::size_t>(d, static_cast<std::size_t>(n));
        for (std::size_t c = 0; c < take; ++c) {
            const Eigen::Index col = n - 1 - static_cast<Eigen::Index>(c);
            for (Eigen::Index i = 0; i < n; ++i) {
                table.value.at(static_cast<std::size_t>(i), c) = vecs(i, col) * std::sqrt(static_cast<double>(n));
            }
        }
    }

    FusionConfig cfg_;
    std::size_t graphs_;
    std::size_t nodes_;
    Parameter* tensor_ = nullptr;
    MgseTable mgse_;
    DenseLayer bridge_in_;
    DenseLayer bridge_out_;
    std::vector<BlockParams> blocks_;
};

}  // namespace mgfusion::fusion
