#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mgfusion/errors.hpp"

namespace mgfusion::graphs {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct NodeRecord {
    std::string id;
    std::optional<Point> position;  // planar, metres
    std::vector<std::string> neighbors;
    std::vector<double> functions;  // F_i, one count per function category
    std::vector<double> series;     // T_i, fixed time step
};

/// Per-node raw material for every graph builder. Immutable once validated.
class NodeTable {
public:
    NodeTable() = default;
    explicit NodeTable(std::vector<NodeRecord> nodes) : nodes_(std::move(nodes)) { reindex(); }

    std::size_t size() const noexcept { return nodes_.size(); }
    const NodeRecord& operator[](std::size_t i) const { return nodes_[i]; }
    const std::vector<NodeRecord>& nodes() const noexcept { return nodes_; }

    std::optional<std::size_t> index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(nodes_.size());
        for (const auto& n : nodes_) out.push_back(n.id);
        return out;
    }

    std::size_t series_length() const { return nodes_.empty() ? 0 : nodes_.front().series.size(); }
    std::size_t function_count() const { return nodes_.empty() ? 0 : nodes_.front().functions.size(); }

    /// Throws DataError on an unknown, self-referencing or one-directional neighbour entry.
    void check_adjacency() const {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            for (const auto& nb : nodes_[i].neighbors) {
                auto j = index_of(nb);
                if (!j) throw DataError("node '" + nodes_[i].id + "' lists unknown neighbour '" + nb + "'");
                if (*j == i) throw DataError("node '" + nodes_[i].id + "' lists itself as a neighbour");
                const auto& back = nodes_[*j].neighbors;
                if (std::find(back.begin(), back.end(), nodes_[i].id) == back.end()) {
                    throw DataError("asymmetric adjacency: '" + nodes_[i].id + "' lists '" + nb +
                                    "' but not vice versa");
                }
            }
        }
    }

    /// Full invariant check: unique ids, symmetric adjacency, equal-length
    /// function vectors (K >= 1) and series (P >= 2).
    void validate() const {
        if (nodes_.empty()) throw DataError("node table is empty");
        if (index_.size() != nodes_.size()) throw DataError("duplicate node identifiers");
        check_adjacency();
        const std::size_t k = nodes_.front().functions.size();
        const std::size_t p = nodes_.front().series.size();
        if (k < 1) throw DataError("node '" + nodes_.front().id + "' has no function counts");
        if (p < 2) throw DataError("node '" + nodes_.front().id + "' has a series shorter than 2");
        for (const auto& n : nodes_) {
            if (n.functions.size() != k) {
                throw DataError("node '" + n.id + "' has " + std::to_string(n.functions.size()) +
                                " function counts, expected " + std::to_string(k));
            }
            if (n.series.size() != p) {
                throw DataError("node '" + n.id + "' has series length " + std::to_string(n.series.size()) +
                                ", expected " + std::to_string(p));
            }
            for (double f : n.functions) {
                if (f < 0.0) throw DataError("node '" + n.id + "' has a negative function count");
            }
        }
    }

    /// Copy with every series truncated to its first `length` values.
    NodeTable with_series_prefix(std::size_t length) const {
        NodeTable out = *this;
        for (auto& n : out.nodes_) {
            if (n.series.size() > length) n.series.resize(length);
        }
        return out;
    }

private:
    void reindex() {
        index_.clear();
        for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i].id, i);
    }

    std::vector<NodeRecord> nodes_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mgfusion::graphs
