#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgfusion/autodiff/array.hpp"
#include "mgfusion/data/csv.hpp"
#include "mgfusion/forecast/windows.hpp"
#include "mgfusion/graphs/matrix_io.hpp"
#include "mgfusion/graphs/node_table.hpp"

namespace mgfusion::data {

using graphs::NodeRecord;
using graphs::NodeTable;

/// Per-node min-max scaling fitted on the training split.
struct Scaling {
    std::vector<double> min;
    std::vector<double> max;
    std::vector<bool> constant;  // max == min: values pass through unchanged

    double scale(double v, std::size_t node) const {
        if (constant[node]) return v;
        return (v - min[node]) / (max[node] - min[node]);
    }

    double unscale(double v, std::size_t node) const {
        if (constant[node]) return v;
        return v * (max[node] - min[node]) + min[node];
    }

    std::vector<double> unscale(std::span<const double> values, std::size_t node) const {
        std::vector<double> out(values.begin(), values.end());
        for (double& v : out) v = unscale(v, node);
        return out;
    }
};

struct DatasetBundle {
    NodeTable nodes;
    nlohmann::json provenance = nlohmann::json::object();
    std::optional<Scaling> scaling;
};

/// Fits scaling on time steps [train.begin, train.end) only.
inline Scaling fit_scaling(const NodeTable& nodes, forecast::Segment train) {
    Scaling s;
    for (const auto& n : nodes.nodes()) {
        if (train.end > n.series.size() || train.length() == 0) {
            throw DataError("training segment exceeds series of node '" + n.id + "'");
        }
        double lo = n.series[train.begin];
        double hi = lo;
        for (std::size_t t = train.begin; t < train.end; ++t) {
            lo = std::min(lo, n.series[t]);
            hi = std::max(hi, n.series[t]);
        }
        s.min.push_back(lo);
        s.max.push_back(hi);
        s.constant.push_back(!(hi > lo));
    }
    return s;
}

/// Scaled values as a time-major [P, N] array. Values outside the training
/// range are not clipped.
inline ad::Array scaled_series(const NodeTable& nodes, const Scaling& s) {
    const std::size_t n = nodes.size();
    const std::size_t p = nodes.series_length();
    ad::Array out(ad::Shape{p, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < p; ++t) out.at(t, i) = s.scale(nodes[i].series[t], i);
    return out;
}

namespace detail {

inline void expect_header(const CsvTable& t, const std::vector<std::string>& fixed, const std::string& prefix) {
    bool ok = t.header.size() >= fixed.size();
    for (std::size_t i = 0; ok && i < fixed.size(); ++i) ok = t.header[i] == fixed[i];
    for (std::size_t i = fixed.size(); ok && i < t.header.size(); ++i) {
        ok = t.header[i] == prefix + std::to_string(i - fixed.size() + 1);
    }
    if (!ok) {
        std::string want;
        for (const auto& f : fixed) want += f + ",";
        throw DataError(t.name + ":1: unexpected header; expected " + want + prefix + "1," + prefix + "2,...");
    }
}

// id -> numeric row; every id must be known and appear exactly once.
inline std::vector<std::vector<double>> numeric_rows(const CsvTable& t, const NodeTable& nodes,
                                                     const std::string& prefix, std::size_t min_columns) {
    const std::size_t cols = t.header.size() - 1;
    if (cols < min_columns) {
        throw DataError(t.name + ":1: need at least " + std::to_string(min_columns) + " " + prefix + " columns");
    }
    std::vector<std::vector<double>> out(nodes.size());
    std::vector<bool> seen(nodes.size(), false);
    for (const auto& row : t.rows) {
        if (row.fields.size() != t.header.size()) {
            throw DataError(t.where(row) + ": expected " + std::to_string(t.header.size()) + " columns, got " +
                            std::to_string(row.fields.size()));
        }
        const auto idx = nodes.index_of(row.fields[0]);
        if (!idx) throw DataError(t.where(row) + ": unknown node id '" + row.fields[0] + "'");
        if (seen[*idx]) throw DataError(t.where(row) + ": duplicate row for node '" + row.fields[0] + "'");
        seen[*idx] = true;
        auto& values = out[*idx];
        values.reserve(cols);
        for (std::size_t c = 1; c < row.fields.size(); ++c) {
            values.push_back(graphs::parse_double(row.fields[c], t.where(row)));
        }
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!seen[i]) throw DataError(t.name + ": no row for node '" + nodes[i].id + "'");
    }
    return out;
}

inline std::vector<NodeRecord> parse_nodes(const CsvTable& t) {
    if (t.header != std::vector<std::string>{"id", "x", "y", "neighbors"}) {
        throw DataError(t.name + ":1: unexpected header; expected id,x,y,neighbors");
    }
    std::vector<NodeRecord> out;
    std::set<std::string> ids;
    for (const auto& row : t.rows) {
        if (row.fields.size() != 4) {
            throw DataError(t.where(row) + ": expected 4 columns, got " + std::to_string(row.fields.size()));
        }
        NodeRecord r;
        r.id = row.fields[0];
        if (r.id.empty()) throw DataError(t.where(row) + ": empty node id");
        if (!ids.insert(r.id).second) throw DataError(t.where(row) + ": duplicate node id '" + r.id + "'");
        const bool has_x = !row.fields[1].empty();
        const bool has_y = !row.fields[2].empty();
        if (has_x != has_y) throw DataError(t.where(row) + ": coordinates must give both x and y or neither");
        if (has_x) {
            r.position = graphs::Point{graphs::parse_double(row.fields[1], t.where(row)),
                                       graphs::parse_double(row.fields[2], t.where(row))};
        }
        if (!row.fields[3].empty()) {
            for (auto& nb : split(row.fields[3], ';')) {
                if (nb.empty()) throw DataError(t.where(row) + ": empty neighbour id");
                r.neighbors.push_back(std::move(nb));
            }
        }
        out.push_back(std::move(r));
    }
    // Unknown neighbours reported with the line that names them.
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (const auto& nb : out[i].neighbors) {
            if (!ids.count(nb)) {
                throw DataError(t.where(t.rows[i]) + ": unknown neighbour id '" + nb + "'");
            }
        }
    }
    return out;
}

}  // namespace detail

/// Reads nodes.csv (id,x,y,neighbors), functions.csv (id,f_1..f_K) and
/// series.csv (id,t_1..t_P) into a validated NodeTable.
inline DatasetBundle load_dataset(const std::filesystem::path& nodes_file, const std::filesystem::path& functions_file,
                                  const std::filesystem::path& series_file) {
    const CsvTable nodes_csv = read_csv(nodes_file);
    const CsvTable functions_csv = read_csv(functions_file);
    const CsvTable series_csv = read_csv(series_file);

    auto records = detail::parse_nodes(nodes_csv);
    NodeTable skeleton(records);
    detail::expect_header(functions_csv, {"id"}, "f_");
    detail::expect_header(series_csv, {"id"}, "t_");
    auto functions = detail::numeric_rows(functions_csv, skeleton, "f_", 1);
    auto series = detail::numeric_rows(series_csv, skeleton, "t_", 2);
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].functions = std::move(functions[i]);
        records[i].series = std::move(series[i]);
    }
    DatasetBundle bundle;
    bundle.nodes = NodeTable(std::move(records));
    bundle.nodes.validate();
    bundle.provenance = {{"source", "files"},
                         {"nodes", nodes_file.string()},
                         {"functions", functions_file.string()},
                         {"series", series_file.string()}};
    return bundle;
}

inline DatasetBundle load_dataset(const std::filesystem::path& dir) {
    return load_dataset(dir / "nodes.csv", dir / "functions.csv", dir / "series.csv");
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    return os;
}

}  // namespace detail

/// Writes the three CSV files into `dir` with round-trip exact numbers.
inline void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
    const auto& nodes = bundle.nodes;
    using graphs::format_double;
    {
        auto os = detail::open_out(dir / "nodes.csv");
        os << "id,x,y,neighbors\n";
        for (const auto& n : nodes.nodes()) {
            os << n.id << ',';
            if (n.position) os << format_double(n.position->x) << ',' << format_double(n.position->y);
            else os << ',';
            os << ',';
            for (std::size_t k = 0; k < n.neighbors.size(); ++k) os << (k ? ";" : "") << n.neighbors[k];
            os << '\n';
        }
        if (!os) throw IoError("failed writing nodes.csv");
    }
    auto write_rows = [&](const std::string& file, const std::string& prefix, auto get) {
        auto os = detail::open_out(dir / file);
        const std::size_t cols = nodes.size() ? get(nodes[0]).size() : 0;
        os << "id";
        for (std::size_t c = 1; c <= cols; ++c) os << ',' << prefix << c;
        os << '\n';
        for (const auto& n : nodes.nodes()) {
            os << n.id;
            for (double v : get(n)) os << ',' << format_double(v);
            os << '\n';
        }
        if (!os) throw IoError("failed writing " + file);
    };
    write_rows("functions.csv", "f_", [](const NodeRecord& r) -> const std::vector<double>& { return r.functions; });
    write_rows("series.csv", "t_", [](const NodeRecord& r) -> const std::vector<double>& { return r.series; });
}

}  // namespace mgfusion::data
