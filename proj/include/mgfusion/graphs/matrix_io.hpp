#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mgfusion/graphs/builders.hpp"

namespace mgfusion::graphs {

/// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& where) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    double v = 0.0;
    const char* first = text.data();
    if (!text.empty() && text.front() == '+') ++first;
    auto res = std::from_chars(first, text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw DataError(where + ": not a number: '" + std::string(text) + "'");
    }
    return v;
}

/// A matrix as stored on disk.
struct MatrixFile {
    GraphKind kind = GraphKind::distance;
    std::vector<std::string> order;
    ad::Array values;
};

/// `# kind=<kind> n=<N> order=<ids>` followed by N space-separated rows.
inline void write_matrix(std::ostream& os, GraphKind kind, const ad::Array& m, const std::vector<std::string>& ids) {
    const std::size_t n = m.dim(0);
    if (m.rank() != 2 || m.dim(1) != n || ids.size() != n) {
        throw DataError("write_matrix: matrix must be N x N with N identifiers");
    }
    os << "# kind=" << kind_name(kind) << " n=" << n << " order=";
    for (std::size_t i = 0; i < n; ++i) os << (i ? "," : "") << ids[i];
    os << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) os << (j ? " " : "") << format_double(m.at(i, j));
        os << '\n';
    }
}

inline void write_matrix_file(const std::filesystem::path& path, GraphKind kind, const ad::Array& m,
                              const std::vector<std::string>& ids) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write_matrix(os, kind, m, ids);
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

inline MatrixFile read_matrix(std::istream& is, const std::string& name = "<matrix>") {
    std::string header;
    if (!std::getline(is, header) || header.rfind("# ", 0) != 0) {
        throw DataError(name + ":1: missing '# kind=... n=... order=...' header");
    }
    MatrixFile out;
    std::size_t n = 0;
    bool have_kind = false, have_n = false, have_order = false;
    std::istringstream hs(header.substr(2));
    std::string tok;
    while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw DataError(name + ":1: malformed header field '" + tok + "'");
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "kind") {
            out.kind = kind_from_name(val);
            have_kind = true;
        } else if (key == "n") {
            n = static_cast<std::size_t>(parse_double(val, name + ":1"));
            have_n = true;
        } else if (key == "order") {
            std::stringstream ss(val);
            std::string id;
            while (std::getline(ss, id, ',')) out.order.push_back(id);
            have_order = true;
        }
    }
    if (!have_kind || !have_n || !have_order || n == 0 || out.order.size() != n) {
        throw DataError(name + ":1: header must carry kind, n and n identifiers in order");
    }
    out.values = ad::Array(ad::Shape{n, n});
    std::string line;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string where = name + ":" + std::to_string(i + 2);
        if (!std::getline(is, line)) throw DataError(where + ": expected " + std::to_string(n) + " rows");
        std::istringstream ls(line);
        std::size_t j = 0;
        while (ls >> tok) {
            if (j >= n) throw DataError(where + ": too many values");
            out.values.at(i, j++) = parse_double(tok, where);
        }
        if (j != n) throw DataError(where + ": expected " + std::to_string(n) + " values, got " + std::to_string(j));
    }
    return out;
}

inline MatrixFile read_matrix_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    return read_matrix(is, path.string());
}

}  // namespace mgfusion::graphs
