#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mgfusion/errors.hpp"

namespace mgfusion::data {

/// One parsed CSV line with its 1-based line number.
struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

struct CsvTable {
    std::string name;  // file path, used in diagnostics
    std::vector<std::string> header;
    std::vector<CsvRow> rows;

    std::string where(const CsvRow& row) const { return name + ":" + std::to_string(row.line); }
};

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

/// Plain comma-separated parsing: no quoting, header row required, blank lines skipped.
inline CsvTable parse_csv(std::istream& is, const std::string& name) {
    CsvTable t;
    t.name = name;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        t.rows.push_back({lineno, std::move(fields)});
    }
    if (!have_header) throw DataError(name + ": empty file, expected a header row");
    return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    return parse_csv(is, path.string());
}

}  // namespace mgfusion::data
