#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ddnn/errors.hpp"
#include "ddnn/trajectory.hpp"
#include "ddnn/vec.hpp"

namespace ddnn {

/// 17 significant digits: enough for a binary64 to survive a text round trip.
inline void append_double(std::string& out, double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out += buf;
}

[[nodiscard]] inline std::string format_double(double x) {
    std::string s;
    append_double(s, x);
    return s;
}

/// Header `t,z0,...,z{d-1}`, one row per sample, `\n` line endings.
[[nodiscard]] inline std::string series_csv(std::span<const double> times, const std::vector<Vec>& values) {
    if (times.size() != values.size()) throw DimensionMismatch("series_csv: times/values sizes");
    if (times.empty()) throw Error("series_csv: empty series");
    const std::size_t d = values.front().size();
    std::string out = "t";
    for (std::size_t j = 0; j < d; ++j) {
        out += ",z";
        out += std::to_string(j);
    }
    out += '\n';
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (values[i].size() != d) throw DimensionMismatch("series_csv: ragged rows");
        append_double(out, times[i]);
        for (double v : values[i]) {
            out += ',';
            append_double(out, v);
        }
        out += '\n';
    }
    return out;
}

[[nodiscard]] inline std::string trajectory_csv(const Trajectory& traj) {
    std::vector<double> times(traj.knot_count());
    std::vector<Vec> values(traj.knot_count());
    for (std::size_t i = 0; i < traj.knot_count(); ++i) {
        times[i] = traj.knot_time(i);
        const auto s = traj.knot_state(i);
        values[i].assign(s.begin(), s.end());
    }
    return series_csv(times, values);
}

/// Parsed numeric CSV with named columns.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    [[nodiscard]] std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ConfigError("csv: missing column '" + std::string(name) + "'");
    }
    [[nodiscard]] std::vector<double> values(std::string_view name) const {
        const std::size_t c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& row : rows) out.push_back(row[c]);
        return out;
    }
};

[[nodiscard]] inline CsvTable parse_csv(std::string_view text) {
    CsvTable table;
    std::size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        const std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;

        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            cells.emplace_back(line.substr(start, comma == std::string_view::npos
                                                      ? std::string_view::npos
                                                      : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (first) {
            table.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != table.header.size()) throw ConfigError("csv: ragged row");
        std::vector<double> row;
        row.reserve(cells.size());
        for (const std::string& cell : cells) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0') throw ConfigError("csv: non-numeric cell '" + cell + "'");
            row.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    if (first) throw ConfigError("csv: missing header line");
    return table;
}

[[nodiscard]] inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed: " + path);
}

} // namespace ddnn
