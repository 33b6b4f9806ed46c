#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kfwer/error.hpp"

namespace kfwer::csv {

/// Reals are written with 17 significant digits, '.' decimal point and no
/// grouping; non-finite values as inf / -inf / nan.
inline std::string format_real(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// A parsed headered CSV: header names plus raw string cells.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // source line of each row
    std::string source;

    std::optional<std::size_t> column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    }
};

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_record(std::string_view line, std::size_t lineno, const std::string& source) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            out.push_back(was_quoted ? cur : trim(cur));
            cur.clear();
            was_quoted = false;
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) {
        throw Error(ErrorKind::ParseError, "data_cli",
                    source + ": line " + std::to_string(lineno) + ": unterminated quoted field");
    }
    out.push_back(was_quoted ? cur : trim(cur));
    return out;
}

inline Table read_table(std::istream& in, const std::string& source) {
    Table t;
    t.source = source;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_record(line, lineno, source);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw Error(ErrorKind::ParseError, "data_cli",
                        source + ": line " + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " columns, found " + std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(lineno);
    }
    if (!have_header) throw Error(ErrorKind::ParseError, "data_cli", source + ": empty file, no header");
    return t;
}

inline Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "data_cli", "cannot open " + path);
    return read_table(in, path);
}

/// Parses a real cell; empty cells return nullopt. Anything else malformed is
/// a ParseError naming the line and (1-based) column.
inline std::optional<double> parse_cell(const Table& t, std::size_t row, std::size_t col) {
    const std::string& s = t.rows[row][col];
    if (s.empty()) return std::nullopt;
    double value = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw Error(ErrorKind::ParseError, "data_cli",
                    t.source + ": line " + std::to_string(t.line_numbers[row]) + ", column " +
                        std::to_string(col + 1) + " (" + t.header[col] + "): cannot parse '" + s + "' as a number");
    }
    return value;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out << ',';
        const std::string& c = cells[i];
        if (c.find_first_of(",\"\n") != std::string::npos) {
            out << '"';
            for (char ch : c) {
                if (ch == '"') out << '"';
                out << ch;
            }
            out << '"';
        } else {
            out << c;
        }
    }
    out << '\n';
}

}  // namespace kfwer::csv
