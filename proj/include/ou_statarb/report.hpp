#pragma once

// Aligned text tables, numeric column files and a stable content hash for
// self-describing reports.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ou_statarb/errors.hpp"

namespace ou_statarb::report {

/// Fixed-point or scientific depending on magnitude; "-" for NaN.
inline std::string num(double v, int digits = 4) {
    if (std::isnan(v)) return "-";
    char buf[64];
    const double a = std::abs(v);
    if (v != 0.0 && (a < 1e-3 || a >= 1e6))
        std::snprintf(buf, sizeof buf, "%.*e", digits - 1, v);
    else
        std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string interval(double lo, double hi, int digits = 3) {
    if (std::isnan(lo) || std::isnan(hi)) return "-";
    return "[" + num(lo, digits) + ", " + num(hi, digits) + "]";
}

class TextTable {
public:
    explicit TextTable(std::vector<std::string> headers) : headers_(std::move(headers)) {}

    void add_row(std::vector<std::string> row) {
        row.resize(headers_.size());
        rows_.push_back(std::move(row));
    }
    [[nodiscard]] std::size_t rows() const { return rows_.size(); }

    [[nodiscard]] std::string render() const {
        std::vector<std::size_t> w(headers_.size());
        for (std::size_t j = 0; j < headers_.size(); ++j) w[j] = headers_[j].size();
        for (const auto& r : rows_)
            for (std::size_t j = 0; j < r.size(); ++j) w[j] = std::max(w[j], r[j].size());
        std::ostringstream out;
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t j = 0; j < cells.size(); ++j) {
                if (j) out << "  ";
                out << std::string(w[j] - cells[j].size(), ' ') << cells[j];
            }
            out << '\n';
        };
        line(headers_);
        std::size_t total = 0;
        for (auto x : w) total += x;
        out << std::string(total + 2 * (w.size() - 1), '-') << '\n';
        for (const auto& r : rows_) line(r);
        return out.str();
    }

private:
    std::vector<std::string> headers_;
    std::vector<std::vector<std::string>> rows_;
};

/// Whitespace-separated numeric columns with a '#' header line.
inline std::string columns(const std::vector<std::string>& names, const std::vector<std::vector<double>>& cols) {
    std::ostringstream out;
    out << '#';
    for (const auto& n : names) out << ' ' << n;
    out << '\n';
    out.precision(10);
    const std::size_t n = cols.empty() ? 0 : cols.front().size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? " " : "") << cols[j][i];
        out << '\n';
    }
    return out.str();
}

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
    if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace ou_statarb::report
