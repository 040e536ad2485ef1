#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "fbmstab/config.hpp"
#include "fbmstab/grid.hpp"

namespace fbmstab {

/// Filesystem failure while writing outputs; reported with the config-error exit code.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

/// Shortest text that round-trips: 17 significant digits, "nan"/"inf" spelled out.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Writes `content` to a sibling temporary file, then renames it over `path`; readers never
/// observe a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    static std::atomic<unsigned> counter{0};
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    auto tmp = path;
    tmp += ".tmp" + std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_atomic(path, j.dump(2) + "\n"); }

inline Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

/// Row-oriented CSV builder with a fixed header.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : width_(header.size()) { line(header); }

    void row(const std::vector<double>& values) {
        if (values.size() != width_) throw InvalidParameter("CsvTable: row width mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) text_ += ',';
            // Integral values up to 2^53 print without exponent so counters stay readable.
            double v = values[i];
            if (std::abs(v) < 9007199254740992.0 && v == std::floor(v))
                text_ += std::to_string(static_cast<long long>(v));
            else
                text_ += format_double(v);
        }
        text_ += '\n';
    }

    const std::string& str() const noexcept { return text_; }
    void save(const std::filesystem::path& path) const { write_atomic(path, text_); }

private:
    void line(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }

    std::size_t width_;
    std::string text_;
};

/// Columns t, then `lead` (when non-empty) holding the node norm, then mode_0..mode_{K-1}.
inline CsvTable path_table(const VectorPath& p, const std::string& lead = "") {
    std::vector<std::string> header{"t"};
    if (!lead.empty()) header.push_back(lead);
    for (std::size_t i = 0; i < p.dim(); ++i) header.push_back("mode_" + std::to_string(i));
    CsvTable t(header);
    std::vector<double> row;
    for (std::size_t k = 0; k < p.size(); ++k) {
        row.clear();
        row.push_back(p.grid().time(k));
        if (!lead.empty()) row.push_back(p.node(k).norm());
        for (std::size_t i = 0; i < p.dim(); ++i) row.push_back(p.node(k)(static_cast<Eigen::Index>(i)));
        t.row(row);
    }
    return t;
}

/// Reads a numeric CSV written by CsvTable: header plus rows of numbers.
struct CsvData {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw IoError("CSV: no column '" + name + "'");
    }
};

inline CsvData read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    CsvData d;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= s.size(); ++i)
            if (i == s.size() || s[i] == ',') {
                out.push_back(s.substr(start, i - start));
                start = i + 1;
            }
        return out;
    };
    if (!std::getline(in, line)) throw IoError("CSV: empty file " + path.string());
    d.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != d.header.size())
            throw IoError("CSV: wrong field count at line " + std::to_string(lineno) + " of " + path.string());
        std::vector<double> row;
        for (const auto& c : cells) {
            // strtod rather than stod: subnormal values are data, not errors.
            char* end = nullptr;
            double v = std::strtod(c.c_str(), &end);
            if (c.empty() || end != c.c_str() + c.size())
                throw IoError("CSV: non-numeric field at line " + std::to_string(lineno) + " of " + path.string());
            row.push_back(v);
        }
        d.rows.push_back(std::move(row));
    }
    return d;
}

}  // namespace fbmstab
