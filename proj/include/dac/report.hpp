#pragma once

#include "dac/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace dac {

/// Deterministic text for a double: 12 significant digits, "nan"/"inf" spelled out.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// CSV table. Comment lines (`# key=value`) precede the header row.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void comment(const std::string& key, const std::string& value) { comments_.emplace_back(key, value); }
    void comment(const std::string& key, double value) { comments_.emplace_back(key, fmt(value)); }

    void add_row(std::vector<std::string> row) {
        if (row.size() != header_.size()) throw Error("cli", "CSV row width does not match the header");
        rows_.push_back(std::move(row));
    }

    void add_row(const std::vector<double>& row) {
        std::vector<std::string> cells;
        cells.reserve(row.size());
        for (double v : row) cells.push_back(fmt(v));
        add_row(std::move(cells));
    }

    std::string str() const {
        std::ostringstream os;
        for (const auto& [k, v] : comments_) os << "# " << k << '=' << v << '\n';
        write_line(os, header_);
        for (const auto& r : rows_) write_line(os, r);
        return os.str();
    }

    std::size_t rows() const { return rows_.size(); }

private:
    static void write_line(std::ostringstream& os, const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
        os << '\n';
    }

    std::vector<std::string> header_;
    KeyValues comments_;
    std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cli", "cannot write " + path.string());
    out << text;
}

inline std::string key_values(const KeyValues& kv) {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Minimal static SVG line charts

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool dashed = false;
};

struct PlotOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    bool markers = false;
};

inline std::string svg_line_plot(const std::vector<Series>& series, const PlotOptions& opt) {
    constexpr double width = 640, height = 400, left = 70, right = 20, top = 40, bottom = 50;
    auto tx = [&](double v) { return opt.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return opt.log_y ? std::log10(v) : v; };
    auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!opt.log_x || x > 0) && (!opt.log_y || y > 0);
    };

    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
            if (!usable(s.x[k], s.y[k])) continue;
            x0 = std::min(x0, tx(s.x[k]));
            x1 = std::max(x1, tx(s.x[k]));
            y0 = std::min(y0, ty(s.y[k]));
            y1 = std::max(y1, ty(s.y[k]));
        }
    if (!(x0 <= x1)) x0 = 0, x1 = 1;
    if (!(y0 <= y1)) y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-300) x1 = x0 + 1;
    if (y1 - y0 < 1e-12 * std::max(1.0, std::abs(y0))) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    auto px = [&](double v) { return left + (tx(v) - x0) / (x1 - x0) * (width - left - right); };
    auto py = [&](double v) { return height - bottom - (ty(v) - y0) / (y1 - y0) * (height - top - bottom); };
    auto tick = [&](double v, bool log) { return log ? "1e" + fmt(std::round(v * 100) / 100) : fmt(v); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << opt.title
       << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << width - left - right << "\" height=\""
       << height - top - bottom << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = x0 + (x1 - x0) * i / 4.0;
        const double fy = y0 + (y1 - y0) * i / 4.0;
        const double sx = left + (width - left - right) * i / 4.0;
        const double sy = height - bottom - (height - top - bottom) * i / 4.0;
        os << "<text x=\"" << sx << "\" y=\"" << height - bottom + 16 << "\" text-anchor=\"middle\">"
           << tick(fx, opt.log_x) << "</text>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">" << tick(fy, opt.log_y)
           << "</text>\n";
    }
    os << "<text x=\"" << width / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">" << opt.x_label
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << height / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << height / 2 << ")\">" << opt.y_label << "</text>\n";

    int legend = 0;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
           << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
        // Thin dense series to at most ~2000 vertices.
        const std::size_t n = std::min(s.x.size(), s.y.size());
        const std::size_t stride = std::max<std::size_t>(1, n / 2000);
        for (std::size_t k = 0; k < n; k += stride)
            if (usable(s.x[k], s.y[k])) os << fmt(px(s.x[k])) << ',' << fmt(py(s.y[k])) << ' ';
        if (n > 0 && (n - 1) % stride != 0 && usable(s.x[n - 1], s.y[n - 1]))
            os << fmt(px(s.x[n - 1])) << ',' << fmt(py(s.y[n - 1]));
        os << "\"/>\n";
        if (opt.markers)
            for (std::size_t k = 0; k < n; ++k)
                if (usable(s.x[k], s.y[k]))
                    os << "<circle cx=\"" << fmt(px(s.x[k])) << "\" cy=\"" << fmt(py(s.y[k])) << "\" r=\"3\" fill=\""
                       << s.color << "\"/>\n";
        const double ly = top + 14 + 16 * legend++;
        os << "<line x1=\"" << width - right - 120 << "\" y1=\"" << ly - 4 << "\" x2=\"" << width - right - 100
           << "\" y2=\"" << ly - 4 << "\" stroke=\"" << s.color << "\" stroke-width=\"2\""
           << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
        os << "<text x=\"" << width - right - 95 << "\" y=\"" << ly << "\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace dac
