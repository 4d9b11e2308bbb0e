#include "agristab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace agristab::svg {

namespace {

constexpr int kWidth = 900;
constexpr int kHeight = 480;
constexpr int kMarginLeft = 90;
constexpr int kMarginRight = 160;
constexpr int kMarginTop = 50;
constexpr int kMarginBottom = 60;

const char* kPalette[] = {"#4878d0", "#ee854a", "#6acc64", "#d65f5f",
                          "#956cb4", "#8c613c", "#dc7ec0", "#797979"};

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

Range value_range(const std::vector<Series>& series, bool include_zero) {
    Range r{1e300, -1e300};
    for (const auto& s : series)
        for (double v : s.values) {
            r.lo = std::min(r.lo, v);
            r.hi = std::max(r.hi, v);
        }
    if (r.lo > r.hi) return {0.0, 1.0};
    if (include_zero) {
        r.lo = std::min(r.lo, 0.0);
        r.hi = std::max(r.hi, 0.0);
    }
    if (r.lo == r.hi) {
        r.lo -= 1.0;
        r.hi += 1.0;
    }
    const double pad = 0.05 * (r.hi - r.lo);
    return {r.lo - (r.lo < 0 ? pad : 0.0), r.hi + pad};
}

std::string fmt(double v) {
    std::ostringstream out;
    if (std::abs(v) >= 1e6 || (std::abs(v) < 1e-3 && v != 0.0))
        out.precision(3), out << v;
    else
        out.precision(6), out << v;
    return out.str();
}

void open_svg(std::ofstream& out, const std::string& title) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
        << "\" height=\"" << kHeight << "\" font-family=\"sans-serif\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"26\" text-anchor=\"middle\" "
        << "font-size=\"16\">" << title << "</text>\n";
}

void draw_axes(std::ofstream& out, const Range& r) {
    const int plot_h = kHeight - kMarginTop - kMarginBottom;
    out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\""
        << kMarginLeft << "\" y2=\"" << kMarginTop + plot_h
        << "\" stroke=\"#333\"/>\n";
    for (int tick = 0; tick <= 5; ++tick) {
        const double v = r.lo + (r.hi - r.lo) * tick / 5.0;
        const double y = kMarginTop + plot_h - plot_h * (v - r.lo) / (r.hi - r.lo);
        out << "<line x1=\"" << kMarginLeft - 4 << "\" y1=\"" << y << "\" x2=\""
            << kWidth - kMarginRight << "\" y2=\"" << y
            << "\" stroke=\"#ddd\"/>\n"
            << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(v) << "</text>\n";
    }
}

void draw_legend(std::ofstream& out, const std::vector<Series>& series) {
    for (std::size_t s = 0; s < series.size(); ++s) {
        const int y = kMarginTop + 18 * static_cast<int>(s);
        out << "<rect x=\"" << kWidth - kMarginRight + 12 << "\" y=\"" << y
            << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[s % 8]
            << "\"/>\n"
            << "<text x=\"" << kWidth - kMarginRight + 30 << "\" y=\"" << y + 10
            << "\" font-size=\"12\">" << series[s].label << "</text>\n";
    }
}

} // namespace

void write_bar_chart(const std::string& path, const std::string& title,
                     const std::vector<std::string>& categories,
                     const std::vector<Series>& series) {
    for (const auto& s : series)
        if (s.values.size() != categories.size())
            throw std::invalid_argument("bar chart: series length mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    open_svg(out, title);
    const Range r = value_range(series, true);
    draw_axes(out, r);

    const int plot_w = kWidth - kMarginLeft - kMarginRight;
    const int plot_h = kHeight - kMarginTop - kMarginBottom;
    const double group_w = static_cast<double>(plot_w) / categories.size();
    const double bar_w = std::max(2.0, group_w * 0.8 / std::max<std::size_t>(1, series.size()));
    auto y_of = [&r, plot_h](double v) {
        return kMarginTop + plot_h - plot_h * (v - r.lo) / (r.hi - r.lo);
    };
    const double y0 = y_of(0.0);

    for (std::size_t c = 0; c < categories.size(); ++c) {
        for (std::size_t s = 0; s < series.size(); ++s) {
            const double v = series[s].values[c];
            const double x = kMarginLeft + group_w * c + group_w * 0.1 + bar_w * s;
            const double y = y_of(v);
            out << "<rect x=\"" << x << "\" y=\"" << std::min(y, y0) << "\" width=\""
                << bar_w << "\" height=\"" << std::abs(y0 - y) << "\" fill=\""
                << kPalette[s % 8] << "\"/>\n";
        }
        out << "<text x=\"" << kMarginLeft + group_w * (c + 0.5) << "\" y=\""
            << kHeight - kMarginBottom + 18
            << "\" text-anchor=\"middle\" font-size=\"11\">" << categories[c]
            << "</text>\n";
    }
    draw_legend(out, series);
    out << "</svg>\n";
}

void write_line_chart(const std::string& path, const std::string& title,
                      const std::vector<double>& x, const std::vector<Series>& series) {
    for (const auto& s : series)
        if (s.values.size() != x.size())
            throw std::invalid_argument("line chart: series length mismatch");
    if (x.size() < 2) throw std::invalid_argument("line chart needs >= 2 points");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    open_svg(out, title);
    const Range r = value_range(series, true);
    draw_axes(out, r);

    const int plot_w = kWidth - kMarginLeft - kMarginRight;
    const int plot_h = kHeight - kMarginTop - kMarginBottom;
    const double xlo = *std::min_element(x.begin(), x.end());
    const double xhi = *std::max_element(x.begin(), x.end());
    auto x_of = [&](double v) {
        return kMarginLeft + plot_w * (v - xlo) / std::max(1e-12, xhi - xlo);
    };
    auto y_of = [&r, plot_h](double v) {
        return kMarginTop + plot_h - plot_h * (v - r.lo) / (r.hi - r.lo);
    };

    for (std::size_t s = 0; s < series.size(); ++s) {
        out << "<polyline fill=\"none\" stroke=\"" << kPalette[s % 8]
            << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < x.size(); ++i)
            out << x_of(x[i]) << ',' << y_of(series[s].values[i]) << ' ';
        out << "\"/>\n";
    }
    for (std::size_t i = 0; i < x.size(); ++i)
        out << "<text x=\"" << x_of(x[i]) << "\" y=\"" << kHeight - kMarginBottom + 18
            << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(x[i])
            << "</text>\n";
    draw_legend(out, series);
    out << "</svg>\n";
}

} // namespace agristab::svg
