#pragma once

// Minimal SVG line charts for the report tool. One chart, several labelled
// series over a shared x axis; nothing fancy.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "gibbslab/common.hpp"
#include "gibbslab/csv.hpp"

namespace gibbslab {

struct SvgSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::string& x_label, const std::string& y_label,
                             const std::vector<SvgSeries>& series) {
    check_arg(!series.empty(), "svg: no series");
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (!(xmax > xmin)) xmax = xmin + 1;
    if (!(ymax > ymin)) ymax = ymin + 1;
    const double W = 640, H = 420, ml = 70, mr = 160, mt = 40, mb = 50;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

    std::ofstream out(path);
    if (!out) throw std::runtime_error("svg: cannot open '" + path + "'");
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << W / 2 << "' y='22' text-anchor='middle' font-size='15'>" << title
        << "</text>\n";
    out << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
        << "' stroke='black'/>\n";
    out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
        << "' stroke='black'/>\n";
    out << "<text x='" << (ml + W - mr) / 2 << "' y='" << H - 12
        << "' text-anchor='middle' font-size='12'>" << x_label << "</text>\n";
    out << "<text x='16' y='" << (mt + H - mb) / 2 << "' font-size='12' transform='rotate(-90 16 "
        << (mt + H - mb) / 2 << ")' text-anchor='middle'>" << y_label << "</text>\n";
    for (int g = 0; g <= 4; ++g) {
        const double xv = xmin + g * (xmax - xmin) / 4, yv = ymin + g * (ymax - ymin) / 4;
        out << "<text x='" << px(xv) << "' y='" << H - mb + 16
            << "' text-anchor='middle' font-size='10'>" << format_g17(xv).substr(0, 8)
            << "</text>\n";
        out << "<text x='" << ml - 6 << "' y='" << py(yv) + 4
            << "' text-anchor='end' font-size='10'>" << format_g17(yv).substr(0, 8)
            << "</text>\n";
    }
    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 8];
        out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (const auto& [x, y] : series[s].points) out << px(x) << "," << py(y) << " ";
        out << "'/>\n";
        for (const auto& [x, y] : series[s].points)
            out << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='2.5' fill='" << color
                << "'/>\n";
        out << "<text x='" << W - mr + 10 << "' y='" << mt + 16 * s + 10
            << "' font-size='11' fill='" << color << "'>" << series[s].label << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace gibbslab
