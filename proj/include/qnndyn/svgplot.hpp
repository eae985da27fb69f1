#pragma once

#include <string>
#include <utility>
#include <vector>

namespace qnndyn {

// Static SVG charts, enough for log-scale training curves and scatter plots.
// Plots are a convenience; the CSVs are the artifact of record.

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
    bool scatter = false;  // circles instead of a polyline
};

struct PlotSpec {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    bool logx = false;
    bool logy = false;
    int width = 880;
    int height = 560;
};

void write_svg_chart(const std::string& path, const PlotSpec& spec,
                     const std::vector<PlotSeries>& series);

}  // namespace qnndyn
