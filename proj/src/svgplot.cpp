#include "qnndyn/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace qnndyn {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

double tform(double v, bool log) { return log ? std::log10(v) : v; }

bool usable(double v, bool log) { return std::isfinite(v) && (!log || v > 0.0); }

std::string short_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

}  // namespace

void write_svg_chart(const std::string& path, const PlotSpec& spec,
                     const std::vector<PlotSeries>& series) {
    const double ml = 78, mr = 24, mt = 42, mb = 56;
    const double pw = spec.width - ml - mr, ph = spec.height - mt - mb;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const PlotSeries& s : series) {
        for (auto [x, y] : s.points) {
            if (!usable(x, spec.logx) || !usable(y, spec.logy)) continue;
            double tx = tform(x, spec.logx), ty = tform(y, spec.logy);
            xmin = std::min(xmin, tx);
            xmax = std::max(xmax, tx);
            ymin = std::min(ymin, ty);
            ymax = std::max(ymax, ty);
        }
    }
    if (!(xmin <= xmax)) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    double xpad = 0.03 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double tx) { return ml + (tx - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double ty) { return mt + ph - (ty - ymin) / (ymax - ymin) * ph; };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open SVG for writing: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\""
        << spec.height << "\" viewBox=\"0 0 " << spec.width << " " << spec.height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << spec.width / 2 << "\" y=\"24\" text-anchor=\"middle\""
        << " font-family=\"sans-serif\" font-size=\"15\">" << spec.title << "</text>\n";

    // frame and ticks
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#333\"/>\n";
    const int nticks = 5;
    for (int k = 0; k <= nticks; ++k) {
        double tx = xmin + (xmax - xmin) * k / nticks;
        double ty = ymin + (ymax - ymin) * k / nticks;
        double lx = spec.logx ? std::pow(10.0, tx) : tx;
        double ly = spec.logy ? std::pow(10.0, ty) : ty;
        out << "<line x1=\"" << px(tx) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(tx)
            << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"#333\"/>\n"
            << "<text x=\"" << px(tx) << "\" y=\"" << mt + ph + 20
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << short_num(lx) << "</text>\n"
            << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(ty) << "\" x2=\"" << ml << "\" y2=\""
            << py(ty) << "\" stroke=\"#333\"/>\n"
            << "<text x=\"" << ml - 8 << "\" y=\"" << py(ty) + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << short_num(ly) << "</text>\n";
    }
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << spec.height - 14
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << spec.xlabel
        << "</text>\n"
        << "<text x=\"18\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\""
        << " transform=\"rotate(-90 18 " << mt + ph / 2 << ")\">" << spec.ylabel << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const PlotSeries& s = series[si];
        const char* color = kPalette[si % kPaletteSize];
        if (s.scatter) {
            for (auto [x, y] : s.points) {
                if (!usable(x, spec.logx) || !usable(y, spec.logy)) continue;
                out << "<circle cx=\"" << px(tform(x, spec.logx)) << "\" cy=\""
                    << py(tform(y, spec.logy)) << "\" r=\"3\" fill=\"" << color
                    << "\" fill-opacity=\"0.75\"/>\n";
            }
        } else {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\""
                << " points=\"";
            for (auto [x, y] : s.points) {
                if (!usable(x, spec.logx) || !usable(y, spec.logy)) continue;
                out << px(tform(x, spec.logx)) << ',' << py(tform(y, spec.logy)) << ' ';
            }
            out << "\"/>\n";
        }
        double lx = ml + pw - 170, lyy = mt + 16 + 17 * static_cast<double>(si);
        out << "<rect x=\"" << lx << "\" y=\"" << lyy - 9 << "\" width=\"12\" height=\"12\" fill=\""
            << color << "\"/>\n"
            << "<text x=\"" << lx + 17 << "\" y=\"" << lyy + 2
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.name << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace qnndyn
