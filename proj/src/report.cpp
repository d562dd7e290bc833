#include "trajrep/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "trajrep/common.hpp"

namespace trajrep {

RunMetrics load_metrics_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open metrics file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    RunMetrics m;
    std::size_t slash = path.find_last_of('/');
    std::string stem = slash == std::string::npos ? path : path.substr(slash + 1);
    if (stem.size() > 5 && stem.ends_with(".json")) stem.resize(stem.size() - 5);
    m.label = stem;
    m.task = j.value("task", "");
    for (auto it = j.at("metrics").begin(); it != j.at("metrics").end(); ++it) {
        m.values[it.key()] = it.value().get<double>();
    }
    return m;
}

namespace {

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace

void write_bar_chart_svg(const std::string& metric, const std::vector<RunMetrics>& runs,
                         const std::string& path) {
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& r : runs) {
        auto it = r.values.find(metric);
        if (it != r.values.end()) bars.emplace_back(r.label, it->second);
    }
    if (bars.empty()) throw ValidationError("write_bar_chart_svg: no run has metric " + metric);

    const int width = 640;
    const int height = 360;
    const int margin = 60;
    double vmax = 0.0;
    for (const auto& [label, v] : bars) vmax = std::max(vmax, std::abs(v));
    if (vmax == 0.0) vmax = 1.0;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<text x=\"10\" y=\"20\" font-family=\"monospace\" font-size=\"14\">" << metric
        << "</text>\n";
    const double plot_w = width - 2.0 * margin;
    const double plot_h = height - 2.0 * margin;
    const double bar_w = plot_w / static_cast<double>(bars.size());
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double h = plot_h * std::abs(bars[i].second) / vmax;
        const double x = margin + bar_w * static_cast<double>(i) + bar_w * 0.125;
        const double y = height - margin - h;
        svg << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(bar_w * 0.75)
            << "\" height=\"" << fmt(h) << "\" fill=\"#4477aa\"/>\n";
        svg << "<text x=\"" << fmt(x) << "\" y=\"" << height - margin + 16
            << "\" font-family=\"monospace\" font-size=\"10\">" << bars[i].first << "</text>\n";
        svg << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y - 4)
            << "\" font-family=\"monospace\" font-size=\"10\">" << fmt(bars[i].second)
            << "</text>\n";
    }
    svg << "</svg>\n";
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << svg.str();
}

void write_line_chart_svg(const std::string& title, const std::vector<double>& values,
                          const std::string& path) {
    if (values.empty()) throw ValidationError("write_line_chart_svg: no values");
    const int width = 640;
    const int height = 360;
    const int margin = 60;
    double vmin = values.front();
    double vmax = values.front();
    for (double v : values) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    if (vmax == vmin) vmax = vmin + 1.0;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<text x=\"10\" y=\"20\" font-family=\"monospace\" font-size=\"14\">" << title
        << "</text>\n";
    svg << "<polyline fill=\"none\" stroke=\"#aa4444\" stroke-width=\"2\" points=\"";
    const double plot_w = width - 2.0 * margin;
    const double plot_h = height - 2.0 * margin;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = margin + plot_w * (values.size() == 1
                                                ? 0.5
                                                : static_cast<double>(i) /
                                                      static_cast<double>(values.size() - 1));
        const double y = height - margin - plot_h * (values[i] - vmin) / (vmax - vmin);
        svg << fmt(x) << "," << fmt(y) << " ";
    }
    svg << "\"/>\n</svg>\n";
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << svg.str();
}

std::string summary_table(const std::vector<RunMetrics>& runs) {
    std::set<std::string> keys;
    std::size_t label_w = 8;
    for (const auto& r : runs) {
        label_w = std::max(label_w, r.label.size());
        for (const auto& [k, v] : r.values) keys.insert(k);
    }
    std::ostringstream out;
    out << std::string(label_w, ' ');
    for (const auto& k : keys) {
        out << "  " << k;
    }
    out << "\n";
    for (const auto& r : runs) {
        out << r.label << std::string(label_w - r.label.size(), ' ');
        for (const auto& k : keys) {
            auto it = r.values.find(k);
            std::string cell = it == r.values.end() ? "-" : fmt(it->second);
            out << "  " << cell << std::string(k.size() > cell.size() ? k.size() - cell.size() : 0,
                                               ' ');
        }
        out << "\n";
    }
    return out.str();
}

} // namespace trajrep
