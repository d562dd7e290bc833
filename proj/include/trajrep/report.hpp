#ifndef TRAJREP_REPORT_HPP
#define TRAJREP_REPORT_HPP

#include <map>
#include <string>
#include <vector>

namespace trajrep {

struct RunMetrics {
    std::string label;                       // run name (file stem)
    std::string task;
    std::map<std::string, double> values;
};

RunMetrics load_metrics_json(const std::string& path);

/// SVG bar chart comparing one metric across runs.
void write_bar_chart_svg(const std::string& metric, const std::vector<RunMetrics>& runs,
                         const std::string& path);

/// SVG line chart of per-epoch values (e.g. pretraining loss).
void write_line_chart_svg(const std::string& title, const std::vector<double>& values,
                          const std::string& path);

/// Plain-text table: one row per run, one column per metric.
std::string summary_table(const std::vector<RunMetrics>& runs);

} // namespace trajrep

#endif // TRAJREP_REPORT_HPP
