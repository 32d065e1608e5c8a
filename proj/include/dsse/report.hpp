#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsse/bench.hpp"

namespace dsse {

struct BoxSeries {
    std::string label;
    SummaryStats stats;
};

// Vertical box plot: whiskers at min/max, box at the quartiles, median line,
// mean marker. One <g class="box"> per series, in the given order.
std::string boxplot_svg(const std::string& title, const std::string& y_label,
                        const std::vector<BoxSeries>& series, bool log_scale = false);

// Writes nrmse.csv, timing.csv, summary.json, nrmse.svg and timing.svg into dir.
// `extra` is merged into summary.json (e.g. the scenario settings).
void emit_report(const RunReport& report, const std::filesystem::path& dir,
                 const nlohmann::json& extra = nlohmann::json::object());

nlohmann::json summary_json(const RunReport& report);

}  // namespace dsse
