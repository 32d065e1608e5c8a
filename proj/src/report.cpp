#include "dsse/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dsse/io.hpp"

namespace dsse {

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    out.close();
    if (!out) throw Error("write failed: " + path.string());
}

std::string series_csv(const RunReport& r, const std::vector<std::vector<double>>& data) {
    std::ostringstream out;
    out << "step,trial";
    for (Method m : r.methods) out << ',' << to_string(m);
    out << '\n';
    for (int s = 0; s < r.horizon; ++s) {
        for (int t = 0; t < r.trials; ++t) {
            const auto job = static_cast<std::size_t>(s) * static_cast<std::size_t>(r.trials) +
                             static_cast<std::size_t>(t);
            out << s << ',' << t;
            for (const auto& col : data) {
                out << ',';
                if (!std::isnan(col[job])) out << format_double(col[job]);
            }
            out << '\n';
        }
    }
    return out.str();
}

nlohmann::json stats_json(const SummaryStats& s) {
    auto num = [](double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
    return {{"median", num(s.median)}, {"mean", num(s.mean)}, {"q1", num(s.q1)}, {"q3", num(s.q3)},
            {"min", num(s.min)},       {"max", num(s.max)},   {"count", s.count}};
}

std::string fmt(double x) {
    std::ostringstream o;
    o.precision(6);
    o << x;
    return o.str();
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string boxplot_svg(const std::string& title, const std::string& y_label,
                        const std::vector<BoxSeries>& series, bool log_scale) {
    constexpr double width_per_box = 90.0;
    constexpr double left = 80.0, right = 20.0, top = 40.0, bottom = 50.0, plot_h = 300.0;
    const double plot_w = width_per_box * static_cast<double>(std::max<std::size_t>(series.size(), 1));
    const double w = left + plot_w + right;
    const double h = top + plot_h + bottom;

    double lo = INFINITY, hi = -INFINITY;
    for (const auto& b : series) {
        if (b.stats.count == 0) continue;
        lo = std::min(lo, b.stats.min);
        hi = std::max(hi, b.stats.max);
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (log_scale) {
        lo = std::log10(std::max(lo, 1e-300));
        hi = std::log10(std::max(hi, 1e-300));
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto y = [&](double v) {
        const double t = log_scale ? std::log10(std::max(v, 1e-300)) : v;
        return top + plot_h * (hi - t) / (hi - lo);
    };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << fmt(w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";
    o << "<text transform=\"translate(16," << fmt(top + plot_h / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(y_label) << "</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double t = lo + (hi - lo) * k / 4.0;
        const double v = log_scale ? std::pow(10.0, t) : t;
        const double yy = top + plot_h * (hi - t) / (hi - lo);
        o << "<line x1=\"" << left - 4 << "\" y1=\"" << fmt(yy) << "\" x2=\"" << left << "\" y2=\"" << fmt(yy)
          << "\" stroke=\"black\"/>";
        o << "<text x=\"" << left - 6 << "\" y=\"" << fmt(yy + 4) << "\" text-anchor=\"end\">" << fmt(v)
          << "</text>\n";
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& b = series[i];
        const double cx = left + width_per_box * (static_cast<double>(i) + 0.5);
        const double half = width_per_box * 0.3;
        o << "<g class=\"box\" data-label=\"" << escape(b.label) << "\">\n";
        if (b.stats.count > 0) {
            const auto& s = b.stats;
            o << "  <line class=\"whisker\" x1=\"" << fmt(cx) << "\" y1=\"" << fmt(y(s.max)) << "\" x2=\""
              << fmt(cx) << "\" y2=\"" << fmt(y(s.min)) << "\" stroke=\"black\"/>\n";
            o << "  <rect class=\"quartiles\" x=\"" << fmt(cx - half) << "\" y=\"" << fmt(y(s.q3))
              << "\" width=\"" << fmt(2 * half) << "\" height=\"" << fmt(std::max(y(s.q1) - y(s.q3), 0.5))
              << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
            o << "  <line class=\"median\" x1=\"" << fmt(cx - half) << "\" y1=\"" << fmt(y(s.median))
              << "\" x2=\"" << fmt(cx + half) << "\" y2=\"" << fmt(y(s.median))
              << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
            o << "  <circle class=\"mean\" cx=\"" << fmt(cx) << "\" cy=\"" << fmt(y(s.mean))
              << "\" r=\"4\" fill=\"none\" stroke=\"black\"/>\n";
        }
        o << "  <text x=\"" << fmt(cx) << "\" y=\"" << fmt(top + plot_h + 20) << "\" text-anchor=\"middle\">"
          << escape(b.label) << "</text>\n";
        o << "</g>\n";
    }
    o << "</svg>\n";
    return o.str();
}

nlohmann::json summary_json(const RunReport& r) {
    nlohmann::json j;
    j["horizon"] = r.horizon;
    j["trials"] = r.trials;
    j["threads"] = r.threads;
    j["failed"] = r.failed;
    j["complete"] = r.complete();
    j["errors"] = r.errors;
    j["timing_definitions"] = {
        {"prior", "offline prior solve of the step's hour (power flow plus covariance)"},
        {"post", "online complex linear update only; prior precomputed"},
        {"postNL", "online rectangular mixed update only; prior precomputed"},
        {"WLS", "full subspace Newton-WLS solve with pseudo and phasor measurements"},
        {"WLSNL", "full subspace Newton-WLS solve with pseudo, phasor and magnitude measurements"},
    };
    auto methods = nlohmann::json::array();
    for (Method m : r.methods) {
        methods.push_back({{"method", to_string(m)},
                           {"not_converged", r.not_converged.empty() ? 0 : r.not_converged[r.method_index(m)]},
                           {"nrmse", stats_json(r.nrmse_stats(m))},
                           {"seconds", stats_json(r.timing_stats(m))}});
    }
    j["methods"] = std::move(methods);
    return j;
}

void emit_report(const RunReport& r, const std::filesystem::path& dir, const nlohmann::json& extra) {
    if (r.methods.empty()) throw ConfigError("report has no methods");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());

    write_file(dir / "nrmse.csv", series_csv(r, r.nrmse));
    write_file(dir / "timing.csv", series_csv(r, r.seconds));

    nlohmann::json summary = summary_json(r);
    for (const auto& [k, v] : extra.items()) summary[k] = v;
    write_file(dir / "summary.json", summary.dump(2) + "\n");

    std::vector<BoxSeries> err, secs;
    for (Method m : r.methods) {
        err.push_back({to_string(m), r.nrmse_stats(m)});
        secs.push_back({to_string(m), r.timing_stats(m)});
    }
    write_file(dir / "nrmse.svg", boxplot_svg("Voltage estimation error", "nRMSE", err));
    write_file(dir / "timing.svg", boxplot_svg("Wall-clock time per estimate", "seconds (log scale)", secs, true));
}

}  // namespace dsse
