#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsse/estimator.hpp"
#include "dsse/grid.hpp"
#include "dsse/measurement.hpp"

namespace dsse {

enum class Method { prior, post, post_nl, wls, wls_nl };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct ScenarioConfig {
    std::filesystem::path network;
    std::filesystem::path plan;
    int horizon = 96;
    int step_minutes = 15;
    double sigma_pseudo = 0.5;
    double sigma_meas = 0.01;
    int trials = 1;
    std::uint64_t seed = 1;
    std::vector<Method> methods{Method::prior, Method::post, Method::post_nl, Method::wls, Method::wls_nl};
    std::filesystem::path output_dir = "out";
    NoiseModel noise = NoiseModel::linearized;
    RectCovarianceForm rect_form = RectCovarianceForm::coupled;
    SolverConfig solver;

    // Throws ConfigError.
    void validate() const;
};

// Relative paths inside the file resolve against the file's directory.
ScenarioConfig parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);

// Residential two-peak daily curve, 24 hourly factors with mean 1.
const std::array<double, 24>& daily_shape();

// Hourly mean injections (the pseudo-measurements) and the per-step truth
// generator: truth = mean + Re(mean) w_re + j Im(mean) w_im, w ~ N(0, sigma^2),
// drawn from a stream keyed by (seed, step, trial).
struct LoadProfile {
    int horizon = 0;
    int step_minutes = 15;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    std::vector<CVector> hourly;  // 24 entries

    int hour_of(int step) const { return (step * step_minutes / 60) % 24; }
    const CVector& pseudo(int step) const { return hourly.at(static_cast<std::size_t>(hour_of(step))); }
    CVector truth(int step, int trial) const;
};

LoadProfile generate_profiles(const NetworkModel& net, int horizon, double sigma_pseudo, std::uint64_t seed,
                              int step_minutes = 15);

// (1/|v_base|) sqrt(mean |v_est - v_true|^2)
double nrmse(const CVector& v_est, const CVector& v_true, double v_base = 1.0);

struct SummaryStats {
    double median = 0.0;
    double mean = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;

    double iqr() const { return q3 - q1; }
};

// Failed entries (NaN) are skipped. Quartiles interpolate linearly between order statistics.
SummaryStats summarize(const std::vector<double>& xs);

enum class Execution { serial, parallel };

struct RunReport {
    std::vector<Method> methods;
    int horizon = 0;
    int trials = 0;
    // [method][step * trials + trial]; NaN where the step failed
    std::vector<std::vector<double>> nrmse;
    std::vector<std::vector<double>> seconds;
    std::vector<std::string> errors;  // one entry per failed (step, trial)
    std::size_t failed = 0;
    // per method: estimates taken at the iteration limit (WLS variants)
    std::vector<std::size_t> not_converged;
    // Prior solve time per hour, the offline cost excluded from the post timings.
    std::vector<double> offline_seconds;
    int threads = 1;

    bool complete() const { return failed == 0; }
    std::size_t method_index(Method m) const;
    SummaryStats nrmse_stats(Method m) const;
    SummaryStats timing_stats(Method m) const;
};

RunReport run_scenario(const ScenarioConfig& cfg, Execution exec = Execution::parallel);
RunReport run_scenario(const Grid& grid, const MeasurementPlan& plan, const ScenarioConfig& cfg,
                       Execution exec = Execution::parallel);

}  // namespace dsse
