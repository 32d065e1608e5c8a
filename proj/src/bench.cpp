#include "dsse/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <omp.h>

#include "dsse/rng.hpp"

namespace dsse {

namespace {

constexpr std::array<std::pair<Method, const char*>, 5> kMethodNames{{
    {Method::prior, "prior"},
    {Method::post, "post"},
    {Method::post_nl, "postNL"},
    {Method::wls, "WLS"},
    {Method::wls_nl, "WLSNL"},
}};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool needs(const std::vector<Method>& ms, Method m) {
    return std::find(ms.begin(), ms.end(), m) != ms.end();
}

// Offline products for one hour of the day.
struct HourPrior {
    PseudoMeasurements pseudo;
    StateEstimate complex_prior;
    StateEstimate rect_prior;
    std::string error;
};

}  // namespace

std::string to_string(Method m) {
    for (const auto& [k, name] : kMethodNames) {
        if (k == m) return name;
    }
    return "?";
}

Method parse_method(const std::string& s) {
    for (const auto& [k, name] : kMethodNames) {
        if (s == name) return k;
    }
    throw ConfigError("unknown method '" + s + "' (expected prior, post, postNL, WLS or WLSNL)");
}

void ScenarioConfig::validate() const {
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (step_minutes < 1) throw ConfigError("step_minutes must be >= 1");
    if (!(sigma_pseudo > 0.0)) throw ConfigError("sigma_pseudo must be > 0");
    if (!(sigma_meas > 0.0)) throw ConfigError("sigma_meas must be > 0");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (methods.empty()) throw ConfigError("methods must not be empty");
    for (std::size_t i = 0; i < methods.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (methods[i] == methods[j]) throw ConfigError("method " + to_string(methods[i]) + " listed twice");
        }
    }
    try {
        solver.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

ScenarioConfig parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    ScenarioConfig cfg;
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    try {
        if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
        static const char* known[] = {"network", "plan", "horizon", "step_minutes", "sigma_pseudo", "sigma_meas",
                                      "trials", "seed", "methods", "output_dir", "noise_model", "rect_covariance",
                                      "solver"};
        for (const auto& [key, _] : j.items()) {
            if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
                std::end(known)) {
                throw ConfigError("unknown scenario key '" + key + "'");
            }
        }
        cfg.network = resolve(j.at("network").get<std::string>());
        cfg.plan = resolve(j.at("plan").get<std::string>());
        cfg.horizon = j.value("horizon", cfg.horizon);
        cfg.step_minutes = j.value("step_minutes", cfg.step_minutes);
        cfg.sigma_pseudo = j.value("sigma_pseudo", cfg.sigma_pseudo);
        cfg.sigma_meas = j.value("sigma_meas", cfg.sigma_meas);
        cfg.trials = j.value("trials", cfg.trials);
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("methods")) {
            cfg.methods.clear();
            for (const auto& m : j.at("methods")) cfg.methods.push_back(parse_method(m.get<std::string>()));
        }
        if (j.contains("output_dir")) cfg.output_dir = resolve(j.at("output_dir").get<std::string>());
        const std::string noise = j.value("noise_model", std::string("linearized"));
        if (noise == "linearized") {
            cfg.noise = NoiseModel::linearized;
        } else if (noise == "polar") {
            cfg.noise = NoiseModel::polar;
        } else {
            throw ConfigError("noise_model must be 'linearized' or 'polar'");
        }
        const std::string form = j.value("rect_covariance", std::string("coupled"));
        if (form == "coupled") {
            cfg.rect_form = RectCovarianceForm::coupled;
        } else if (form == "circular") {
            cfg.rect_form = RectCovarianceForm::circular;
        } else {
            throw ConfigError("rect_covariance must be 'coupled' or 'circular'");
        }
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            cfg.solver.tol = s.value("tol", cfg.solver.tol);
            cfg.solver.max_iter = s.value("max_iter", cfg.solver.max_iter);
            cfg.solver.backtracking = s.value("backtracking", cfg.solver.backtracking);
            cfg.solver.max_halvings = s.value("max_halvings", cfg.solver.max_halvings);
            cfg.solver.covariance_at_solution = s.value("covariance_at_solution", false);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_scenario(j, path.parent_path());
}

const std::array<double, 24>& daily_shape() {
    static const std::array<double, 24> shape = [] {
        // night trough, morning peak around 8h, evening peak around 19h
        std::array<double, 24> raw{0.55, 0.50, 0.47, 0.46, 0.48, 0.56, 0.78, 1.02, 1.12, 1.00, 0.90, 0.88,
                                   0.92, 0.88, 0.84, 0.88, 1.02, 1.28, 1.50, 1.56, 1.44, 1.22, 0.96, 0.70};
        const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / 24.0;
        for (double& x : raw) x /= mean;
        return raw;
    }();
    return shape;
}

CVector LoadProfile::truth(int step, int trial) const {
    if (step < 0 || step >= horizon) throw DimensionError("profile step out of range");
    const auto seed_step = stream_seed(seed, {static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(trial),
                                              static_cast<std::uint64_t>(Stream::load)});
    return sample_pseudo(pseudo(step), sigma, seed_step).s;
}

LoadProfile generate_profiles(const NetworkModel& net, int horizon, double sigma_pseudo, std::uint64_t seed,
                              int step_minutes) {
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (sigma_pseudo < 0.0) throw ConfigError("sigma_pseudo must be >= 0");
    LoadProfile p;
    p.horizon = horizon;
    p.step_minutes = step_minutes;
    p.sigma = sigma_pseudo;
    p.seed = seed;
    const PhaseIndexMap index(net);
    const CVector base = base_injections(net, index);
    for (double f : daily_shape()) p.hourly.push_back(base * f);
    return p;
}

double nrmse(const CVector& v_est, const CVector& v_true, double v_base) {
    if (v_est.size() != v_true.size()) throw DimensionError("nrmse: length mismatch");
    if (v_est.size() == 0) throw DimensionError("nrmse: empty vectors");
    if (!(v_base > 0.0)) throw ConfigError("nrmse: v_base must be > 0");
    return std::sqrt((v_est - v_true).squaredNorm() / static_cast<double>(v_est.size())) / v_base;
}

SummaryStats summarize(const std::vector<double>& xs) {
    std::vector<double> v;
    v.reserve(xs.size());
    for (double x : xs) {
        if (!std::isnan(x)) v.push_back(x);
    }
    SummaryStats s;
    s.count = v.size();
    if (v.empty()) {
        s.median = s.mean = s.q1 = s.q3 = s.min = s.max = kNaN;
        return s;
    }
    std::sort(v.begin(), v.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    s.median = quantile(0.5);
    s.q1 = quantile(0.25);
    s.q3 = quantile(0.75);
    s.min = v.front();
    s.max = v.back();
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    return s;
}

std::size_t RunReport::method_index(Method m) const {
    for (std::size_t i = 0; i < methods.size(); ++i) {
        if (methods[i] == m) return i;
    }
    throw ConfigError("method " + to_string(m) + " not in report");
}

SummaryStats RunReport::nrmse_stats(Method m) const { return summarize(nrmse[method_index(m)]); }
SummaryStats RunReport::timing_stats(Method m) const { return summarize(seconds[method_index(m)]); }

RunReport run_scenario(const ScenarioConfig& cfg, Execution exec) {
    cfg.validate();
    auto grid = make_grid(load_network(cfg.network));
    MeasurementPlan plan = load_plan(cfg.plan, grid->network);
    return run_scenario(*grid, plan, cfg, exec);
}

RunReport run_scenario(const Grid& grid, const MeasurementPlan& plan_in, const ScenarioConfig& cfg,
                       Execution exec) {
    cfg.validate();
    MeasurementPlan plan = plan_in;
    plan.sigma_meas = cfg.sigma_meas;
    validate_plan(plan, grid.network);

    const AffineMap lin = build_linear_map(plan, grid.adm, grid.v_source);
    const AffineMap mag = build_magnitude_map(plan, grid.adm, grid.v_source);
    const CovarianceOptions cov_opts{cfg.rect_form};
    const LoadProfile profile = generate_profiles(grid.network, cfg.horizon, cfg.sigma_pseudo, cfg.seed,
                                                  cfg.step_minutes);
    const auto& ms = cfg.methods;
    if ((needs(ms, Method::post) || needs(ms, Method::wls)) && plan.num_linear() == 0) {
        throw ConfigError("post/WLS need at least one synchronized sensor");
    }

    RunReport rep;
    rep.methods = ms;
    rep.horizon = cfg.horizon;
    rep.trials = cfg.trials;
    const auto jobs = static_cast<std::size_t>(cfg.horizon) * static_cast<std::size_t>(cfg.trials);
    rep.nrmse.assign(ms.size(), std::vector<double>(jobs, kNaN));
    rep.seconds.assign(ms.size(), std::vector<double>(jobs, kNaN));

    // offline: one prior per hour that the horizon touches
    std::vector<HourPrior> hours(24);
    std::vector<bool> used(24, false);
    for (int s = 0; s < cfg.horizon; ++s) used[static_cast<std::size_t>(profile.hour_of(s))] = true;
    rep.offline_seconds.assign(24, kNaN);
    for (std::size_t h = 0; h < 24; ++h) {
        if (!used[h]) continue;
        HourPrior& hp = hours[h];
        hp.pseudo = PseudoMeasurements{profile.hourly[h], cfg.sigma_pseudo};
        const auto t0 = std::chrono::steady_clock::now();
        try {
            hp.complex_prior = fixed_point_power_flow(hp.pseudo, grid, cfg.solver);
            if (needs(ms, Method::post_nl)) hp.rect_prior = rect_fixed_point_power_flow(hp.pseudo, grid, cfg.solver);
            if (!hp.complex_prior.converged || (needs(ms, Method::post_nl) && !hp.rect_prior.converged)) {
                hp.error = "prior for hour " + std::to_string(h) + " did not converge";
            }
        } catch (const Error& e) {
            hp.error = "prior for hour " + std::to_string(h) + ": " + e.what();
        }
        rep.offline_seconds[h] = seconds_since(t0);
    }

    SolverConfig truth_cfg;
    truth_cfg.tol = 1e-12;
    truth_cfg.max_iter = 500;

    std::vector<std::string> job_error(jobs);
    std::vector<std::vector<char>> not_converged(ms.size(), std::vector<char>(jobs, 0));
    const bool parallel = exec == Execution::parallel;
    rep.threads = parallel ? omp_get_max_threads() : 1;

#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::size_t job = 0; job < jobs; ++job) {
        const int step = static_cast<int>(job / static_cast<std::size_t>(cfg.trials));
        const int trial = static_cast<int>(job % static_cast<std::size_t>(cfg.trials));
        const HourPrior& hp = hours[static_cast<std::size_t>(profile.hour_of(step))];
        const std::string where = "step " + std::to_string(step) + " trial " + std::to_string(trial) + ": ";
        if (!hp.error.empty()) {
            job_error[job] = where + hp.error;
            continue;
        }
        try {
            const StateEstimate truth =
                fixed_point_power_flow(PseudoMeasurements{profile.truth(step, trial), 0.0}, grid, truth_cfg);
            if (!truth.converged) throw NumericalError("truth power flow did not converge");
            const auto seed = stream_seed(cfg.seed, {static_cast<std::uint64_t>(step),
                                                     static_cast<std::uint64_t>(trial),
                                                     static_cast<std::uint64_t>(Stream::measurement)});
            const MeasurementFrame frame = simulate_frame(plan, lin, mag, truth.v, seed, cfg.noise,
                                                          static_cast<double>(step * cfg.step_minutes) * 60.0);
            MeasurementFrame linear_frame = frame;
            linear_frame.magnitude.resize(0);

            std::vector<double> err(ms.size());
            std::vector<double> secs(ms.size());
            std::vector<char> flags(ms.size(), 0);
            for (std::size_t k = 0; k < ms.size(); ++k) {
                const auto t0 = std::chrono::steady_clock::now();
                CVector v;
                switch (ms[k]) {
                    case Method::prior:
                        v = hp.complex_prior.v;
                        break;
                    case Method::post: {
                        const MeasurementCovariances c =
                            measurement_covariances(plan.sigma_meas, frame.linear, RVector(), cov_opts);
                        v = linear_update_complex(grid, hp.complex_prior, lin, frame.linear, c.linear).posterior.v;
                        break;
                    }
                    case Method::post_nl: {
                        const MeasurementCovariances c = measurement_covariances(plan, frame, cov_opts);
                        v = mixed_update_rect(grid, hp.rect_prior, lin, mag, frame, c).posterior.v;
                        break;
                    }
                    case Method::wls:
                    case Method::wls_nl: {
                        const bool nl = ms[k] == Method::wls_nl;
                        const MeasurementFrame& f = nl ? frame : linear_frame;
                        const StackedMeasurements z = stack_measurements(grid, hp.pseudo, &plan, &f, cov_opts);
                        const StackedModel model(grid, z.pseudo_index, lin, nl ? mag : AffineMap{});
                        const StateEstimate est = wls_subspace(z, model, grid.rect_basis, cfg.solver);
                        // flagged, not fatal: the iterate at the limit is still an estimate
                        if (!est.converged) flags[k] = 1;
                        v = est.v;
                        break;
                    }
                }
                // the prior is offline: report the solve time of its hour
                secs[k] = ms[k] == Method::prior ? rep.offline_seconds[static_cast<std::size_t>(profile.hour_of(step))]
                                                 : seconds_since(t0);
                err[k] = nrmse(v, truth.v);
            }
            for (std::size_t k = 0; k < ms.size(); ++k) {
                rep.nrmse[k][job] = err[k];
                rep.seconds[k][job] = secs[k];
                not_converged[k][job] = flags[k];
            }
        } catch (const std::exception& e) {
            job_error[job] = where + e.what();
        }
    }

    rep.not_converged.assign(ms.size(), 0);
    for (std::size_t k = 0; k < ms.size(); ++k) {
        for (char c : not_converged[k]) rep.not_converged[k] += static_cast<std::size_t>(c);
    }
    for (const std::string& e : job_error) {
        if (e.empty()) continue;
        rep.errors.push_back(e);
        ++rep.failed;
    }
    return rep;
}

}  // namespace dsse
