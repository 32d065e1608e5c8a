// dsse: command-line front end for the two-step state estimator.
#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dsse/bench.hpp"
#include "dsse/estimator.hpp"
#include "dsse/feeder.hpp"
#include "dsse/io.hpp"
#include "dsse/prior.hpp"
#include "dsse/report.hpp"
#include "dsse/rng.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kNumerical = 2, kPartial = 3 };

using namespace dsse;

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    return out;
}

CVector loads_or_base(const NetworkModel& net, const PhaseIndexMap& index, const std::string& loads) {
    return loads.empty() ? base_injections(net, index) : read_loads(loads, index);
}

int cmd_run(const std::string& config, const std::string& out_dir, bool serial) {
    ScenarioConfig cfg = load_scenario(config);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    const auto t0 = std::chrono::steady_clock::now();
    const RunReport rep = run_scenario(cfg, serial ? Execution::serial : Execution::parallel);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json extra;
    extra["scenario"] = {{"network", cfg.network.string()},
                         {"plan", cfg.plan.string()},
                         {"horizon", cfg.horizon},
                         {"step_minutes", cfg.step_minutes},
                         {"trials", cfg.trials},
                         {"sigma_pseudo", cfg.sigma_pseudo},
                         {"sigma_meas", cfg.sigma_meas},
                         {"seed", cfg.seed}};
    extra["wall_seconds"] = wall;
    emit_report(rep, cfg.output_dir, extra);

    std::cout << "method   median_nrmse   mean_nrmse     median_s\n";
    for (Method m : rep.methods) {
        const auto e = rep.nrmse_stats(m);
        const auto t = rep.timing_stats(m);
        std::printf("%-8s %-14.6g %-14.6g %-.4g\n", to_string(m).c_str(), e.median, e.mean, t.median);
    }
    std::cout << "wrote " << cfg.output_dir.string() << " (" << wall << " s)\n";
    for (std::size_t k = 0; k < rep.methods.size(); ++k) {
        if (rep.not_converged[k] > 0) {
            std::cerr << to_string(rep.methods[k]) << ": " << rep.not_converged[k]
                      << " estimate(s) stopped at the iteration limit\n";
        }
    }
    for (const std::string& e : rep.errors) std::cerr << "failed: " << e << '\n';
    return rep.complete() ? kOk : kPartial;
}

int cmd_pf(const std::string& network, const std::string& loads, const std::string& out, double tol, int max_iter) {
    auto grid = make_grid(load_network(network));
    const CVector s = loads_or_base(grid->network, grid->adm.index(), loads);
    SolverConfig cfg;
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    const StateEstimate est = fixed_point_power_flow(PseudoMeasurements{s, 0.0}, *grid, cfg);
    std::cerr << "iterations " << est.iterations << ", feasibility " << est.feasibility
              << (est.converged ? "" : ", NOT converged") << '\n';
    if (out.empty()) {
        write_estimate(std::cout, 0.0, grid->adm.index(), est);
    } else {
        auto f = open_out(out);
        write_estimate(f, 0.0, grid->adm.index(), est);
    }
    return est.converged ? kOk : kNumerical;
}

int cmd_prior(const std::string& network, const std::string& loads, double sigma, const std::string& method,
              const std::string& out) {
    auto grid = make_grid(load_network(network));
    const PseudoMeasurements pseudo{loads_or_base(grid->network, grid->adm.index(), loads), sigma};
    StateEstimate est;
    if (method == "fixed-point") {
        est = fixed_point_power_flow(pseudo, *grid);
    } else if (method == "fixed-point-rect") {
        est = rect_fixed_point_power_flow(pseudo, *grid);
    } else if (method == "wls") {
        est = wls_prior(pseudo, *grid);
    } else {
        throw ConfigError("unknown prior method '" + method + "'");
    }
    std::cerr << "iterations " << est.iterations << ", feasibility " << est.feasibility
              << (est.converged ? "" : ", NOT converged") << '\n';
    if (!est.converged) return kNumerical;
    save_prior_artifact(PriorArtifact{est, network_hash(grid->network), sigma}, out);
    return kOk;
}

int cmd_update(const std::string& network, const std::string& plan_path, const std::string& prior_path,
               const std::string& frames_path, const std::string& out) {
    auto grid = make_grid(load_network(network));
    const MeasurementPlan plan = load_plan(plan_path, grid->network);
    const PriorArtifact prior = load_prior_artifact(prior_path);
    if (prior.network_hash != network_hash(grid->network)) {
        throw ConfigError("prior artifact was computed for a different network (hash " + prior.network_hash + ")");
    }
    if (prior.estimate.v.size() != grid->num_states()) throw ConfigError("prior size does not match network");
    const auto frames = read_frames(frames_path, plan);
    const AffineMap lin = build_linear_map(plan, grid->adm, grid->v_source);
    const AffineMap mag = build_magnitude_map(plan, grid->adm, grid->v_source);

    std::ofstream file;
    if (!out.empty()) file = open_out(out);
    std::ostream& os = out.empty() ? std::cout : file;
    bool header = true;
    for (const MeasurementFrame& f : frames) {
        const MeasurementCovariances cov = measurement_covariances(plan, f);
        UpdateResult r;
        if (prior.estimate.rep == Representation::rectangular) {
            r = mixed_update_rect(*grid, prior.estimate, lin, mag, f, cov);
        } else {
            if (plan.num_nonlinear() > 0) {
                throw ConfigError("plan has magnitude-only sensors; the complex update needs a rectangular prior");
            }
            r = linear_update_complex(*grid, prior.estimate, lin, f.linear, cov.linear);
        }
        for (const std::string& w : r.warnings) std::cerr << "t=" << f.t << ": " << w << '\n';
        write_estimate(os, f.t, grid->adm.index(), r.posterior, header);
        header = false;
    }
    return kOk;
}

int cmd_simulate(const std::string& network, const std::string& plan_path, const std::string& loads,
                 std::uint64_t seed, int count, const std::string& noise, const std::string& out,
                 const std::string& truth_out) {
    auto grid = make_grid(load_network(network));
    const MeasurementPlan plan = load_plan(plan_path, grid->network);
    SolverConfig cfg;
    cfg.tol = 1e-12;
    cfg.max_iter = 500;
    const CVector s = loads_or_base(grid->network, grid->adm.index(), loads);
    const StateEstimate truth = fixed_point_power_flow(PseudoMeasurements{s, 0.0}, *grid, cfg);
    if (!truth.converged) throw NumericalError("power flow for the simulated truth did not converge");
    const NoiseModel model = noise == "polar" ? NoiseModel::polar : NoiseModel::linearized;
    if (noise != "polar" && noise != "linearized") throw ConfigError("noise must be linearized or polar");
    const AffineMap lin = build_linear_map(plan, grid->adm, grid->v_source);
    const AffineMap mag = build_magnitude_map(plan, grid->adm, grid->v_source);
    std::vector<MeasurementFrame> frames;
    for (int k = 0; k < count; ++k) {
        frames.push_back(simulate_frame(plan, lin, mag, truth.v,
                                        stream_seed(seed, {static_cast<std::uint64_t>(k),
                                                           static_cast<std::uint64_t>(Stream::measurement)}),
                                        model, k));
    }
    if (out.empty()) {
        write_frames(std::cout, plan, frames);
    } else {
        auto f = open_out(out);
        write_frames(f, plan, frames);
    }
    if (!truth_out.empty()) {
        auto f = open_out(truth_out);
        write_estimate(f, 0.0, grid->adm.index(), truth);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-step state estimation for unbalanced distribution networks"};
    app.require_subcommand(1);

    std::string config, out_dir;
    bool serial = false;
    auto* run = app.add_subcommand("run", "run a Monte-Carlo scenario and write the report");
    run->add_option("--config", config, "scenario JSON")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory (overrides the scenario)");
    run->add_flag("--serial", serial, "run trials on one thread");

    std::string network, loads, out, plan, prior_path, frames, method = "fixed-point", noise = "linearized",
                                                                 truth_out;
    double tol = 1e-8, sigma = 0.5;
    int max_iter = 50, count = 1;
    std::uint64_t seed = 1;

    auto* pf = app.add_subcommand("pf", "solve the power flow for given loads");
    pf->add_option("--network", network, "network JSON")->required()->check(CLI::ExistingFile);
    pf->add_option("--loads", loads, "loads CSV (bus,phase,p_pu,q_pu); base loads if omitted")
        ->check(CLI::ExistingFile);
    pf->add_option("--out", out, "estimate CSV (stdout if omitted)");
    pf->add_option("--tol", tol, "relative step tolerance");
    pf->add_option("--max-iter", max_iter, "iteration limit");

    auto* pr = app.add_subcommand("prior", "compute the offline prior and save it as an artifact");
    pr->add_option("--network", network, "network JSON")->required()->check(CLI::ExistingFile);
    pr->add_option("--loads", loads, "pseudo-load CSV; base loads if omitted")->check(CLI::ExistingFile);
    pr->add_option("--sigma-pseudo", sigma, "relative pseudo-measurement std")->check(CLI::PositiveNumber);
    pr->add_option("--method", method, "fixed-point | fixed-point-rect | wls")
        ->check(CLI::IsMember({"fixed-point", "fixed-point-rect", "wls"}));
    pr->add_option("--out", out, "artifact path")->required();

    auto* up = app.add_subcommand("update", "fuse measurement frames into a prior artifact");
    up->add_option("--network", network, "network JSON")->required()->check(CLI::ExistingFile);
    up->add_option("--plan", plan, "measurement plan JSON")->required()->check(CLI::ExistingFile);
    up->add_option("--prior", prior_path, "prior artifact")->required()->check(CLI::ExistingFile);
    up->add_option("--frames", frames, "frames CSV (t,sensor_id,re,im)")->required()->check(CLI::ExistingFile);
    up->add_option("--out", out, "estimate CSV (stdout if omitted)");

    std::string feeder_in;
    auto* cf = app.add_subcommand("convert-feeder", "convert feeder tables to network JSON");
    cf->add_option("--in", feeder_in, "feeder directory")->required()->check(CLI::ExistingDirectory);
    cf->add_option("--out", out, "network JSON")->required();

    auto* sim = app.add_subcommand("simulate", "simulate measurement frames for given loads");
    sim->add_option("--network", network, "network JSON")->required()->check(CLI::ExistingFile);
    sim->add_option("--plan", plan, "measurement plan JSON")->required()->check(CLI::ExistingFile);
    sim->add_option("--loads", loads, "loads CSV; base loads if omitted")->check(CLI::ExistingFile);
    sim->add_option("--seed", seed, "random seed");
    sim->add_option("--count", count, "number of frames")->check(CLI::PositiveNumber);
    sim->add_option("--noise", noise, "linearized | polar")->check(CLI::IsMember({"linearized", "polar"}));
    sim->add_option("--out", out, "frames CSV (stdout if omitted)");
    sim->add_option("--truth", truth_out, "also write the true voltages as estimate CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*run) return cmd_run(config, out_dir, serial);
        if (*pf) return cmd_pf(network, loads, out, tol, max_iter);
        if (*pr) return cmd_prior(network, loads, sigma, method, out);
        if (*up) return cmd_update(network, plan, prior_path, frames, out);
        if (*cf) {
            save_network(convert_feeder(feeder_in), out);
            return kOk;
        }
        if (*sim) return cmd_simulate(network, plan, loads, seed, count, noise, out, truth_out);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    }
    return kOk;
}
