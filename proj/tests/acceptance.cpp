// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <unistd.h>

#include "common.hpp"
#include "dsse/bench.hpp"
#include "dsse/estimator.hpp"
#include "dsse/report.hpp"

using namespace dsse;
using namespace testing_util;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

char buf[512];

template <typename... Args>
std::string fmt(const char* f, Args... args) {
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

MeasurementPlan plan_for(const std::shared_ptr<const Grid>& g) {
    const auto name = g == toy_grid() ? "toy.json" : "ieee123.json";
    return load_plan(data_dir() / "plans" / name, g->network);
}

double inf_norm(const CMatrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

Outcome kernel() {
    const auto t0 = Clock::now();
    const auto g = make_grid(load_network(data_dir() / "ieee123.json"));
    const double secs = since(t0);
    const CMatrix& f = g->basis.basis;
    const double ker = inf_norm(constrained_rows(g->adm, g->eps) * f);
    const double orth = inf_norm(f.adjoint() * f - CMatrix::Identity(f.cols(), f.cols()));
    return {ker < 1e-10 && orth < 1e-12 && secs < 5.0,
            fmt("|Y_eps F|=%.2e |F*F-I|=%.2e (%zu constraints, dim %ld) in %.2fs", ker, orth, g->eps.size(),
                static_cast<long>(f.cols()), secs)};
}

Outcome power_flow() {
    const auto g = ieee_grid();
    const CVector s = base_injections(g->network, g->adm.index());
    SolverConfig cfg;
    cfg.tol = 1e-10;
    cfg.record_iterates = true;
    const StateEstimate est = fixed_point_power_flow(PseudoMeasurements{s, 0.5}, *g, cfg);
    const CVector sv = compute_injections(g->adm, g->v_source, est.v).power;
    std::vector<bool> constrained(static_cast<std::size_t>(g->num_states()), false);
    for (std::size_t k : g->eps) constrained[k] = true;
    double resid = 0.0;
    for (Index i = 0; i < s.size(); ++i) {
        if (!constrained[static_cast<std::size_t>(i)]) resid = std::max(resid, std::abs(sv[i] - s[i]));
    }
    double worst_i = 0.0;
    for (const CVector& v : est.iterates) worst_i = std::max(worst_i, g->feasibility(v));
    return {est.converged && est.iterations <= 30 && resid < 1e-8 && worst_i < 1e-10,
            fmt("%d iterations, |S(V)-s|=%.2e, max |I_eps| over %zu iterates=%.2e", est.iterations, resid,
                est.iterates.size(), worst_i)};
}

struct UpdateChecks {
    double max_diff = 0.0;
    double max_feas = 0.0;
    double min_eig_post = 0.0;
    bool trace_ok = true;
    int runs = 0;
};

// 100 random (prior, frame) pairs, half on each network.
UpdateChecks random_updates() {
    UpdateChecks out;
    std::mt19937_64 gen(20240);
    for (const auto& g : {toy_grid(), ieee_grid()}) {
        const AffineMap c = build_linear_map(plan_for(g), g->adm, g->v_source);
        for (int t = 0; t < 50; ++t) {
            StateEstimate prior;
            prior.v = random_feasible(*g, gen, 0.02);
            prior.cov = random_feasible_cov(*g, gen, 3e-3);
            const CVector truth = random_feasible(*g, gen, 0.02);
            std::normal_distribution<double> nd(0.0, 0.01);
            CVector z = c.evaluate(truth);
            for (Index i = 0; i < z.size(); ++i) z[i] *= cplx(1.0 + nd(gen), nd(gen));
            const RVector var = measurement_covariances(0.01, z, RVector()).linear;
            const UpdateResult a = linear_update_complex(*g, prior, c, z, var);
            const UpdateResult b = subspace_wls_update(*g, prior, c, z, var);
            out.max_diff = std::max(out.max_diff, (a.posterior.v - b.posterior.v).cwiseAbs().maxCoeff());
            out.max_feas = std::max({out.max_feas, a.posterior.feasibility, b.posterior.feasibility});
            out.min_eig_post = std::min({out.min_eig_post, min_eig(a.posterior.cov), min_eig(b.posterior.cov)});
            out.trace_ok = out.trace_ok && a.posterior.cov.trace().real() <= prior.cov.trace().real();
            ++out.runs;
        }
    }
    return out;
}

Outcome jacobian() {
    std::mt19937_64 gen(77);
    double worst = 0.0;
    int points = 0;
    for (const auto& g : {toy_grid(), ieee_grid()}) {
        const AffineMap mag = build_magnitude_map(plan_for(g), g->adm, g->v_source);
        for (int p = 0; p < 50; ++p, ++points) {
            const RVector x = stack_rect(random_feasible(*g, gen, 0.05));
            const RMatrix j = nonlinear_jacobian(mag, x);
            RMatrix fd(j.rows(), j.cols());
            for (Index k = 0; k < x.size(); ++k) {
                RVector xp = x, xm = x;
                xp[k] += 1e-6;
                xm[k] -= 1e-6;
                fd.col(k) = (eval_nonlinear(mag, unstack_rect(xp)) - eval_nonlinear(mag, unstack_rect(xm))) / 2e-6;
            }
            worst = std::max(worst, (fd - j).cwiseAbs().maxCoeff() / j.cwiseAbs().maxCoeff());
        }
    }
    return {worst < 1e-5, fmt("max relative error %.2e over %d points", worst, points)};
}

Outcome covariances(const UpdateChecks& u) {
    double worst = u.min_eig_post;
    bool trace_ok = u.trace_ok;
    int count = 2 * u.runs;
    for (const auto& g : {toy_grid(), ieee_grid()}) {
        const MeasurementPlan plan = plan_for(g);
        const PseudoMeasurements pseudo{base_injections(g->network, g->adm.index()), 0.5};
        const StateEstimate cp = fixed_point_power_flow(pseudo, *g);
        const StateEstimate rp = rect_fixed_point_power_flow(pseudo, *g);
        const StateEstimate wp = wls_prior(pseudo, *g);
        worst = std::min({worst, min_eig(cp.cov), min_eig(rp.cov_rect), min_eig(wp.cov_rect)});
        count += 3;
        const AffineMap lin = build_linear_map(plan, g->adm, g->v_source);
        const AffineMap mag = build_magnitude_map(plan, g->adm, g->v_source);
        const StateEstimate truth = fixed_point_power_flow(
            PseudoMeasurements{sample_pseudo(pseudo.s, 0.5, 9).s, 0.0}, *g);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const MeasurementFrame f = simulate_frame(plan, lin, mag, truth.v, seed);
            const auto cov = measurement_covariances(plan, f);
            const UpdateResult lu = linear_update_complex(*g, cp, lin, f.linear, cov.linear);
            const UpdateResult mu = mixed_update_rect(*g, rp, lin, mag, f, cov);
            worst = std::min({worst, min_eig(lu.posterior.cov), min_eig(mu.posterior.cov_rect)});
            trace_ok = trace_ok && lu.posterior.cov.trace().real() <= cp.cov.trace().real() &&
                       mu.posterior.cov_rect.trace() <= rp.cov_rect.trace();
            count += 2;
        }
    }
    return {worst > -1e-10 && trace_ok,
            fmt("min eigenvalue %.2e over %d covariances, trace non-increasing: %s", worst, count,
                trace_ok ? "yes" : "no")};
}

Outcome scenario_accuracy(const RunReport& r, double secs) {
    const auto prior = r.nrmse_stats(Method::prior);
    const auto post = r.nrmse_stats(Method::post);
    const auto post_nl = r.nrmse_stats(Method::post_nl);
    const auto wls = r.nrmse_stats(Method::wls);
    const auto wls_nl = r.nrmse_stats(Method::wls_nl);
    const bool a = post.median < 0.5 * prior.median;
    const bool b = std::abs(post.median - wls.median) < 0.2 * wls.iqr();
    const bool c = post_nl.median < 0.5 * prior.median;
    const bool d = std::abs(post_nl.median - wls_nl.median) < 0.2 * wls_nl.iqr();
    return {r.complete() && a && b && c && d && secs < 600.0,
            fmt("median prior %.3e post %.3e WLS %.3e (|d|=%.2e vs 0.2 IQR %.2e) postNL %.3e WLSNL %.3e "
                "(|d|=%.2e vs %.2e), %zu failed, %.0fs",
                prior.median, post.median, wls.median, std::abs(post.median - wls.median), 0.2 * wls.iqr(),
                post_nl.median, wls_nl.median, std::abs(post_nl.median - wls_nl.median), 0.2 * wls_nl.iqr(),
                r.failed, secs)};
}

Outcome timing(const RunReport& r) {
    const double post = r.timing_stats(Method::post).median;
    const double post_nl = r.timing_stats(Method::post_nl).median;
    const double wls = r.timing_stats(Method::wls).median;
    const double wls_nl = r.timing_stats(Method::wls_nl).median;
    return {5.0 * post <= wls && 5.0 * post_nl <= wls_nl,
            fmt("median s: post %.2e vs WLS %.2e (x%.1f), postNL %.2e vs WLSNL %.2e (x%.1f)", post, wls, wls / post,
                post_nl, wls_nl, wls_nl / post_nl)};
}

// Exact polar noise against its linearization, driven by the same draws.
Outcome noise_model() {
    const double sigma = 0.01;
    const int draws = 100000;
    double worst_mean = 0.0, worst_cov = 0.0;
    for (const cplx u : {cplx(1.0, 0.0), cplx(-0.5, -0.87), cplx(0.03, 0.2)}) {
        std::mt19937_64 ga(5), gb(5);
        Eigen::Vector2d mp = Eigen::Vector2d::Zero(), ml = mp;
        Eigen::Matrix2d cp = Eigen::Matrix2d::Zero(), cl = cp;
        std::vector<Eigen::Vector2d> xp(draws), xl(draws);
        for (int k = 0; k < draws; ++k) {
            const cplx p = noisy_phasor(u, sigma, NoiseModel::polar, ga);
            const cplx l = noisy_phasor(u, sigma, NoiseModel::linearized, gb);
            xp[static_cast<std::size_t>(k)] = {p.real(), p.imag()};
            xl[static_cast<std::size_t>(k)] = {l.real(), l.imag()};
            mp += xp[static_cast<std::size_t>(k)] / draws;
            ml += xl[static_cast<std::size_t>(k)] / draws;
        }
        for (int k = 0; k < draws; ++k) {
            const Eigen::Vector2d dp = xp[static_cast<std::size_t>(k)] - mp, dl = xl[static_cast<std::size_t>(k)] - ml;
            cp += dp * dp.transpose() / (draws - 1);
            cl += dl * dl.transpose() / (draws - 1);
        }
        worst_mean = std::max(worst_mean, (mp - ml).norm() / std::abs(u));
        worst_cov = std::max(worst_cov, (cp - cl).norm() / cl.norm());
    }
    const double bound = 5.0 * sigma * sigma;
    return {worst_mean < bound && worst_cov < bound,
            fmt("relative mean error %.2e, covariance error %.2e (bound %.1e)", worst_mean, worst_cov, bound)};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    ScenarioConfig cfg = load_scenario(data_dir() / "scenarios" / "ieee123.json");
    cfg.horizon = 4;
    cfg.trials = 2;
    const auto dir = std::filesystem::temp_directory_path() / ("dsse_accept_" + std::to_string(::getpid()));
    const RunReport a = run_scenario(cfg, Execution::parallel);
    const RunReport b = run_scenario(cfg, Execution::parallel);
    const RunReport s = run_scenario(cfg, Execution::serial);
    emit_report(a, dir / "a");
    emit_report(b, dir / "b");
    emit_report(s, dir / "s");
    const std::string ca = slurp(dir / "a" / "nrmse.csv");
    const bool same = !ca.empty() && ca == slurp(dir / "b" / "nrmse.csv") && ca == slurp(dir / "s" / "nrmse.csv");
    std::filesystem::remove_all(dir);
    return {same && a.nrmse == s.nrmse && a.complete(),
            fmt("nrmse.csv identical across 2 parallel (%d threads) and 1 serial run: %s", a.threads,
                same ? "yes" : "no")};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] %2d %-22s %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    };

    UpdateChecks updates;
    report(1, "kernel", kernel);
    report(2, "power-flow", power_flow);
    report(3, "update-equivalence", [&] {
        updates = random_updates();
        return Outcome{updates.runs == 100 && updates.max_diff < 1e-8,
                       fmt("max |V_kalman - V_subspace| = %.2e over %d pairs", updates.max_diff, updates.runs)};
    });
    report(4, "posterior-feasibility", [&] {
        return Outcome{updates.runs == 100 && updates.max_feas < 1e-8,
                       fmt("max feasibility residual %.2e over %d updates", updates.max_feas, updates.runs)};
    });
    report(5, "jacobian", jacobian);
    report(6, "covariance", [&] { return covariances(updates); });

    RunReport scenario;
    double scenario_secs = 0.0;
    report(7, "scenario-accuracy", [&] {
        const auto t0 = Clock::now();
        scenario = run_scenario(load_scenario(data_dir() / "scenarios" / "ieee123.json"));
        scenario_secs = since(t0);
        return scenario_accuracy(scenario, scenario_secs);
    });
    report(8, "timing-order", [&] { return timing(scenario); });
    report(9, "noise-model", noise_model);
    report(10, "determinism", determinism);

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
