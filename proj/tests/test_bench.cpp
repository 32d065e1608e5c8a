#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <unistd.h>

#include "common.hpp"
#include "dsse/bench.hpp"
#include "dsse/report.hpp"

using namespace dsse;
using namespace testing_util;

namespace {

ScenarioConfig toy_scenario(int horizon, int trials) {
    ScenarioConfig cfg;
    cfg.network = data_dir() / "toy.json";
    cfg.plan = data_dir() / "plans" / "toy.json";
    cfg.horizon = horizon;
    cfg.trials = trials;
    cfg.seed = 11;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path temp_dir(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("dsse_bench_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(Nrmse, Examples) {
    const CVector v = CVector::Constant(4, cplx(1.0, -0.2));
    EXPECT_EQ(nrmse(v, v), 0.0);
    CVector e = v;
    e[0] += 0.01;
    e[1] += cplx(0.0, 0.01);
    e[2] -= 0.01;
    e[3] -= cplx(0.0, 0.01);
    EXPECT_NEAR(nrmse(e, v), 0.01, 1e-15);
    EXPECT_NEAR(nrmse(e, v, 2.0), 0.005, 1e-15);
    EXPECT_THROW(nrmse(v, CVector::Zero(3)), DimensionError);
    EXPECT_THROW(nrmse(CVector(), CVector()), DimensionError);
    EXPECT_THROW(nrmse(v, v, 0.0), ConfigError);
}

TEST(Nrmse, MatchesLoop) {
    std::mt19937_64 gen(1);
    for (int t = 0; t < 20; ++t) {
        const CVector a = random_cvector(37, gen), b = random_cvector(37, gen);
        double acc = 0.0;
        for (Index i = 0; i < a.size(); ++i) acc += std::norm(a[i] - b[i]);
        EXPECT_NEAR(nrmse(a, b), std::sqrt(acc / 37.0), 1e-14);
    }
}

TEST(Summarize, Quantiles) {
    const SummaryStats s = summarize({4.0, 1.0, 3.0, 2.0, std::nan("")});
    EXPECT_EQ(s.count, 4u);
    EXPECT_DOUBLE_EQ(s.median, 2.5);
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.q1, 1.75);
    EXPECT_DOUBLE_EQ(s.q3, 3.25);
    EXPECT_DOUBLE_EQ(s.min, 1.0);
    EXPECT_DOUBLE_EQ(s.max, 4.0);
    EXPECT_DOUBLE_EQ(s.iqr(), 1.5);
    EXPECT_EQ(summarize({}).count, 0u);
}

TEST(Profiles, ShapeAndNoise) {
    const auto g = ieee_grid();
    double mean = 0.0;
    for (double x : daily_shape()) mean += x / 24.0;
    EXPECT_NEAR(mean, 1.0, 1e-12);

    const LoadProfile tiny = generate_profiles(g->network, 8, 0.0, 3);
    EXPECT_EQ(tiny.truth(5, 2), tiny.pseudo(5));
    EXPECT_EQ(tiny.hour_of(4), 1);
    EXPECT_EQ(tiny.hour_of(96), 0);

    const LoadProfile p = generate_profiles(g->network, 4, 0.5, 3);
    const CVector& m = p.pseudo(0);
    std::vector<double> rel;
    for (int trial = 0; trial < 40; ++trial) {
        const CVector s = p.truth(0, trial);
        for (std::size_t k : g->eps) EXPECT_EQ(s[static_cast<Index>(k)], cplx(0.0));
        for (Index i = 0; i < s.size(); ++i) {
            if (m[i].real() != 0.0) rel.push_back((s[i].real() - m[i].real()) / m[i].real());
        }
    }
    double var = 0.0;
    for (double r : rel) var += r * r;
    EXPECT_NEAR(std::sqrt(var / static_cast<double>(rel.size())), 0.5, 0.05);
    EXPECT_EQ(p.truth(1, 1), p.truth(1, 1));
    EXPECT_NE(p.truth(1, 1), p.truth(1, 2));
}

TEST(Scenario, ParseAndValidate) {
    const ScenarioConfig cfg = load_scenario(data_dir() / "scenarios" / "ieee123.json");
    EXPECT_EQ(cfg.horizon, 96);
    EXPECT_EQ(cfg.trials, 10);
    EXPECT_EQ(cfg.methods.size(), 5u);
    EXPECT_TRUE(cfg.network.is_absolute());
    EXPECT_TRUE(std::filesystem::exists(cfg.network));

    EXPECT_THROW(parse_scenario(nlohmann::json{{"horizon", 4}, {"bogus", 1}}), ConfigError);
    EXPECT_THROW(parse_scenario(nlohmann::json{{"methods", nlohmann::json::array()}}), ConfigError);
    EXPECT_THROW(parse_scenario(nlohmann::json{{"methods", {"post", "post"}}}), ConfigError);
    EXPECT_THROW(parse_scenario(nlohmann::json{{"methods", {"kalman"}}}), ConfigError);
    EXPECT_THROW(parse_scenario(nlohmann::json{{"sigma_pseudo", -1}}), ConfigError);
    EXPECT_THROW(parse_scenario(nlohmann::json{{"rect_covariance", "odd"}}), ConfigError);
    EXPECT_THROW(load_scenario("/nonexistent.json"), ConfigError);
    EXPECT_EQ(parse_method("postNL"), Method::post_nl);
    EXPECT_EQ(to_string(Method::wls_nl), "WLSNL");
}

TEST(Run, PriorOnlyWithoutLoadNoiseMatchesTruth) {
    ScenarioConfig cfg = toy_scenario(4, 2);
    cfg.sigma_pseudo = 1e-9;
    cfg.methods = {Method::prior};
    const RunReport r = run_scenario(cfg);
    ASSERT_TRUE(r.complete());
    for (double x : r.nrmse[0]) EXPECT_LT(x, 1e-6);
}

TEST(Run, MeasurementsImproveOnThePrior) {
    const RunReport r = run_scenario(toy_scenario(24, 4));
    ASSERT_EQ(r.failed, 0u) << (r.errors.empty() ? "" : r.errors.front());
    const double prior = r.nrmse_stats(Method::prior).median;
    for (Method m : {Method::post, Method::post_nl, Method::wls, Method::wls_nl}) {
        EXPECT_LT(r.nrmse_stats(m).median, prior) << to_string(m);
    }
    EXPECT_EQ(r.offline_seconds.size(), 24u);
    EXPECT_EQ(r.nrmse[0].size(), 96u);
}

TEST(Run, SerialAndParallelAgree) {
    const ScenarioConfig cfg = toy_scenario(8, 3);
    const RunReport s = run_scenario(cfg, Execution::serial);
    const RunReport p = run_scenario(cfg, Execution::parallel);
    EXPECT_EQ(s.threads, 1);
    EXPECT_EQ(s.nrmse, p.nrmse);
    EXPECT_EQ(s.failed, p.failed);
    EXPECT_EQ(s.not_converged, p.not_converged);
}

TEST(Report, CsvIsByteIdenticalAcrossRuns) {
    const ScenarioConfig cfg = toy_scenario(6, 2);
    const auto a = temp_dir("a"), b = temp_dir("b");
    emit_report(run_scenario(cfg), a);
    emit_report(run_scenario(cfg, Execution::serial), b);
    EXPECT_EQ(slurp(a / "nrmse.csv"), slurp(b / "nrmse.csv"));
    EXPECT_TRUE(std::filesystem::exists(a / "summary.json"));
    EXPECT_TRUE(std::filesystem::exists(a / "timing.svg"));
    const std::string csv = slurp(a / "nrmse.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,trial,prior,post,postNL,WLS,WLSNL");
    const auto summary = nlohmann::json::parse(slurp(a / "summary.json"));
    EXPECT_EQ(summary.at("methods").size(), 5u);
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST(Report, NoMethodsIsAnError) {
    RunReport r;
    EXPECT_THROW(emit_report(r, temp_dir("empty")), ConfigError);
}

TEST(Report, BoxesInGivenOrder) {
    std::vector<BoxSeries> series;
    for (const char* name : {"zeta", "alpha", "mid"}) series.push_back({name, summarize({1.0, 2.0, 3.0})});
    const std::string svg = boxplot_svg("t", "y", series, true);
    const auto z = svg.find("data-label=\"zeta\"");
    const auto a = svg.find("data-label=\"alpha\"");
    const auto m = svg.find("data-label=\"mid\"");
    ASSERT_NE(z, std::string::npos);
    EXPECT_LT(z, a);
    EXPECT_LT(a, m);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
}
