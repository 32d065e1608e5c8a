// Monte-Carlo trial loop: serial reference vs OpenMP, plus the single online
// update against a full WLS solve.
#include <benchmark/benchmark.h>

#include "dsse/bench.hpp"

using namespace dsse;

namespace {

const std::filesystem::path kData = DSSE_DATA_DIR;

ScenarioConfig short_scenario() {
    ScenarioConfig cfg = load_scenario(kData / "scenarios" / "ieee123.json");
    cfg.horizon = 4;
    cfg.trials = 4;
    cfg.methods = {Method::post, Method::wls};
    return cfg;
}

void BM_TrialsSerial(benchmark::State& state) {
    const ScenarioConfig cfg = short_scenario();
    for (auto _ : state) benchmark::DoNotOptimize(run_scenario(cfg, Execution::serial));
}

void BM_TrialsParallel(benchmark::State& state) {
    const ScenarioConfig cfg = short_scenario();
    int threads = 1;
    for (auto _ : state) {
        const RunReport r = run_scenario(cfg, Execution::parallel);
        threads = r.threads;
        benchmark::DoNotOptimize(r);
    }
    state.counters["threads"] = threads;
}

struct Fixture {
    std::shared_ptr<const Grid> grid = make_grid(load_network(kData / "ieee123.json"));
    MeasurementPlan plan = load_plan(kData / "plans" / "ieee123.json", grid->network);
    PseudoMeasurements pseudo{base_injections(grid->network, grid->adm.index()), 0.5};
    StateEstimate prior = fixed_point_power_flow(pseudo, *grid);
    AffineMap lin = build_linear_map(plan, grid->adm, grid->v_source);
    MeasurementFrame frame;
    Fixture() {
        const StateEstimate truth =
            fixed_point_power_flow(PseudoMeasurements{sample_pseudo(pseudo.s, 0.5, 1).s, 0.0}, *grid);
        frame = simulate_frame(plan, lin, build_magnitude_map(plan, grid->adm, grid->v_source), truth.v, 2);
        frame.magnitude.resize(0);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

void BM_OnlineUpdate(benchmark::State& state) {
    const Fixture& f = fixture();
    const RVector var = measurement_covariances(0.01, f.frame.linear, RVector()).linear;
    for (auto _ : state) {
        benchmark::DoNotOptimize(linear_update_complex(*f.grid, f.prior, f.lin, f.frame.linear, var));
    }
}

void BM_WlsSolve(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state) {
        const StackedMeasurements z = stack_measurements(*f.grid, f.pseudo, &f.plan, &f.frame);
        const StackedModel model(*f.grid, z.pseudo_index, f.lin, AffineMap{});
        benchmark::DoNotOptimize(wls_subspace(z, model, f.grid->rect_basis));
    }
}

}  // namespace

BENCHMARK(BM_TrialsSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_TrialsParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_OnlineUpdate)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WlsSolve)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
