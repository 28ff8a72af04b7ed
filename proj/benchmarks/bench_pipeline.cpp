// Full-year (8760 h) timings of the solver-independent stages.

#include <benchmark/benchmark.h>

#include "storplan/builder.hpp"
#include "storplan/domain.hpp"
#include "storplan/milp.hpp"
#include "storplan/solver.hpp"
#include "storplan/verify.hpp"

using namespace storplan;

namespace {

const Scenario &full_year() {
    static const Scenario s = [] {
        Scenario sc = load_scenario(STORPLAN_DATA_DIR "/config_2020.toml", STORPLAN_DATA_DIR "/series_2020.csv");
        sc.curves = load_curves(STORPLAN_DATA_DIR "/curves_sample.toml");
        return sc;
    }();
    return s;
}

VariantOptions options_for(int variant) {
    VariantOptions o;
    o.variant = variant;
    o.grid = GridMode::On;
    if (o.piecewise()) o.e_b_estimate = 1000.0;
    return o;
}

void BM_Build(benchmark::State &state) {
    const auto &s = full_year();
    const auto o = options_for(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto built = build_model(s, o);
        benchmark::DoNotOptimize(built.model.constraints().size());
    }
    state.counters["columns"] = static_cast<double>(build_model(s, o).model.variables().size());
}
BENCHMARK(BM_Build)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);

void BM_ExportMps(benchmark::State &state) {
    const auto built = build_model(full_year(), options_for(static_cast<int>(state.range(0))));
    std::size_t bytes = 0;
    for (auto _ : state) {
        auto doc = milp::export_mps(built.model);
        bytes = doc.text.size();
        benchmark::DoNotOptimize(doc.text.data());
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(bytes) * state.iterations());
}
BENCHMARK(BM_ExportMps)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);

void BM_CheckResiduals(benchmark::State &state) {
    const auto built = build_model(full_year(), options_for(static_cast<int>(state.range(0))));
    solver::Solution sol;
    sol.status = solver::Status::Optimal;
    for (const auto &v : built.model.variables()) sol.values[v.name] = v.lb;
    for (auto _ : state) {
        auto rep = verify::check_residuals(built.model, sol);
        benchmark::DoNotOptimize(rep.max_constraint_violation);
    }
}
BENCHMARK(BM_CheckResiduals)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);

void BM_ReadMps(benchmark::State &state) {
    const auto text = milp::export_mps(build_model(full_year(), options_for(1)).model).text;
    for (auto _ : state) {
        auto m = verify::read_mps(text);
        benchmark::DoNotOptimize(m.variables().size());
    }
}
BENCHMARK(BM_ReadMps)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
