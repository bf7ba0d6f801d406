// Serial reference versus OpenMP dispatch for the three replicate-parallel
// kernels. Both paths produce bit-identical output, so only time differs.
#include "fusion/imputer.hpp"
#include "fusion/parallel.hpp"
#include "fusion/replication.hpp"
#include "fusion/simlab.hpp"

#include <benchmark/benchmark.h>

#include <algorithm>
#include <thread>

namespace {

using namespace fusion;

const FusedDataset& primary_data()
{
    static const FusedDataset data = fuse(generate_pair(make_scenario(ScenarioId::Primary), Seed(11)));
    return data;
}

Execution mode(const benchmark::State& state)
{
    return state.range(0) == 0 ? Execution::Serial : Execution::Parallel;
}

void label(benchmark::State& state)
{
    state.SetLabel(state.range(0) == 0 ? "serial" : "parallel");
}

void BM_impute_m(benchmark::State& state)
{
    const auto& data = primary_data();
    const auto specs = default_specs(data);
    const auto model = fit(data, specs);
    for (auto _ : state) benchmark::DoNotOptimize(impute_m(data, model, 50, Seed(1), mode(state)));
    label(state);
}

void BM_jackknife(benchmark::State& state)
{
    const auto& data = primary_data();
    const auto specs = default_specs(data);
    ReplicationOptions options;
    options.execution = mode(state);
    for (auto _ : state) benchmark::DoNotOptimize(jackknife(data, specs, 25, 10, Seed(2), options));
    label(state);
}

void BM_run_study(benchmark::State& state)
{
    auto spec = make_scenario(ScenarioId::Primary);
    spec.replications = 8;
    spec.seed = Seed(3);
    spec.methods.jackknife = {JackknifeConfig{25, 5}};
    for (auto _ : state) benchmark::DoNotOptimize(run_study(spec, mode(state)));
    label(state);
}

}  // namespace

BENCHMARK(BM_impute_m)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_jackknife)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_run_study)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv)
{
    fusion::set_thread_count(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
