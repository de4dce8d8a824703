// Serial reference runner vs the OpenMP trial-parallel runner, plus the hot
// kernels a trial spends its time in.

#include "nsculpt/boolean_graph.hpp"
#include "nsculpt/hierarchy_eval.hpp"
#include "nsculpt/module_detection.hpp"
#include "nsculpt/path_analysis.hpp"

#include <benchmark/benchmark.h>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace nsculpt;

namespace {

TrialConfig small_grid() {
    TrialConfig c;
    c.spec = ModularitySpec::separable();
    c.widths = {12, 16};
    c.depths = {1, 2};
    c.seeds = {0, 1};
    c.epochs = 60;
    c.grid.p_u_values = {30, 60};
    c.grid.p_e_values = {2.5};
    return c;
}

void BM_GridSerial(benchmark::State& state) {
    const auto c = small_grid();
    for (auto _ : state) benchmark::DoNotOptimize(run_grid_serial(c));
    state.counters["trials"] = static_cast<double>(c.trial_count());
}

void BM_GridParallel(benchmark::State& state) {
    const auto c = small_grid();
    const int threads = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(run_grid(c, threads));
    state.counters["trials"] = static_cast<double>(c.trial_count());
}

MaskedMlp trained(std::size_t width, std::size_t depth) {
    const auto t = truth_table(generate(ModularitySpec::reused(8), 0));
    MlpConfig mc;
    mc.layer_widths.push_back(t.n_inputs);
    for (std::size_t d = 0; d < depth; ++d) mc.layer_widths.push_back(width);
    mc.layer_widths.push_back(t.n_outputs);
    mc.epochs = 20;
    auto mlp = init(mc);
    train(mlp, t, {0.1, 1}, mc);
    return mlp;
}

void BM_Train(benchmark::State& state) {
    const auto t = truth_table(generate(ModularitySpec::reused(8), 0));
    MlpConfig mc;
    const auto w = static_cast<std::size_t>(state.range(0));
    mc.layer_widths = {t.n_inputs, w, w, t.n_outputs};
    mc.epochs = 10;
    for (auto _ : state) {
        auto mlp = init(mc);
        benchmark::DoNotOptimize(train(mlp, t, {0.1, 1}, mc));
    }
}

void BM_PathProducts(benchmark::State& state) {
    const auto mlp = trained(static_cast<std::size_t>(state.range(0)), 3);
    for (auto _ : state) benchmark::DoNotOptimize(path_product_matrix(mlp));
}

void BM_Detect(benchmark::State& state) {
    const auto mlp = trained(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(detect(mlp, kDefaultModularityThreshold, kDefaultMergeThreshold));
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace

BENCHMARK(BM_GridSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_GridParallel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Train)->Arg(24)->Arg(48)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PathProducts)->Arg(24)->Arg(48);
BENCHMARK(BM_Detect)->Arg(24)->Arg(48)->Unit(benchmark::kMicrosecond);

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    benchmark::AddCustomContext("omp_max_threads", std::to_string(max_threads()));
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
