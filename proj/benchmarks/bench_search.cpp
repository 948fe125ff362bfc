#include <benchmark/benchmark.h>

#include "tts/generator.hpp"
#include "tts/harness.hpp"
#include "tts/search.hpp"
#include "tts/verifier.hpp"

namespace {

tts::RunSpec spec_for(tts::Method method, int n, int t) {
    tts::RunSpec spec;
    spec.method = method;
    spec.cfg.n_trajectories = n;
    spec.cfg.keep = std::max(1, n / 4);
    spec.cfg.total_steps = t;
    spec.svf.score_noise = 0.03;
    return spec;
}

void BM_DenoiseStep(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    tts::ScheduleConfig cfg;
    cfg.seq_len = m;
    const tts::Prompt prompt = tts::make_sim_prompt("bench", m, 1024);
    tts::IdAllocator ids;
    const tts::SimGenParams params;
    const tts::Trajectory root = tts::init_trajectory(prompt, 7, cfg, ids);
    for (auto _ : state) {
        tts::Trajectory x = root;
        while (!x.finished()) x = tts::denoise_step(x, prompt, params);
        benchmark::DoNotOptimize(x);
    }
    state.SetItemsProcessed(state.iterations() * cfg.total_steps);
}
BENCHMARK(BM_DenoiseStep)->Arg(64)->Arg(256);

void BM_SvfScore(benchmark::State& state) {
    const tts::Prompt prompt = tts::make_sim_prompt("bench", 64, 1024);
    const tts::SimVerifier ver({0.03, 0.5, 0});
    for (auto _ : state) benchmark::DoNotOptimize(ver.score(prompt.target, prompt));
}
BENCHMARK(BM_SvfScore);

void BM_Search(benchmark::State& state) {
    const auto method = state.range(0) == 0 ? tts::Method::kLTS : tts::Method::kHTS;
    tts::RunSpec spec = spec_for(method, static_cast<int>(state.range(1)), 32);
    std::uint64_t seed = 0;
    for (auto _ : state) {
        spec.cfg.root_seed = seed++;
        benchmark::DoNotOptimize(tts::run_search(spec));
    }
    state.SetLabel(tts::to_string(method));
}
BENCHMARK(BM_Search)->ArgsProduct({{0, 1}, {8, 32, 128}})->Unit(benchmark::kMillisecond);

void BM_PredictHtsCost(benchmark::State& state) {
    const tts::RunSpec spec = spec_for(tts::Method::kHTS, 128, 128);
    for (auto _ : state) benchmark::DoNotOptimize(tts::predict_hts_cost(spec.cfg, spec.kernel()));
}
BENCHMARK(BM_PredictHtsCost);

}  // namespace

BENCHMARK_MAIN();
