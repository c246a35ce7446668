#include <usod/adp.hpp>
#include <usod/data.hpp>
#include <usod/ura.hpp>

#include <benchmark/benchmark.h>

using namespace usod;

namespace {

struct Inputs {
    torch::Tensor x, l, u;
};

Inputs make_inputs(int64_t side, int64_t channels) {
    torch::manual_seed(0);
    auto maps = data::uncertainty_corpus(1, static_cast<int>(side), 0.02, 0.05, 7);
    return {torch::randn({1, channels, side, side}), torch::randn({1, channels, side, side}),
            maps[0].view({1, 1, side, side})};
}

void run_partition(benchmark::State& state, PartitionMode mode, double pt) {
    const int64_t side = state.range(0), channels = 32;
    auto in = make_inputs(side, channels);
    AttentionProjections proj(ProjectionOptions{channels, channels, channels, 1, true, false});
    PartitionConfig cfg;
    cfg.mode = mode;
    cfg.p_threshold = pt;
    cfg.min_size = std::max<int64_t>(1, side / 32);
    torch::NoGradGuard no_grad;
    uint64_t macs = 0;
    for (auto _ : state) {
        auto res = adp_attend(in.x, in.l, in.u, cfg, *proj);
        benchmark::DoNotOptimize(res.output.data_ptr<float>());
        macs = res.cost.mac_count;
    }
    state.counters["mac"] = static_cast<double>(macs);
}

void BM_GlobalAttention(benchmark::State& state) { run_partition(state, PartitionMode::Global, 0.0); }
void BM_AdaptivePartition(benchmark::State& state) { run_partition(state, PartitionMode::Adaptive, 0.2); }
void BM_FixedWindow(benchmark::State& state) { run_partition(state, PartitionMode::FixedWindow, 0.2); }

void BM_PlanPartition(benchmark::State& state) {
    const int64_t side = state.range(0);
    auto mask = data::uncertainty_corpus(1, static_cast<int>(side), 0.02, 0.05, 3)[0] > kUncertainCutoff;
    PartitionConfig cfg;
    cfg.min_size = std::max<int64_t>(1, side / 32);
    for (auto _ : state) benchmark::DoNotOptimize(plan_partition(mask, cfg).uncertain);
}

void BM_UncertaintyGenerate(benchmark::State& state) {
    auto s = torch::rand({1, 1, state.range(0), state.range(0)});
    for (auto _ : state) benchmark::DoNotOptimize(uncertainty_generate(s).values.data_ptr<float>());
}

} // namespace

BENCHMARK(BM_GlobalAttention)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AdaptivePartition)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FixedWindow)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PlanPartition)->Arg(64)->Arg(256);
BENCHMARK(BM_UncertaintyGenerate)->Arg(64)->Arg(256);
BENCHMARK_MAIN();
