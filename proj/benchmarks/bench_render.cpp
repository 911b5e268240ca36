#include <benchmark/benchmark.h>

#include <pbrgen/dataset.hpp>
#include <pbrgen/geometry.hpp>
#include <pbrgen/shading.hpp>

using namespace pbrgen;

static void BM_render_view(benchmark::State& state) {
    const int res = int(state.range(0));
    const ObjectSpec spec = ObjectSpec::from_seed(7);
    for (auto _ : state) {
        auto recs = render_views(spec, 1, res);
        benchmark::DoNotOptimize(recs);
    }
}
BENCHMARK(BM_render_view)->Arg(16)->Arg(32)->Arg(64);

static void BM_radial_frames(benchmark::State& state) {
    const ObjectSpec spec = ObjectSpec::from_seed(7);
    for (auto _ : state) {
        auto img = record_frames(spec, 0, 16, 32);
        benchmark::DoNotOptimize(img);
    }
}
BENCHMARK(BM_radial_frames);
