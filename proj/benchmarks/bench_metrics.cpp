#include <benchmark/benchmark.h>

#include <pbrgen/metrics.hpp>
#include <pbrgen/rng.hpp>

using namespace pbrgen;

namespace {

std::vector<std::vector<float>> cloud(int n, int d, uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<float>> out(size_t(n));
    for (auto& v : out) {
        v.resize(size_t(d));
        for (auto& x : v) x = float(rng.normal());
    }
    return out;
}

} // namespace

static void BM_embed(benchmark::State& state) {
    EmbeddingBackbone backbone;
    Rng rng(3);
    Image img(3, 32, 32);
    for (auto& v : img.data) v = rng.next_float();
    for (auto _ : state) benchmark::DoNotOptimize(backbone.embed(img));
}
BENCHMARK(BM_embed);

static void BM_frechet32(benchmark::State& state) {
    auto a = fit_gaussian(cloud(64, 32, 1));
    auto b = fit_gaussian(cloud(64, 32, 2));
    for (auto _ : state) benchmark::DoNotOptimize(frechet(a, b));
}
BENCHMARK(BM_frechet32);

static void BM_mmd(benchmark::State& state) {
    auto x = cloud(64, 32, 1);
    auto y = cloud(64, 32, 2);
    const double bw = median_bandwidth(x, y);
    for (auto _ : state) benchmark::DoNotOptimize(mmd_rbf(x, y, bw));
}
BENCHMARK(BM_mmd);
