#include <benchmark/benchmark.h>

#include <pbrgen/rng.hpp>
#include <pbrgen/tensor.hpp>

using namespace pbrgen;

static void BM_matmul(benchmark::State& state) {
    const int n = int(state.range(0));
    Rng rng(1);
    auto a = Tensor::randn({n, n}, rng);
    auto b = Tensor::randn({n, n}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * int64_t(n) * n * n);
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_conv2d(benchmark::State& state) {
    const int c = int(state.range(0));
    Rng rng(1);
    auto x = Tensor::randn({1, c, 32, 32}, rng);
    auto w = Tensor::randn({c, c, 3, 3}, rng, 0.1f);
    auto b = Tensor::zeros({c});
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b));
}
BENCHMARK(BM_conv2d)->Arg(16)->Arg(32)->Arg(64);

static void BM_backward_conv(benchmark::State& state) {
    Rng rng(1);
    for (auto _ : state) {
        auto x = Tensor::randn({1, 16, 32, 32}, rng);
        auto w = Tensor::param({16, 16, 3, 3}, "w");
        for (auto& v : w.data()) v = float(rng.normal()) * 0.1f;
        auto b = Tensor::param({16}, "b");
        auto loss = mean_all(conv2d(x, w, b));
        backward(loss);
        benchmark::DoNotOptimize(w.grad().data());
    }
}
BENCHMARK(BM_backward_conv);
