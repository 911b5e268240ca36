#include <benchmark/benchmark.h>

#include <pbrgen/collab.hpp>
#include <pbrgen/nets.hpp>
#include <pbrgen/rng.hpp>

using namespace pbrgen;

namespace {

UNetConfig desk_shape(int in, int out) {
    UNetConfig c;
    c.in_channels = in;
    c.out_channels = out;
    c.prompt_attention = true;
    return c; // base 16, mults {1,2,2}, attn {false,true,true}, embed 64
}

} // namespace

static void BM_unet_forward(benchmark::State& state) {
    const int hw = int(state.range(0));
    Rng rng(1);
    UNet net(desk_shape(3, 3), rng, "rgb.");
    auto x = Tensor::randn({1, 3, hw, hw}, rng);
    const std::vector<int> t = {10};
    const std::vector<int> prompt = {1, 4, 9};
    for (auto _ : state) benchmark::DoNotOptimize(unet_forward(net, x, t, &prompt));
}
BENCHMARK(BM_unet_forward)->Arg(16)->Arg(32);

static void BM_dual_forward(benchmark::State& state) {
    const int hw = int(state.range(0));
    Rng rng(1);
    DualConfig dc;
    DualBranchModel m(dc, rng);
    auto zr = Tensor::randn({1, 3, hw, hw}, rng);
    auto zp = Tensor::randn({1, 8, hw, hw}, rng);
    auto cond = Tensor::randn({1, 4, hw, hw}, rng);
    const std::vector<int> t = {10};
    const std::vector<int> prompt = {1, 4, 9};
    for (auto _ : state) {
        auto [r, p] = dual_forward(m, zr, zp, cond, t, prompt);
        benchmark::DoNotOptimize(r);
        benchmark::DoNotOptimize(p);
    }
}
BENCHMARK(BM_dual_forward)->Arg(16)->Arg(32);

static void BM_self_attention(benchmark::State& state) {
    const int hw = int(state.range(0));
    Rng rng(1);
    SelfAttention<float> attn("a", 32, rng);
    auto x = Tensor::randn({1, 32, hw, hw}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(attn(x));
}
BENCHMARK(BM_self_attention)->Arg(8)->Arg(16);
