// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "wmgm/autodiff.hpp"
#include "wmgm/diffusion.hpp"
#include "wmgm/gaussian.hpp"
#include "wmgm/msal.hpp"
#include "wmgm/rng.hpp"
#include "wmgm/wavelet.hpp"

using namespace wmgm;

static void BM_Decompose(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    RngStream rng(1, "bench-dwt");
    const Tensor x = rng.normal({1, side, side});
    for (auto _ : state) benchmark::DoNotOptimize(wavelet::decompose(x, 3));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}
BENCHMARK(BM_Decompose)->Arg(32)->Arg(64)->Arg(128);

static void BM_RoundTrip(benchmark::State& state) {
    RngStream rng(2, "bench-rt");
    const Tensor x = rng.normal({1, 64, 64});
    for (auto _ : state) benchmark::DoNotOptimize(wavelet::reconstruct(wavelet::decompose(x, 3)));
}
BENCHMARK(BM_RoundTrip);

static void BM_Conv2dForwardBackward(benchmark::State& state) {
    const auto ch = static_cast<std::size_t>(state.range(0));
    RngStream rng(3, "bench-conv");
    const Tensor x = rng.normal({8, ch, 16, 16}), w = rng.normal({ch, ch, 3, 3}), b = rng.normal({ch});
    for (auto _ : state) {
        nn::Tape t;
        const nn::Var vw = t.variable(w), vb = t.variable(b);
        t.backward(nn::sum(t, nn::conv2d(t, t.constant(x), vw, vb)));
        benchmark::DoNotOptimize(t.grad(vw));
    }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(4)->Arg(16);

static void BM_ReverseChainExactScore(benchmark::State& state) {
    const gaussian::GaussianSpec p0 = gaussian::power_law_covariance({16, 1.0, 0.0}, 8.0);
    const diffusion::ScoreFn score = diffusion::gaussian_score(p0);
    const diffusion::Schedule schedule(6.0, static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        RngStream rng(4, "bench-chain");
        const Tensor init = rng.normal({256, 16});
        benchmark::DoNotOptimize(diffusion::reverse_chain(score, schedule, rng, init).final);
    }
}
BENCHMARK(BM_ReverseChainExactScore)->Arg(64)->Arg(512);

static void BM_ExactChainKl(benchmark::State& state) {
    const gaussian::GaussianSpec p0 = gaussian::power_law_covariance({16, 1.0, 0.0}, 8.0);
    for (auto _ : state) benchmark::DoNotOptimize(gaussian::exact_chain_kl(p0, 6.0, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_ExactChainKl)->Arg(64)->Arg(4096);

static void BM_Ssim(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    RngStream rng(5, "bench-ssim");
    const Tensor a = rng.normal({4, 1, side, side}), b = rng.normal({4, 1, side, side});
    for (auto _ : state) benchmark::DoNotOptimize(msal::ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(16)->Arg(64);
BENCHMARK_MAIN();
