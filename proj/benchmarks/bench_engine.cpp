#include <benchmark/benchmark.h>

#include "maskoff/rng.hpp"
#include "maskoff/tensor.hpp"

using namespace maskoff;

static void BM_Conv2dForward(benchmark::State& state) {
    const int64_t c = state.range(0), hw = state.range(1);
    Rng rng(1);
    Tensor x = Tensor::randn({1, c, hw, hw}, rng);
    Tensor w = Tensor::randn({c, c, 3, 3}, rng, 0.05);
    Tensor b = Tensor::zeros({c});
    NoGradGuard ng;
    for (auto _ : state) {
        Tensor y = conv2d(x, w, b, 1, 1);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Conv2dForward)->Args({16, 64})->Args({32, 32})->Args({64, 16});

static void BM_Conv2dTrainStep(benchmark::State& state) {
    const int64_t c = state.range(0), hw = state.range(1);
    Rng rng(1);
    Tensor x = Tensor::randn({1, c, hw, hw}, rng);
    Tensor w = Tensor::randn({c, c, 3, 3}, rng, 0.05, true);
    Tensor b = Tensor::zeros({c}, true);
    for (auto _ : state) {
        w.zero_grad();
        b.zero_grad();
        Tensor loss = mean(square(conv2d(x, w, b, 1, 1)));
        backward(loss);
        benchmark::DoNotOptimize(w.grad().data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Conv2dTrainStep)->Args({16, 64})->Args({32, 32});

BENCHMARK_MAIN();
