#include <benchmark/benchmark.h>

#include "maskoff/attention.hpp"
#include "maskoff/generator.hpp"
#include "maskoff/image.hpp"
#include "maskoff/metrics.hpp"
#include "maskoff/rng.hpp"
#include "maskoff/segmentation.hpp"
#include "maskoff/tensor.hpp"

using namespace maskoff;

static void BM_GeneratorForward(benchmark::State& state) {
    const int64_t bw = state.range(0), size = state.range(1);
    gen::GeneratorConfig cfg;
    cfg.base_width = bw;
    cfg.input_size = size;
    gen::Generator g(cfg, 7);
    Rng rng(1);
    Tensor masked = Tensor::randn({1, 3, size, size}, rng, 0.5);
    Tensor mask = Tensor::zeros({1, 1, size, size});
    for (int64_t i = 0; i < size * size / 4; ++i) mask.data()[i] = 1.0;
    NoGradGuard ng;
    for (auto _ : state) {
        Tensor y = g.inpaint(masked, mask);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_GeneratorForward)->Args({8, 64})->Args({16, 64})->Args({16, 128});

static void BM_McsamBlock(benchmark::State& state) {
    const int64_t c = state.range(0), hw = state.range(1);
    nn::ParamStore ps;
    Rng rng(2);
    attn::BottleneckBlock block(attn::AttentionMode::mcsam, c, ps, "blk", rng);
    Tensor x = Tensor::randn({1, c, hw, hw}, rng);
    NoGradGuard ng;
    for (auto _ : state) {
        Tensor y = block.forward(x);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_McsamBlock)->Args({32, 16})->Args({64, 16});

static void BM_SegNetForward(benchmark::State& state) {
    const int64_t size = state.range(0);
    seg::SegNetConfig cfg;
    cfg.input_size = size;
    seg::SegNet net(cfg, 5);
    Rng rng(3);
    Tensor img = Tensor::randn({1, 3, size, size}, rng, 0.25);
    NoGradGuard ng;
    for (auto _ : state) {
        Tensor y = net.forward(img, false);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SegNetForward)->Arg(64)->Arg(128);

static void BM_Ssim(benchmark::State& state) {
    const int64_t size = state.range(0);
    Rng rng(4);
    Image a(size, size, 3), b(size, size, 3);
    for (double& v : a.data) v = rng.uniform(0.0, 1.0);
    for (size_t i = 0; i < b.data.size(); ++i)
        b.data[i] = std::min(1.0, std::max(0.0, a.data[i] + rng.uniform(-0.05, 0.05)));
    for (auto _ : state) {
        const double s = metrics::ssim(a, b);
        benchmark::DoNotOptimize(s);
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(256);
