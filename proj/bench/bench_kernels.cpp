// Serial reference vs parallel kernels at feature-map sizes the toy codec uses.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "sttvc/kernels.hpp"

using namespace sttvc::kernels;

namespace {

std::vector<double> rand_vec(std::size_t n, double lo = -1, double hi = 1)
{
    static std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

ConvGeometry conv_geometry(int size) { return {32, size, size, 32, 3, 1, 1, 1}; }

template <bool Parallel>
void BM_Conv3x3(benchmark::State& state)
{
    const ConvGeometry g = conv_geometry(static_cast<int>(state.range(0)));
    auto x = rand_vec(static_cast<std::size_t>(g.in_channels) * g.height * g.width);
    auto w = rand_vec(g.weight_size());
    auto b = rand_vec(g.out_channels);
    std::vector<double> y(static_cast<std::size_t>(g.out_channels) * g.out_height() * g.out_width());
    for (auto _ : state) {
        if constexpr (Parallel)
            parallel::conv2d_forward(g, x, w, b, y);
        else
            serial::conv2d_forward(g, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_Conv3x3Backward(benchmark::State& state)
{
    const ConvGeometry g = conv_geometry(static_cast<int>(state.range(0)));
    auto x = rand_vec(static_cast<std::size_t>(g.in_channels) * g.height * g.width);
    auto w = rand_vec(g.weight_size());
    auto dy = rand_vec(static_cast<std::size_t>(g.out_channels) * g.out_height() * g.out_width());
    std::vector<double> dx(x.size()), dw(w.size()), db(g.out_channels);
    for (auto _ : state) {
        if constexpr (Parallel)
            parallel::conv2d_backward(g, x, w, dy, dx, dw, db);
        else
            serial::conv2d_backward(g, x, w, dy, dx, dw, db);
        benchmark::DoNotOptimize(dx.data());
    }
}

template <bool Parallel>
void BM_Linear(benchmark::State& state)
{
    const LinearGeometry g{static_cast<int>(state.range(0)), 64, 64};
    auto x = rand_vec(static_cast<std::size_t>(g.tokens) * g.in_features);
    auto w = rand_vec(static_cast<std::size_t>(g.out_features) * g.in_features);
    auto b = rand_vec(g.out_features);
    std::vector<double> y(static_cast<std::size_t>(g.tokens) * g.out_features);
    for (auto _ : state) {
        if constexpr (Parallel)
            parallel::linear_forward(g, x, w, b, y);
        else
            serial::linear_forward(g, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_WindowAttention(benchmark::State& state)
{
    AttentionGeometry g;
    g.height = g.width = static_cast<int>(state.range(0));
    g.window = 8;
    g.heads = 8;
    g.channels = 32;
    g.scale = 0.5;
    g.has_bias = true;
    g.has_prior = true;
    const std::size_t n = static_cast<std::size_t>(g.height) * g.width * g.channels;
    auto q = rand_vec(n), k = rand_vec(n), v = rand_vec(n), qp = rand_vec(n), kp = rand_vec(n);
    auto bias = rand_vec(static_cast<std::size_t>(g.heads) * g.bias_table_size());
    AttentionInputs in{q, k, v, qp, kp, bias, {}};
    std::vector<double> out(n), probs(g.probs_size());
    for (auto _ : state) {
        if constexpr (Parallel)
            parallel::attention_forward(g, in, out, probs);
        else
            serial::attention_forward(g, in, out, probs);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_Deform(benchmark::State& state)
{
    const int size = static_cast<int>(state.range(0));
    const DeformGeometry g{32, size, size, 32, 8};
    const std::size_t plane = g.plane();
    auto x = rand_vec(g.in_channels * plane);
    auto off = rand_vec(g.groups * 18 * plane, -2, 2);
    auto mask = rand_vec(g.groups * 9 * plane, 0, 1);
    auto w = rand_vec(static_cast<std::size_t>(g.out_channels) * g.in_channels * 9);
    auto b = rand_vec(g.out_channels);
    DeformInputs in{x, off, mask, w, b};
    std::vector<double> y(g.out_channels * plane);
    for (auto _ : state) {
        if constexpr (Parallel)
            parallel::deform_forward(g, in, y);
        else
            serial::deform_forward(g, in, y);
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK(BM_Conv3x3<false>)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv3x3<true>)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv3x3Backward<false>)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv3x3Backward<true>)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Linear<false>)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Linear<true>)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WindowAttention<false>)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WindowAttention<true>)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Deform<false>)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Deform<true>)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
