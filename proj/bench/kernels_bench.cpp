// Serial vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>

#include "simbil/kernels.hpp"

namespace k = simbil::kernels;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

k::ConvShape shape_for(const benchmark::State& st)
{
    const int side = static_cast<int>(st.range(0)) + 2;
    const int ch = static_cast<int>(st.range(1));
    return {ch, ch, 3, 1, side, side};
}

template <bool Parallel>
void conv_forward(benchmark::State& st)
{
    const k::ConvShape s = shape_for(st);
    const auto in = filled(static_cast<std::size_t>(s.in_channels) * s.in_height * s.in_width, 1);
    const auto w = filled(s.weight_count(), 2);
    const std::vector<double> b(s.out_channels, 0.0);
    std::vector<double> out(static_cast<std::size_t>(s.out_channels) * s.out_height() * s.out_width());
    for (auto _ : st) {
        if constexpr (Parallel)
            k::conv2d_forward(s, in, w, b, out);
        else
            k::serial::conv2d_forward(s, in, w, b, out);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(s.weight_count()) * s.out_height() *
                         s.out_width());
}

template <bool Parallel>
void conv_backward(benchmark::State& st)
{
    const k::ConvShape s = shape_for(st);
    const auto in = filled(static_cast<std::size_t>(s.in_channels) * s.in_height * s.in_width, 1);
    const auto w = filled(s.weight_count(), 2);
    const auto go = filled(static_cast<std::size_t>(s.out_channels) * s.out_height() * s.out_width(), 3);
    std::vector<double> gi(in.size()), gw(w.size()), gb(s.out_channels);
    for (auto _ : st) {
        if constexpr (Parallel) {
            k::conv2d_backward_input(s, go, w, gi);
            k::conv2d_backward_weight(s, in, go, gw, gb);
        } else {
            k::serial::conv2d_backward_input(s, go, w, gi);
            k::serial::conv2d_backward_weight(s, in, go, gw, gb);
        }
        benchmark::DoNotOptimize(gw.data());
    }
}

template <bool Parallel>
void gaussian_filter(benchmark::State& st)
{
    const int side = static_cast<int>(st.range(0));
    const auto plane = filled(static_cast<std::size_t>(side) * side, 4);
    const std::vector<double> taps(11, 1.0 / 11);
    std::vector<double> out(static_cast<std::size_t>(side - 10) * (side - 10));
    for (auto _ : st) {
        if constexpr (Parallel)
            k::separable_filter_valid(plane, side, side, taps, out);
        else
            k::serial::separable_filter_valid(plane, side, side, taps, out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void morphology(benchmark::State& st)
{
    const int side = static_cast<int>(st.range(0));
    std::vector<std::uint8_t> in(static_cast<std::size_t>(side) * side, 255), out(in.size());
    std::mt19937_64 rng(5);
    for (auto& v : in) v = rng() % 5 == 0 ? 0 : 255;
    for (auto _ : st) {
        if constexpr (Parallel)
            k::window_min(in, out, side, side, 6);
        else
            k::serial::window_min(in, out, side, side, 6);
        benchmark::DoNotOptimize(out.data());
    }
}

} // namespace

BENCHMARK(conv_forward<false>)->Name("conv_forward/serial")->Args({64, 16})->Args({32, 64})->Args({256, 16});
BENCHMARK(conv_forward<true>)->Name("conv_forward/omp")->Args({64, 16})->Args({32, 64})->Args({256, 16});
BENCHMARK(conv_backward<false>)->Name("conv_backward/serial")->Args({64, 16})->Args({32, 64});
BENCHMARK(conv_backward<true>)->Name("conv_backward/omp")->Args({64, 16})->Args({32, 64});
BENCHMARK(gaussian_filter<false>)->Name("ssim_filter/serial")->Arg(256)->Arg(1024);
BENCHMARK(gaussian_filter<true>)->Name("ssim_filter/omp")->Arg(256)->Arg(1024);
BENCHMARK(morphology<false>)->Name("window_min/serial")->Arg(256)->Arg(1024);
BENCHMARK(morphology<true>)->Name("window_min/omp")->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
