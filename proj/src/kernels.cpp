#include "simbil/kernels.hpp"

#include <algorithm>
#include <vector>

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace simbil::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using StridedConstMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Channels per GEMM call. Fixed so the serial and parallel drivers issue
// identical calls and produce bit-identical results.
constexpr int kChunk = 16;

int chunks(int n) { return (n + kChunk - 1) / kChunk; }

bool is_pointwise(const ConvShape& s) { return s.kernel == 1 && s.stride == 1; }

// cols[(i*k + ky)*k + kx][y*wo + x] = in[i][y*stride + ky][x*stride + kx]
void im2col(const ConvShape& s, const double* in, double* cols, bool parallel)
{
    const int ho = s.out_height(), wo = s.out_width(), k = s.kernel, st = s.stride;
    const std::size_t in_plane = static_cast<std::size_t>(s.in_height) * s.in_width;
    const std::size_t p = static_cast<std::size_t>(ho) * wo;
    const int rows = s.in_channels * k * k;
#pragma omp parallel for schedule(static) if (parallel)
    for (int r = 0; r < rows; ++r) {
        const int i = r / (k * k), ky = (r / k) % k, kx = r % k;
        const double* src = in + i * in_plane;
        double* dst = cols + r * p;
        for (int y = 0; y < ho; ++y) {
            const double* row = src + static_cast<std::size_t>(y * st + ky) * s.in_width + kx;
            double* drow = dst + static_cast<std::size_t>(y) * wo;
            for (int x = 0; x < wo; ++x) drow[x] = row[x * st];
        }
    }
}

void forward_impl(const ConvShape& s, const double* in, const double* weight, const double* bias, double* out,
                  bool parallel)
{
    const Eigen::Index kk = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
    const Eigen::Index p = static_cast<Eigen::Index>(s.out_height()) * s.out_width();
    std::vector<double> buffer;
    const double* cols = in;
    if (!is_pointwise(s)) {
        buffer.resize(static_cast<std::size_t>(kk * p));
        im2col(s, in, buffer.data(), parallel);
        cols = buffer.data();
    }
    const ConstMap c(cols, kk, p);
#pragma omp parallel for schedule(static) if (parallel)
    for (int chunk = 0; chunk < chunks(s.out_channels); ++chunk) {
        const int o0 = chunk * kChunk, n = std::min(kChunk, s.out_channels - o0);
        Eigen::Map<RowMat> o(out + o0 * p, n, p);
        o.noalias() = ConstMap(weight + o0 * kk, n, kk) * c;
        for (int r = 0; r < n; ++r) o.row(r).array() += bias[o0 + r];
    }
}

void backward_input_impl(const ConvShape& s, const double* grad_out, const double* weight, double* grad_in,
                         bool parallel)
{
    const int k = s.kernel, st = s.stride, ho = s.out_height(), wo = s.out_width();
    const Eigen::Index kk = static_cast<Eigen::Index>(k) * k;
    const Eigen::Index kall = kk * s.in_channels;
    const Eigen::Index p = static_cast<Eigen::Index>(ho) * wo;
    const std::size_t in_plane = static_cast<std::size_t>(s.in_height) * s.in_width;
    const ConstMap g(grad_out, s.out_channels, p);
    const bool pointwise = is_pointwise(s);
    std::vector<double> dcols(pointwise ? 0 : static_cast<std::size_t>(kall * p));
#pragma omp parallel for schedule(static) if (parallel)
    for (int chunk = 0; chunk < chunks(s.in_channels); ++chunk) {
        const int i0 = chunk * kChunk, n = std::min(kChunk, s.in_channels - i0);
        const StridedConstMap w(weight + i0 * kk, s.out_channels, n * kk, Eigen::OuterStride<>(kall));
        if (pointwise) {
            Eigen::Map<RowMat>(grad_in + i0 * in_plane, n, p).noalias() = w.transpose() * g;
            continue;
        }
        double* dc = dcols.data() + i0 * kk * p;
        Eigen::Map<RowMat>(dc, n * kk, p).noalias() = w.transpose() * g;
        for (int i = i0; i < i0 + n; ++i) {
            double* dst = grad_in + i * in_plane;
            std::fill(dst, dst + in_plane, 0.0);
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const double* src = dcols.data() + ((i * k + ky) * k + kx) * p;
                    for (int y = 0; y < ho; ++y) {
                        double* row = dst + static_cast<std::size_t>(y * st + ky) * s.in_width + kx;
                        const double* srow = src + static_cast<std::size_t>(y) * wo;
                        for (int x = 0; x < wo; ++x) row[x * st] += srow[x];
                    }
                }
        }
    }
}

void backward_weight_impl(const ConvShape& s, const double* in, const double* grad_out, double* grad_weight,
                          double* grad_bias, bool parallel)
{
    const Eigen::Index kk = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
    const Eigen::Index p = static_cast<Eigen::Index>(s.out_height()) * s.out_width();
    std::vector<double> buffer;
    const double* cols = in;
    if (!is_pointwise(s)) {
        buffer.resize(static_cast<std::size_t>(kk * p));
        im2col(s, in, buffer.data(), parallel);
        cols = buffer.data();
    }
    const ConstMap c(cols, kk, p);
#pragma omp parallel for schedule(static) if (parallel)
    for (int chunk = 0; chunk < chunks(s.out_channels); ++chunk) {
        const int o0 = chunk * kChunk, n = std::min(kChunk, s.out_channels - o0);
        const ConstMap g(grad_out + o0 * p, n, p);
        Eigen::Map<RowMat>(grad_weight + o0 * kk, n, kk).noalias() += g * c.transpose();
        for (int r = 0; r < n; ++r) {
            const double* gr = grad_out + (o0 + r) * p;
            double acc = 0.0;
            for (Eigen::Index q = 0; q < p; ++q) acc += gr[q];
            grad_bias[o0 + r] += acc;
        }
    }
}

inline void filter_row(const double* plane, int width, const double* taps, int k, int y, double* tmp_row)
{
    const int wo = width - k + 1;
    const double* src = plane + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < wo; ++x) {
        double acc = 0.0;
        for (int t = 0; t < k; ++t) acc += taps[t] * src[x + t];
        tmp_row[x] = acc;
    }
}

inline void filter_col(const double* tmp, int wo, const double* taps, int k, int y, double* out)
{
    double* dst = out + static_cast<std::size_t>(y) * wo;
    for (int x = 0; x < wo; ++x) {
        double acc = 0.0;
        for (int t = 0; t < k; ++t) acc += taps[t] * tmp[static_cast<std::size_t>(y + t) * wo + x];
        dst[x] = acc;
    }
}

template <typename Op>
inline void window_row(const std::uint8_t* in, std::uint8_t* tmp, int width, int radius, int y, Op op)
{
    const std::uint8_t* src = in + static_cast<std::size_t>(y) * width;
    std::uint8_t* dst = tmp + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
        std::uint8_t v = src[x];
        for (int t = std::max(0, x - radius); t <= std::min(width - 1, x + radius); ++t) v = op(v, src[t]);
        dst[x] = v;
    }
}

template <typename Op>
inline void window_col(const std::uint8_t* tmp, std::uint8_t* out, int width, int height, int radius, int y, Op op)
{
    std::uint8_t* dst = out + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
        std::uint8_t v = tmp[static_cast<std::size_t>(y) * width + x];
        for (int t = std::max(0, y - radius); t <= std::min(height - 1, y + radius); ++t)
            v = op(v, tmp[static_cast<std::size_t>(t) * width + x]);
        dst[x] = v;
    }
}

constexpr auto min_op = [](std::uint8_t a, std::uint8_t b) { return std::min(a, b); };
constexpr auto max_op = [](std::uint8_t a, std::uint8_t b) { return std::max(a, b); };

template <typename Op>
void window_parallel(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, int width, int height,
                     int radius, Op op)
{
    std::vector<std::uint8_t> tmp(in.size());
    out.resize(in.size());
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) window_row(in.data(), tmp.data(), width, radius, y, op);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) window_col(tmp.data(), out.data(), width, height, radius, y, op);
}

template <typename Op>
void window_serial(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, int width, int height,
                   int radius, Op op)
{
    std::vector<std::uint8_t> tmp(in.size());
    out.resize(in.size());
    for (int y = 0; y < height; ++y) window_row(in.data(), tmp.data(), width, radius, y, op);
    for (int y = 0; y < height; ++y) window_col(tmp.data(), out.data(), width, height, radius, y, op);
}

} // namespace

int max_threads()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out)
{
    forward_impl(s, in.data(), weight.data(), bias.data(), out.data(), true);
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in)
{
    backward_input_impl(s, grad_out.data(), weight.data(), grad_in.data(), true);
}

void conv2d_backward_weight(const ConvShape& s, std::span<const double> in, std::span<const double> grad_out,
                            std::span<double> grad_weight, std::span<double> grad_bias)
{
    backward_weight_impl(s, in.data(), grad_out.data(), grad_weight.data(), grad_bias.data(), true);
}

void separable_filter_valid(std::span<const double> plane, int width, int height, std::span<const double> taps,
                            std::span<double> out)
{
    const int k = static_cast<int>(taps.size());
    const int wo = width - k + 1, ho = height - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(height) * wo);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y)
        filter_row(plane.data(), width, taps.data(), k, y, tmp.data() + static_cast<std::size_t>(y) * wo);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < ho; ++y) filter_col(tmp.data(), wo, taps.data(), k, y, out.data());
}

void window_min(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, int width, int height,
                int radius)
{
    window_parallel(in, out, width, height, radius, min_op);
}

void window_max(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, int width, int height,
                int radius)
{
    window_parallel(in, out, width, height, radius, max_op);
}

namespace serial {

void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out)
{
    forward_impl(s, in.data(), weight.data(), bias.data(), out.data(), false);
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in)
{
    backward_input_impl(s, grad_out.data(), weight.data(), grad_in.data(), false);
}

void conv2d_backward_weight(const ConvShape& s, std::span<const double> in, std::span<const double> grad_out,
                            std::span<double> grad_weight, std::span<double> grad_bias)
{
    backward_weight_impl(s, in.data(), grad_out.data(), grad_weight.data(), grad_bias.data(), false);
}

void separable_filter_valid(std::span<const double> plane, int width, int height, std::span<const double> taps,
                            std::span<double> out)
{
    const int k = static_cast<int>(taps.size());
    const int wo = width - k + 1, ho = height - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(height) * wo);
    for (int y = 0; y < height; ++y)
        filter_row(plane.data(), width, taps.data(), k, y, tmp.data() + static_cast<std::size_t>(y) * wo);
    for (int y = 0; y < ho; ++y) filter_col(tmp.data(), wo, taps.data(), k, y, out.data());
}

void window_min(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, int width, int height,
                int radius)
{
    window_serial(in, out, width, height, radius, min_op);
}

void window_max(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, int width, int height,
                int radius)
{
    window_serial(in, out, width, height, radius, max_op);
}

} // namespace serial

} // namespace simbil::kernels
