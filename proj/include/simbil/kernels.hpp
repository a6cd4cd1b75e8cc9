#pragma once

#include <cstdint>
#include <span>
#include <vector>

// Data-parallel inner loops. Every kernel has an OpenMP version in
// simbil::kernels and a serial twin in simbil::kernels::serial that runs the
// same arithmetic in the same order, so results are bit-identical and
// independent of the thread count.
namespace simbil::kernels {

// Planar tensors: channel-major, then row-major.
struct ConvShape {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int in_height = 0; // already padded
    int in_width = 0;  // already padded

    int out_height() const { return (in_height - kernel) / stride + 1; }
    int out_width() const { return (in_width - kernel) / stride + 1; }
    std::size_t weight_count() const
    {
        return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
    }
};

// out[o] = bias[o] + sum_i w[o,i] * in[i]   (cross-correlation)
void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);

// grad_in (padded layout) = adjoint of conv2d_forward w.r.t. its input. Overwrites grad_in.
void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in);

// Accumulates into grad_weight / grad_bias.
void conv2d_backward_weight(const ConvShape& s, std::span<const double> in, std::span<const double> grad_out,
                            std::span<double> grad_weight, std::span<double> grad_bias);

// Separable valid-mode filter of one plane with a symmetric 1-D kernel.
// Output is (height - k + 1) x (width - k + 1).
void separable_filter_valid(std::span<const double> plane, int width, int height, std::span<const double> taps,
                            std::span<double> out);

// Windowed min / max over a (2r+1)^2 square clipped at the border.
void window_min(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, int width, int height,
                int radius);
void window_max(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, int width, int height,
                int radius);

int max_threads();

namespace serial {

void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in);
void conv2d_backward_weight(const ConvShape& s, std::span<const double> in, std::span<const double> grad_out,
                            std::span<double> grad_weight, std::span<double> grad_bias);
void separable_filter_valid(std::span<const double> plane, int width, int height, std::span<const double> taps,
                            std::span<double> out);
void window_min(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, int width, int height,
                int radius);
void window_max(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, int width, int height,
                int radius);

} // namespace serial

} // namespace simbil::kernels
