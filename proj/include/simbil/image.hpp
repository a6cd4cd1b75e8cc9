#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "simbil/bbox.hpp"

namespace simbil {

// Channel-planar image with values in [0, 1]. Pixel (c, y, x) lives at
// data[(c * height + y) * width + x].
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const { return data_.empty(); }

    double& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
    double at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }

    std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const double> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Image& o) const
    {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    bool operator==(const Image&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

// Rounds every value to the nearest multiple of 1/255 (8-bit storage grid).
Image quantize8(const Image& img);

// 8-bit PNG. Gray, RGB and their alpha variants load; alpha is dropped.
Image read_png(const std::filesystem::path& path);
Image decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const Image& img);
std::vector<std::uint8_t> encode_png(const Image& img);

// Raw 8-bit single channel helpers shared with the mask codec.
struct Gray8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};
Gray8 decode_png_gray(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png_gray(const Gray8& g);

Image crop(const Image& img, const PixelRect& r);

// Bilinear resample with half-pixel centers; a same-size resize is exact.
Image resize_bilinear(const Image& img, int width, int height);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

} // namespace simbil
