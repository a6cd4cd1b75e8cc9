#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "simbil/bbox.hpp"

namespace simbil {

// Binary grid: 1 = known pixel, 0 = hole.
class Mask {
public:
    Mask() = default;
    Mask(int width, int height, std::uint8_t fill = 1);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }

    std::uint8_t& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    std::uint8_t at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    bool known(int y, int x) const { return at(y, x) != 0; }
    bool hole(int y, int x) const { return at(y, x) == 0; }

    std::vector<std::uint8_t>& data() { return data_; }
    const std::vector<std::uint8_t>& data() const { return data_; }

    std::size_t hole_count() const;
    bool all_known() const { return hole_count() == 0; }
    // Tight pixel rectangle around the hole; empty when there is none.
    PixelRect hole_rect() const;

    bool operator==(const Mask&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

// Grows the hole by a square (Chebyshev) element of half-width radius.
// Windows are clipped at the image border.
Mask dilate_hole(const Mask& mask, int radius);

// Shrinks the hole by the same element: a pixel stays a hole only if every
// in-image pixel of its window is a hole.
Mask erode_foreground(const Mask& mask, int radius);

// Hole = rasterized bbox interior.
Mask mask_from_bbox(const BBox& bbox, int width, int height);

Mask hole_union(const Mask& a, const Mask& b);
Mask invert(const Mask& m);

// Default element half-width: round(3 * S / 64) for image side S.
int default_dilation_radius(int width, int height);

// 255 = known, 0 = hole. Any non-zero byte reads as known.
Mask read_mask_png(const std::filesystem::path& path);
Mask decode_mask_png(std::span<const std::uint8_t> bytes);
void write_mask_png(const std::filesystem::path& path, const Mask& m);
std::vector<std::uint8_t> encode_mask_png(const Mask& m);

} // namespace simbil
