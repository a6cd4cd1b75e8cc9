#include "simbil/mask.hpp"

#include <algorithm>
#include <cmath>

#include "simbil/error.hpp"
#include "simbil/image.hpp"
#include "simbil/kernels.hpp"

namespace simbil {

Mask::Mask(int width, int height, std::uint8_t fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill ? 1 : 0)
{
    if (width <= 0 || height <= 0) throw ValidationError("mask dimensions must be positive");
}

std::size_t Mask::hole_count() const
{
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{0}));
}

PixelRect Mask::hole_rect() const
{
    PixelRect r{width_, height_, 0, 0};
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x)
            if (hole(y, x)) {
                r.x0 = std::min(r.x0, x);
                r.y0 = std::min(r.y0, y);
                r.x1 = std::max(r.x1, x + 1);
                r.y1 = std::max(r.y1, y + 1);
            }
    if (r.x1 <= r.x0) return {};
    return r;
}

Mask dilate_hole(const Mask& mask, int radius)
{
    if (radius < 0) throw ValidationError("dilation radius must be non-negative");
    if (radius == 0) return mask;
    // Hole grows = known set erodes: windowed min over the 0/1 grid.
    Mask out = mask;
    kernels::window_min(mask.data(), out.data(), mask.width(), mask.height(), radius);
    return out;
}

Mask erode_foreground(const Mask& mask, int radius)
{
    if (radius < 0) throw ValidationError("erosion radius must be non-negative");
    if (radius == 0) return mask;
    Mask out = mask;
    kernels::window_max(mask.data(), out.data(), mask.width(), mask.height(), radius);
    return out;
}

Mask mask_from_bbox(const BBox& bbox, int width, int height)
{
    require_valid(bbox, "mask_from_bbox");
    if (bbox.area() <= 0.0) throw ValidationError("mask_from_bbox: degenerate zero-area bbox");
    const PixelRect r = rasterize(bbox, width, height);
    if (r.empty()) throw ValidationError("mask_from_bbox: bbox rasterizes to no pixels");
    Mask m(width, height, 1);
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) m.at(y, x) = 0;
    return m;
}

Mask hole_union(const Mask& a, const Mask& b)
{
    if (a.width() != b.width() || a.height() != b.height()) throw ValidationError("mask shape mismatch");
    Mask out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] & b.data()[i];
    return out;
}

Mask invert(const Mask& m)
{
    Mask out = m;
    for (auto& v : out.data()) v = v ? 0 : 1;
    return out;
}

int default_dilation_radius(int width, int height)
{
    const int side = std::max(width, height);
    return static_cast<int>(std::lround(3.0 * side / 64.0));
}

Mask decode_mask_png(std::span<const std::uint8_t> bytes)
{
    const Gray8 g = decode_png_gray(bytes);
    Mask m(g.width, g.height, 1);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = g.pixels[i] ? 1 : 0;
    return m;
}

Mask read_mask_png(const std::filesystem::path& path)
{
    return decode_mask_png(read_file(path));
}

std::vector<std::uint8_t> encode_mask_png(const Mask& m)
{
    Gray8 g{m.width(), m.height(), {}};
    g.pixels.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) g.pixels[i] = m.data()[i] ? 255 : 0;
    return encode_png_gray(g);
}

void write_mask_png(const std::filesystem::path& path, const Mask& m)
{
    write_file(path, encode_mask_png(m));
}

} // namespace simbil
