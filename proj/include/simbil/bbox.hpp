#pragma once

#include <array>
#include <string>

#include "json.hpp"

namespace simbil {

// Axis-aligned box in normalized image coordinates, corner encoded.
struct BBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    double center_x() const { return 0.5 * (x_min + x_max); }
    double center_y() const { return 0.5 * (y_min + y_max); }

    std::array<double, 4> as_array() const { return {x_min, y_min, x_max, y_max}; }
    static BBox from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }

    bool operator==(const BBox&) const = default;
};

// 0 <= min <= max <= 1 on both axes.
bool is_valid(const BBox& b);
void require_valid(const BBox& b, const std::string& what);

double iou(const BBox& a, const BBox& b);
BBox enclosing(const BBox& a, const BBox& b);
BBox clip_unit(const BBox& b);

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

    bool operator==(const PixelRect&) const = default;
};

// Pixel (i, j) is inside iff its center falls in [x_min*W, x_max*W) x [y_min*H, y_max*H).
PixelRect rasterize(const BBox& b, int width, int height);
BBox normalize(const PixelRect& r, int width, int height);

void to_json(nlohmann::json& j, const BBox& b);
void from_json(const nlohmann::json& j, BBox& b);

} // namespace simbil
