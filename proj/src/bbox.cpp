#include "simbil/bbox.hpp"

#include <algorithm>
#include <cmath>

#include "simbil/error.hpp"

namespace simbil {

bool is_valid(const BBox& b)
{
    auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
    return in_unit(b.x_min) && in_unit(b.y_min) && in_unit(b.x_max) && in_unit(b.y_max) &&
           b.x_min <= b.x_max && b.y_min <= b.y_max;
}

void require_valid(const BBox& b, const std::string& what)
{
    if (!is_valid(b))
        throw ValidationError(what + ": bbox must satisfy 0 <= min <= max <= 1");
}

double iou(const BBox& a, const BBox& b)
{
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

BBox enclosing(const BBox& a, const BBox& b)
{
    return {std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min),
            std::max(a.x_max, b.x_max), std::max(a.y_max, b.y_max)};
}

BBox clip_unit(const BBox& b)
{
    auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
    BBox r{c(b.x_min), c(b.y_min), c(b.x_max), c(b.y_max)};
    if (r.x_max < r.x_min) r.x_max = r.x_min;
    if (r.y_max < r.y_min) r.y_max = r.y_min;
    return r;
}

PixelRect rasterize(const BBox& b, int width, int height)
{
    // center (i + 0.5) in [lo, hi)  <=>  i in [ceil(lo - 0.5), ceil(hi - 0.5))
    auto lo = [](double edge, int n) { return std::clamp(static_cast<int>(std::ceil(edge * n - 0.5)), 0, n); };
    return {lo(b.x_min, width), lo(b.y_min, height), lo(b.x_max, width), lo(b.y_max, height)};
}

BBox normalize(const PixelRect& r, int width, int height)
{
    return {static_cast<double>(r.x0) / width, static_cast<double>(r.y0) / height,
            static_cast<double>(r.x1) / width, static_cast<double>(r.y1) / height};
}

void to_json(nlohmann::json& j, const BBox& b)
{
    j = nlohmann::json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

void from_json(const nlohmann::json& j, BBox& b)
{
    if (!j.is_array() || j.size() != 4)
        throw ParseError("", "bbox must be an array of 4 numbers");
    for (const auto& v : j)
        if (!v.is_number()) throw ParseError("", "bbox entries must be numbers");
    b = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

} // namespace simbil
