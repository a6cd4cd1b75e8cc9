#pragma once

#include <optional>

#include "json.hpp"
#include "simbil/bbox.hpp"
#include "simbil/image.hpp"

namespace simbil {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

// Mean absolute difference over the (rasterized) region, x100.
double mae(const Image& a, const Image& b, const std::optional<BBox>& region = std::nullopt);

// Mean local SSIM over windows fully inside the region, channel-averaged, x100.
double ssim(const Image& a, const Image& b, const std::optional<BBox>& region = std::nullopt,
            const SsimParams& params = {});

// Normalised 1-D Gaussian taps.
std::vector<double> gaussian_taps(int size, double sigma);

struct MetricsReport {
    double mae_all = 0.0;
    double ssim_all = 0.0;
    double mae_roi = 0.0;
    double ssim_roi = 0.0;
    int resolution = 0;
    BBox roi;
    bool roi_ssim_expanded = false; // RoI smaller than the window; SSIM used a grown box
};

MetricsReport report(const Image& before, const Image& after, const BBox& roi,
                     const std::optional<Image>& reference = std::nullopt);

nlohmann::json serialize(const MetricsReport& r, const SsimParams& params = {});

} // namespace simbil
