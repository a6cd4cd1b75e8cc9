#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "simbil/bbox.hpp"
#include "simbil/error.hpp"
#include "simbil/image.hpp"
#include "simbil/mask.hpp"
#include "simbil/network.hpp"

namespace simbil {

enum class GuideMode { none, global, row_wise };

std::string to_string(GuideMode m);
GuideMode guide_mode_from_string(const std::string& s);

// Background statistics the hole average is pulled towards.
struct GuideSpec {
    BBox region;
    GuideMode mode = GuideMode::global;
    std::vector<double> global;                // one value per channel
    std::vector<int> rows;                     // hole-intersecting rows (row_wise)
    std::vector<std::vector<double>> row_means; // per entry of `rows`, one value per channel
    std::vector<bool> row_fallback;            // row had no background pixels; uses `global`
};

class NoBackgroundError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Hole bbox grown by 25% of its size on each side, clipped to the image.
BBox default_guide_region(const Mask& mask);

GuideSpec compute_background_average(const Image& image, const Mask& mask, const BBox& region, GuideMode mode);

struct LossTerms {
    double data = 0.0;
    double guide = 0.0;
    double total = 0.0;
};

// ||(x - x0) . m||^2 summed over known pixels and channels.
double dip_loss(const Image& x, const Image& x0, const Mask& m);

// dip_loss + lambda * (1/C) * ||hole average - B||^2 (row_wise: mean over rows).
double guided_loss(const Image& x, const Image& x0, const Mask& m, const GuideSpec& guide, double lambda);

// Both terms plus d(total)/dx written into `grad` when non-null.
// A null guide (or mode none) evaluates the data term only.
LossTerms loss_terms(const Image& x, const Image& x0, const Mask& m, const GuideSpec* guide, double lambda,
                     Image* grad = nullptr);

enum class LossKind { dip, guided };

// Max relative error between the analytic gradient w.r.t. x and central
// differences. Relative error uses max(|a|, |n|, 1e-8) as denominator.
// Both losses are quadratic in x, so central differences carry no
// truncation error and a coarse step only cuts roundoff.
double gradcheck(LossKind kind, const Image& x, const Image& x0, const Mask& m, const GuideSpec* guide,
                 double lambda, double step = 1e-3);

struct InpaintSpec {
    int iterations = 2000;
    double lambda = 0.1;
    int dilation_radius = -1; // negative: default_dilation_radius for the image size
    GuideMode guide_mode = GuideMode::global;
    nn::NetworkConfig network{};
    std::uint64_t noise_seed = 0;
    std::uint64_t param_seed = 0;
    double learning_rate = 0.01;
    double input_noise_std = 0.0; // per-iteration perturbation of z; off by default

    bool operator==(const InpaintSpec&) const = default;
};

void validate(const InpaintSpec& spec);
nlohmann::json serialize(const InpaintSpec& spec);
// Missing keys keep their defaults.
InpaintSpec parse_inpaint_spec(const nlohmann::json& j, InpaintSpec base = {});

struct TraceRow {
    int iteration = 0;
    double data = 0.0;
    double guide = 0.0;
    double total = 0.0;
};

struct InpaintProgress {
    int iteration = 0;
    int iterations = 0;
    LossTerms loss;
};

using InpaintCallback = std::function<void(const InpaintProgress&)>;

struct InpaintResult {
    Image image;
    Mask hole;                  // after dilation
    std::vector<TraceRow> trace;
    std::optional<GuideSpec> guide;
    std::chrono::duration<double> elapsed{};
};

class NonFiniteLoss : public RuntimeError {
public:
    NonFiniteLoss(const std::string& what, std::vector<TraceRow> trace)
        : RuntimeError(what), trace_(std::move(trace)) {}
    const std::vector<TraceRow>& trace() const { return trace_; }

private:
    std::vector<TraceRow> trace_;
};

// Uniform [0, 0.1) single-channel map.
nn::Tensor make_noise(int height, int width, std::uint64_t seed);

InpaintResult inpaint(const Image& image, const Mask& mask, const InpaintSpec& spec,
                      const InpaintCallback& progress = {});

std::string trace_csv(const std::vector<TraceRow>& trace);
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace);

} // namespace simbil
