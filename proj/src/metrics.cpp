#include "simbil/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "simbil/error.hpp"
#include "simbil/kernels.hpp"

namespace simbil {

namespace {

PixelRect region_rect(const Image& a, const Image& b, const std::optional<BBox>& region)
{
    if (!a.same_shape(b)) throw ValidationError("metric inputs differ in shape");
    if (!region) return {0, 0, a.width(), a.height()};
    const PixelRect r = rasterize(clip_unit(*region), a.width(), a.height());
    if (r.empty()) throw ValidationError("metric region is empty");
    return r;
}

} // namespace

double mae(const Image& a, const Image& b, const std::optional<BBox>& region)
{
    const PixelRect r = region_rect(a, b, region);
    double sum = 0.0;
    for (int c = 0; c < a.channels(); ++c)
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x) sum += std::abs(a.at(c, y, x) - b.at(c, y, x));
    const double n = static_cast<double>(a.channels()) * r.width() * r.height();
    return 100.0 * sum / n;
}

std::vector<double> gaussian_taps(int size, double sigma)
{
    std::vector<double> taps(size);
    const double mid = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i) {
        taps[i] = std::exp(-(i - mid) * (i - mid) / (2.0 * sigma * sigma));
        total += taps[i];
    }
    for (auto& t : taps) t /= total;
    return taps;
}

double ssim(const Image& a, const Image& b, const std::optional<BBox>& region, const SsimParams& p)
{
    const PixelRect r = region_rect(a, b, region);
    if (r.width() < p.window || r.height() < p.window)
        throw ValidationError("SSIM region " + std::to_string(r.width()) + "x" + std::to_string(r.height()) +
                              " is smaller than the " + std::to_string(p.window) + "px window");
    const Image ca = crop(a, r), cb = crop(b, r);
    const int w = r.width(), h = r.height();
    const int wo = w - p.window + 1, ho = h - p.window + 1;
    const auto taps = gaussian_taps(p.window, p.sigma);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);

    const std::size_t n_in = static_cast<std::size_t>(w) * h, n_out = static_cast<std::size_t>(wo) * ho;
    std::vector<double> aa(n_in), bb(n_in), ab(n_in);
    std::vector<double> mu_a(n_out), mu_b(n_out), e_aa(n_out), e_bb(n_out), e_ab(n_out);
    double total = 0.0;
    for (int c = 0; c < ca.channels(); ++c) {
        const auto pa = ca.plane(c), pb = cb.plane(c);
        for (std::size_t i = 0; i < n_in; ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        kernels::separable_filter_valid(pa, w, h, taps, mu_a);
        kernels::separable_filter_valid(pb, w, h, taps, mu_b);
        kernels::separable_filter_valid(aa, w, h, taps, e_aa);
        kernels::separable_filter_valid(bb, w, h, taps, e_bb);
        kernels::separable_filter_valid(ab, w, h, taps, e_ab);
        double sum = 0.0;
        for (std::size_t i = 0; i < n_out; ++i) {
            const double va = e_aa[i] - mu_a[i] * mu_a[i];
            const double vb = e_bb[i] - mu_b[i] * mu_b[i];
            const double cov = e_ab[i] - mu_a[i] * mu_b[i];
            const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
            const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
            sum += num / den;
        }
        total += sum / static_cast<double>(n_out);
    }
    return 100.0 * total / ca.channels();
}

MetricsReport report(const Image& before, const Image& after, const BBox& roi, const std::optional<Image>& reference)
{
    const Image& truth = reference ? *reference : before;
    MetricsReport m;
    m.resolution = std::max(after.width(), after.height());
    m.roi = clip_unit(roi);
    m.mae_all = mae(after, truth);
    m.ssim_all = ssim(after, truth);
    m.mae_roi = mae(after, truth, m.roi);

    PixelRect r = rasterize(m.roi, after.width(), after.height());
    const int win = SsimParams{}.window;
    if (r.width() < win || r.height() < win) {
        // Grow symmetrically to the window size, shifting inside the image.
        auto grow = [&](int& lo, int& hi, int n) {
            if (hi - lo >= win) return;
            const int extra = win - (hi - lo);
            lo -= extra / 2;
            hi += extra - extra / 2;
            if (lo < 0) { hi -= lo; lo = 0; }
            if (hi > n) { lo -= hi - n; hi = n; }
            lo = std::max(lo, 0);
        };
        grow(r.x0, r.x1, after.width());
        grow(r.y0, r.y1, after.height());
        m.roi_ssim_expanded = true;
    }
    m.ssim_roi = ssim(after, truth, normalize(r, after.width(), after.height()));
    return m;
}

nlohmann::json serialize(const MetricsReport& r, const SsimParams& p)
{
    return {{"mae_all", r.mae_all},
            {"ssim_all", r.ssim_all},
            {"mae_roi", r.mae_roi},
            {"ssim_roi", r.ssim_roi},
            {"resolution", r.resolution},
            {"roi", r.roi},
            {"roi_ssim_expanded", r.roi_ssim_expanded},
            {"ssim_params", {{"window", p.window}, {"sigma", p.sigma}, {"k1", p.k1}, {"k2", p.k2},
                             {"dynamic_range", p.dynamic_range}}}};
}

} // namespace simbil
