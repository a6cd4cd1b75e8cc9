#include "simbil/inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace simbil {

using nlohmann::json;

std::string to_string(GuideMode m)
{
    switch (m) {
    case GuideMode::none: return "none";
    case GuideMode::global: return "global";
    case GuideMode::row_wise: return "row_wise";
    }
    return "?";
}

GuideMode guide_mode_from_string(const std::string& s)
{
    if (s == "none") return GuideMode::none;
    if (s == "global") return GuideMode::global;
    if (s == "row_wise") return GuideMode::row_wise;
    throw ConfigError("unknown guide mode '" + s + "' (expected none, global or row_wise)");
}

BBox default_guide_region(const Mask& mask)
{
    const PixelRect r = mask.hole_rect();
    if (r.empty()) throw ValidationError("mask has no hole");
    const double w = mask.width(), h = mask.height();
    const double mx = 0.25 * r.width(), my = 0.25 * r.height();
    return clip_unit({(r.x0 - mx) / w, (r.y0 - my) / h, (r.x1 + mx) / w, (r.y1 + my) / h});
}

namespace {

void require_same_shape(const Image& x, const Image& x0, const Mask& m)
{
    if (!x.same_shape(x0) || x.width() != m.width() || x.height() != m.height())
        throw ValidationError("image / mask shape mismatch");
}

std::vector<int> hole_rows(const Mask& m)
{
    std::vector<int> rows;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.hole(y, x)) {
                rows.push_back(y);
                break;
            }
    return rows;
}

} // namespace

GuideSpec compute_background_average(const Image& image, const Mask& mask, const BBox& region, GuideMode mode)
{
    if (image.width() != mask.width() || image.height() != mask.height())
        throw ValidationError("image / mask shape mismatch");
    if (mode == GuideMode::none) throw ValidationError("compute_background_average needs global or row_wise mode");
    require_valid(region, "guide region");

    const int C = image.channels();
    const PixelRect r = rasterize(region, image.width(), image.height());
    GuideSpec g;
    g.region = region;
    g.mode = mode;
    g.global.assign(C, 0.0);
    std::size_t count = 0;
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
            if (mask.known(y, x)) {
                ++count;
                for (int c = 0; c < C; ++c) g.global[c] += image.at(c, y, x);
            }
    if (count == 0) throw NoBackgroundError("guide region contains no background pixels");
    for (auto& v : g.global) v /= static_cast<double>(count);

    if (mode == GuideMode::row_wise) {
        for (int y : hole_rows(mask)) {
            std::vector<double> sum(C, 0.0);
            std::size_t n = 0;
            if (y >= r.y0 && y < r.y1)
                for (int x = r.x0; x < r.x1; ++x)
                    if (mask.known(y, x)) {
                        ++n;
                        for (int c = 0; c < C; ++c) sum[c] += image.at(c, y, x);
                    }
            g.rows.push_back(y);
            if (n == 0) {
                g.row_means.push_back(g.global);
                g.row_fallback.push_back(true);
            } else {
                for (auto& v : sum) v /= static_cast<double>(n);
                g.row_means.push_back(std::move(sum));
                g.row_fallback.push_back(false);
            }
        }
    }
    return g;
}

LossTerms loss_terms(const Image& x, const Image& x0, const Mask& m, const GuideSpec* guide, double lambda,
                     Image* grad)
{
    require_same_shape(x, x0, m);
    const int C = x.channels(), H = x.height(), W = x.width();
    if (grad) *grad = Image(W, H, C, 0.0);

    LossTerms t;
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                if (!m.known(y, xx)) continue;
                const double d = x.at(c, y, xx) - x0.at(c, y, xx);
                t.data += d * d;
                if (grad) grad->at(c, y, xx) = 2.0 * d;
            }

    if (guide && guide->mode != GuideMode::none) {
        if (static_cast<int>(guide->global.size()) != C) throw ValidationError("guide channel count mismatch");
        if (guide->mode == GuideMode::global) {
            std::size_t n = m.hole_count();
            if (n > 0) {
                std::vector<double> avg(C, 0.0);
                for (int c = 0; c < C; ++c)
                    for (int y = 0; y < H; ++y)
                        for (int xx = 0; xx < W; ++xx)
                            if (m.hole(y, xx)) avg[c] += x.at(c, y, xx);
                double dist = 0.0;
                for (int c = 0; c < C; ++c) {
                    avg[c] /= static_cast<double>(n);
                    const double diff = avg[c] - guide->global[c];
                    dist += diff * diff;
                    if (grad) {
                        const double g = lambda / C * 2.0 * diff / static_cast<double>(n);
                        for (int y = 0; y < H; ++y)
                            for (int xx = 0; xx < W; ++xx)
                                if (m.hole(y, xx)) grad->at(c, y, xx) += g;
                    }
                }
                t.guide = lambda / C * dist;
            }
        } else {
            const auto rows = hole_rows(m);
            if (rows != guide->rows) throw ValidationError("row-wise guide does not match the mask's hole rows");
            const double R = static_cast<double>(rows.size());
            double dist = 0.0;
            for (std::size_t k = 0; k < rows.size(); ++k) {
                const int y = rows[k];
                std::size_t n = 0;
                for (int xx = 0; xx < W; ++xx) n += m.hole(y, xx);
                for (int c = 0; c < C; ++c) {
                    double avg = 0.0;
                    for (int xx = 0; xx < W; ++xx)
                        if (m.hole(y, xx)) avg += x.at(c, y, xx);
                    avg /= static_cast<double>(n);
                    const double diff = avg - guide->row_means[k][c];
                    dist += diff * diff;
                    if (grad) {
                        const double g = lambda / (C * R) * 2.0 * diff / static_cast<double>(n);
                        for (int xx = 0; xx < W; ++xx)
                            if (m.hole(y, xx)) grad->at(c, y, xx) += g;
                    }
                }
            }
            if (!rows.empty()) t.guide = lambda / (C * R) * dist;
        }
    }
    t.total = t.data + t.guide;
    return t;
}

double dip_loss(const Image& x, const Image& x0, const Mask& m)
{
    return loss_terms(x, x0, m, nullptr, 0.0).data;
}

double guided_loss(const Image& x, const Image& x0, const Mask& m, const GuideSpec& guide, double lambda)
{
    return loss_terms(x, x0, m, &guide, lambda).total;
}

double gradcheck(LossKind kind, const Image& x, const Image& x0, const Mask& m, const GuideSpec* guide,
                 double lambda, double step)
{
    if (x.width() > 8 || x.height() > 8) throw ValidationError("gradcheck expects images of at most 8x8");
    const GuideSpec* g = kind == LossKind::guided ? guide : nullptr;
    if (kind == LossKind::guided && !g) throw ValidationError("guided gradcheck needs a guide");
    Image analytic;
    loss_terms(x, x0, m, g, lambda, &analytic);
    double worst = 0.0;
    Image probe = x;
    for (std::size_t i = 0; i < probe.data().size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + step;
        const double up = loss_terms(probe, x0, m, g, lambda).total;
        probe.data()[i] = orig - step;
        const double down = loss_terms(probe, x0, m, g, lambda).total;
        probe.data()[i] = orig;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic.data()[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

void validate(const InpaintSpec& spec)
{
    if (spec.iterations < 1) throw ConfigError("iterations must be at least 1");
    if (!(spec.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (!(spec.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(spec.input_noise_std >= 0.0)) throw ConfigError("input noise std must be non-negative");
}

json serialize(const InpaintSpec& s)
{
    return {{"iterations", s.iterations},
            {"lambda", s.lambda},
            {"dilation_radius", s.dilation_radius},
            {"guide_mode", to_string(s.guide_mode)},
            {"network", s.network},
            {"noise_seed", s.noise_seed},
            {"param_seed", s.param_seed},
            {"learning_rate", s.learning_rate},
            {"input_noise_std", s.input_noise_std}};
}

InpaintSpec parse_inpaint_spec(const json& j, InpaintSpec s)
{
    if (!j.is_object()) throw ParseError("/inpaint", "expected an object");
    try {
        s.iterations = j.value("iterations", s.iterations);
        s.lambda = j.value("lambda", s.lambda);
        s.dilation_radius = j.value("dilation_radius", s.dilation_radius);
        if (j.contains("guide_mode")) s.guide_mode = guide_mode_from_string(j.at("guide_mode").get<std::string>());
        if (j.contains("network")) s.network = j.at("network").get<nn::NetworkConfig>();
        s.noise_seed = j.value("noise_seed", s.noise_seed);
        s.param_seed = j.value("param_seed", s.param_seed);
        s.learning_rate = j.value("learning_rate", s.learning_rate);
        s.input_noise_std = j.value("input_noise_std", s.input_noise_std);
    } catch (const json::exception& e) {
        throw ParseError("/inpaint", e.what());
    }
    validate(s);
    return s;
}

nn::Tensor make_noise(int height, int width, std::uint64_t seed)
{
    nn::Rng rng(seed);
    nn::Tensor z(1, height, width);
    for (auto& v : z.v) v = 0.1 * rng.uniform();
    return z;
}

InpaintResult inpaint(const Image& image, const Mask& mask, const InpaintSpec& spec, const InpaintCallback& progress)
{
    validate(spec);
    if (image.width() != mask.width() || image.height() != mask.height())
        throw ValidationError("image / mask shape mismatch");
    const auto t0 = std::chrono::steady_clock::now();

    InpaintResult result;
    const int radius = spec.dilation_radius < 0 ? default_dilation_radius(image.width(), image.height())
                                                 : spec.dilation_radius;
    result.hole = dilate_hole(mask, radius);
    if (result.hole.all_known()) {
        result.image = image;
        result.elapsed = std::chrono::steady_clock::now() - t0;
        return result;
    }
    if (spec.guide_mode != GuideMode::none)
        result.guide = compute_background_average(image, result.hole, default_guide_region(result.hole),
                                                  spec.guide_mode);

    // The network runs on the image padded up to a multiple of 2^depth; the
    // loss only sees the top-left image-sized window.
    const int unit = 1 << spec.network.depth;
    const int net_h = (image.height() + unit - 1) / unit * unit;
    const int net_w = (image.width() + unit - 1) / unit * unit;
    const int C = image.channels();
    nn::Generator net(spec.network, net_h, net_w, C, spec.param_seed);
    nn::Adam adam(spec.learning_rate);
    const nn::Tensor z = make_noise(net_h, net_w, spec.noise_seed);
    nn::Rng perturb(spec.noise_seed ^ 0x9e3779b97f4a7c15ULL);

    auto to_image = [&](const nn::Tensor& t) {
        Image x(image.width(), image.height(), C);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < image.height(); ++y)
                for (int xx = 0; xx < image.width(); ++xx) x.at(c, y, xx) = t.at(c, y, xx);
        return x;
    };

    const GuideSpec* guide = result.guide ? &*result.guide : nullptr;
    Image grad;
    for (int it = 1; it <= spec.iterations; ++it) {
        nn::Tensor input = z;
        if (spec.input_noise_std > 0.0)
            for (auto& v : input.v) v += spec.input_noise_std * perturb.normal();
        const Image x = to_image(net.forward(input));
        const LossTerms terms = loss_terms(x, image, result.hole, guide, spec.lambda, &grad);
        result.trace.push_back({it, terms.data, terms.guide, terms.total});
        if (!std::isfinite(terms.total))
            throw NonFiniteLoss("non-finite loss at iteration " + std::to_string(it), result.trace);

        nn::Tensor g(C, net_h, net_w);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < image.height(); ++y)
                for (int xx = 0; xx < image.width(); ++xx) g.at(c, y, xx) = grad.at(c, y, xx);
        net.zero_grad();
        net.backward(g);
        adam.step(net.parameters());
        if (progress) progress({it, spec.iterations, terms});
    }

    const Image out = to_image(net.forward(z));
    result.image = image;
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < image.height(); ++y)
            for (int xx = 0; xx < image.width(); ++xx)
                if (result.hole.hole(y, xx)) result.image.at(c, y, xx) = out.at(c, y, xx);
    result.elapsed = std::chrono::steady_clock::now() - t0;
    return result;
}

std::string trace_csv(const std::vector<TraceRow>& trace)
{
    std::ostringstream os;
    os.precision(17);
    os << "iteration,data_term,guide_term,total\n";
    for (const auto& r : trace) os << r.iteration << ',' << r.data << ',' << r.guide << ',' << r.total << '\n';
    return os.str();
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace)
{
    write_text(path, trace_csv(trace));
}

} // namespace simbil
