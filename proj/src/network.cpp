#include "simbil/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "simbil/error.hpp"

namespace simbil::nn {

double Rng::normal()
{
    // Box-Muller on our own uniform stream.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

int reflect(int p, int n)
{
    if (n == 1) return 0;
    if (p < 0) return -p;
    if (p >= n) return 2 * n - 2 - p;
    return p;
}

} // namespace

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, Rng& rng)
    : in_ch_(in_channels), out_ch_(out_channels), kernel_(kernel), stride_(stride),
      weight_(static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel), bias_(out_channels)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
    for (auto& w : weight_.value) w = rng.uniform(-bound, bound);
    for (auto& b : bias_.value) b = rng.uniform(-bound, bound);
}

Tensor Conv2d::forward(const Tensor& x)
{
    in_h_ = x.h;
    in_w_ = x.w;
    const int pad = kernel_ / 2;
    padded_ = Tensor(x.c, x.h + 2 * pad, x.w + 2 * pad);
    for (int c = 0; c < x.c; ++c)
        for (int y = 0; y < padded_.h; ++y) {
            const int sy = reflect(y - pad, x.h);
            for (int xx = 0; xx < padded_.w; ++xx) padded_.at(c, y, xx) = x.at(c, sy, reflect(xx - pad, x.w));
        }
    const kernels::ConvShape s{in_ch_, out_ch_, kernel_, stride_, padded_.h, padded_.w};
    Tensor y(out_ch_, s.out_height(), s.out_width());
    kernels::conv2d_forward(s, padded_.v, weight_.value, bias_.value, y.v);
    return y;
}

Tensor Conv2d::backward(const Tensor& grad_y)
{
    const int pad = kernel_ / 2;
    const kernels::ConvShape s{in_ch_, out_ch_, kernel_, stride_, padded_.h, padded_.w};
    kernels::conv2d_backward_weight(s, padded_.v, grad_y.v, weight_.grad, bias_.grad);
    Tensor gpad(in_ch_, padded_.h, padded_.w);
    kernels::conv2d_backward_input(s, grad_y.v, weight_.value, gpad.v);
    Tensor gx(in_ch_, in_h_, in_w_);
    for (int c = 0; c < in_ch_; ++c)
        for (int y = 0; y < gpad.h; ++y) {
            const int sy = reflect(y - pad, in_h_);
            for (int xx = 0; xx < gpad.w; ++xx) gx.at(c, sy, reflect(xx - pad, in_w_)) += gpad.at(c, y, xx);
        }
    return gx;
}

BatchNorm::BatchNorm(int channels) : gamma_(channels), beta_(channels)
{
    std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0);
}

Tensor BatchNorm::forward(const Tensor& x)
{
    constexpr double eps = 1e-5;
    normalized_ = Tensor(x.c, x.h, x.w);
    inv_std_.assign(x.c, 0.0);
    Tensor y(x.c, x.h, x.w);
    const std::size_t n = x.plane();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < x.c; ++c) {
        const double* src = x.v.data() + c * n;
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += src[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std_[c] = inv;
        double* xn = normalized_.v.data() + c * n;
        double* dst = y.v.data() + c * n;
        for (std::size_t i = 0; i < n; ++i) {
            xn[i] = (src[i] - mean) * inv;
            dst[i] = gamma_.value[c] * xn[i] + beta_.value[c];
        }
    }
    return y;
}

Tensor BatchNorm::backward(const Tensor& grad_y)
{
    Tensor gx(grad_y.c, grad_y.h, grad_y.w);
    const std::size_t n = grad_y.plane();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < grad_y.c; ++c) {
        const double* g = grad_y.v.data() + c * n;
        const double* xn = normalized_.v.data() + c * n;
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum_g += g[i];
            sum_gx += g[i] * xn[i];
        }
        gamma_.grad[c] += sum_gx;
        beta_.grad[c] += sum_g;
        const double mean_g = sum_g / static_cast<double>(n);
        const double mean_gx = sum_gx / static_cast<double>(n);
        const double scale = gamma_.value[c] * inv_std_[c];
        double* dst = gx.v.data() + c * n;
        for (std::size_t i = 0; i < n; ++i) dst[i] = scale * (g[i] - mean_g - xn[i] * mean_gx);
    }
    return gx;
}

Tensor LeakyRelu::forward(const Tensor& x)
{
    input_ = x;
    Tensor y = x;
    for (auto& v : y.v)
        if (v < 0.0) v *= slope_;
    return y;
}

Tensor LeakyRelu::backward(const Tensor& grad_y)
{
    Tensor g = grad_y;
    for (std::size_t i = 0; i < g.v.size(); ++i)
        if (input_.v[i] < 0.0) g.v[i] *= slope_;
    return g;
}

Tensor Sigmoid::forward(const Tensor& x)
{
    output_ = x;
    for (auto& v : output_.v) v = 1.0 / (1.0 + std::exp(-v));
    return output_;
}

Tensor Sigmoid::backward(const Tensor& grad_y)
{
    Tensor g = grad_y;
    for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] *= output_.v[i] * (1.0 - output_.v[i]);
    return g;
}

namespace {

// Output index 2i uses (0.75 * in[i] + 0.25 * in[i-1]); 2i+1 uses in[i+1].
struct Tap {
    int near, far;
};

Tap tap(int out, int n)
{
    const int i = out / 2;
    const int j = (out % 2 == 0) ? std::max(i - 1, 0) : std::min(i + 1, n - 1);
    return {i, j};
}

} // namespace

Tensor Upsample2x::forward(const Tensor& x)
{
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor tmp(x.c, x.h, 2 * x.w);
    for (int c = 0; c < x.c; ++c)
        for (int y = 0; y < x.h; ++y)
            for (int ox = 0; ox < tmp.w; ++ox) {
                const Tap t = tap(ox, x.w);
                tmp.at(c, y, ox) = 0.75 * x.at(c, y, t.near) + 0.25 * x.at(c, y, t.far);
            }
    Tensor out(x.c, 2 * x.h, 2 * x.w);
    for (int c = 0; c < x.c; ++c)
        for (int oy = 0; oy < out.h; ++oy) {
            const Tap t = tap(oy, x.h);
            for (int ox = 0; ox < out.w; ++ox)
                out.at(c, oy, ox) = 0.75 * tmp.at(c, t.near, ox) + 0.25 * tmp.at(c, t.far, ox);
        }
    return out;
}

Tensor Upsample2x::backward(const Tensor& grad_y)
{
    Tensor tmp(grad_y.c, in_h_, grad_y.w);
    for (int c = 0; c < grad_y.c; ++c)
        for (int oy = 0; oy < grad_y.h; ++oy) {
            const Tap t = tap(oy, in_h_);
            for (int ox = 0; ox < grad_y.w; ++ox) {
                tmp.at(c, t.near, ox) += 0.75 * grad_y.at(c, oy, ox);
                tmp.at(c, t.far, ox) += 0.25 * grad_y.at(c, oy, ox);
            }
        }
    Tensor gx(grad_y.c, in_h_, in_w_);
    for (int c = 0; c < grad_y.c; ++c)
        for (int y = 0; y < in_h_; ++y)
            for (int ox = 0; ox < tmp.w; ++ox) {
                const Tap t = tap(ox, in_w_);
                gx.at(c, y, t.near) += 0.75 * tmp.at(c, y, ox);
                gx.at(c, y, t.far) += 0.25 * tmp.at(c, y, ox);
            }
    return gx;
}

Tensor Sequential::forward(const Tensor& x)
{
    Tensor y = x;
    for (auto& l : layers_) y = l->forward(y);
    return y;
}

Tensor Sequential::backward(const Tensor& grad_y)
{
    Tensor g = grad_y;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

void Sequential::collect(std::vector<Param*>& out)
{
    for (auto& l : layers_) l->collect(out);
}

void to_json(nlohmann::json& j, const NetworkConfig& c)
{
    j = {{"depth", c.depth}, {"channels", c.channels}, {"skip_channels", c.skip_channels}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c)
{
    c.depth = j.value("depth", c.depth);
    c.channels = j.value("channels", c.channels);
    c.skip_channels = j.value("skip_channels", c.skip_channels);
}

int max_depth(int height, int width)
{
    int d = 0;
    while (height % 2 == 0 && width % 2 == 0 && height >= 2 && width >= 2) {
        height /= 2;
        width /= 2;
        ++d;
    }
    return d;
}

Generator::Generator(const NetworkConfig& config, int height, int width, int out_channels, std::uint64_t seed)
    : config_(config), height_(height), width_(width), out_channels_(out_channels)
{
    if (config.depth < 1) throw ConfigError("network depth must be at least 1");
    if (config.channels < 1 || config.skip_channels < 0) throw ConfigError("invalid network channel counts");
    if (config.depth > max_depth(height, width))
        throw ConfigError("network depth " + std::to_string(config.depth) + " too large for " +
                          std::to_string(width) + "x" + std::to_string(height) + " (max " +
                          std::to_string(max_depth(height, width)) + ")");

    Rng rng(seed);
    const int ch = config.channels, sk = config.skip_channels;
    levels_.resize(config.depth);
    upsamplers_.resize(config.depth);
    for (int l = 0; l < config.depth; ++l) {
        Level& lv = levels_[l];
        const int in = l == 0 ? 1 : ch;
        lv.skip_channels = sk;
        if (sk > 0) {
            lv.skip.add(std::make_unique<Conv2d>(in, sk, 1, 1, rng))
                .add(std::make_unique<BatchNorm>(sk))
                .add(std::make_unique<LeakyRelu>());
        }
        lv.down.add(std::make_unique<Conv2d>(in, ch, 3, 2, rng))
            .add(std::make_unique<BatchNorm>(ch))
            .add(std::make_unique<LeakyRelu>())
            .add(std::make_unique<Conv2d>(ch, ch, 3, 1, rng))
            .add(std::make_unique<BatchNorm>(ch))
            .add(std::make_unique<LeakyRelu>());
        lv.up.add(std::make_unique<BatchNorm>(sk + ch))
            .add(std::make_unique<Conv2d>(sk + ch, ch, 3, 1, rng))
            .add(std::make_unique<BatchNorm>(ch))
            .add(std::make_unique<LeakyRelu>())
            .add(std::make_unique<Conv2d>(ch, ch, 1, 1, rng))
            .add(std::make_unique<BatchNorm>(ch))
            .add(std::make_unique<LeakyRelu>());
    }
    head_.add(std::make_unique<Conv2d>(ch, out_channels, 1, 1, rng)).add(std::make_unique<Sigmoid>());

    for (auto& lv : levels_) {
        lv.skip.collect(params_);
        lv.down.collect(params_);
        lv.up.collect(params_);
    }
    head_.collect(params_);
}

Tensor Generator::forward(const Tensor& z)
{
    if (z.c != 1 || z.h != height_ || z.w != width_) throw ValidationError("generator input has the wrong shape");
    const int depth = static_cast<int>(levels_.size());
    std::vector<Tensor> skips(depth);
    Tensor x = z;
    for (int l = 0; l < depth; ++l) {
        if (levels_[l].skip_channels > 0) skips[l] = levels_[l].skip.forward(x);
        x = levels_[l].down.forward(x);
    }
    for (int l = depth - 1; l >= 0; --l) {
        Tensor u = upsamplers_[l].forward(x);
        if (levels_[l].skip_channels > 0) {
            Tensor cat(skips[l].c + u.c, u.h, u.w);
            std::copy(skips[l].v.begin(), skips[l].v.end(), cat.v.begin());
            std::copy(u.v.begin(), u.v.end(), cat.v.begin() + static_cast<std::ptrdiff_t>(skips[l].v.size()));
            u = std::move(cat);
        }
        x = levels_[l].up.forward(u);
    }
    return head_.forward(x);
}

void Generator::backward(const Tensor& grad_out)
{
    const int depth = static_cast<int>(levels_.size());
    std::vector<Tensor> skip_grads(depth);
    Tensor g = head_.backward(grad_out);
    for (int l = 0; l < depth; ++l) {
        Tensor gc = levels_[l].up.backward(g);
        const int sk = levels_[l].skip_channels;
        if (sk > 0) {
            const std::size_t split = static_cast<std::size_t>(sk) * gc.plane();
            skip_grads[l] = Tensor(sk, gc.h, gc.w);
            std::copy(gc.v.begin(), gc.v.begin() + static_cast<std::ptrdiff_t>(split), skip_grads[l].v.begin());
            Tensor gu(gc.c - sk, gc.h, gc.w);
            std::copy(gc.v.begin() + static_cast<std::ptrdiff_t>(split), gc.v.end(), gu.v.begin());
            gc = std::move(gu);
        }
        g = upsamplers_[l].backward(gc);
    }
    for (int l = depth - 1; l >= 0; --l) {
        Tensor gin = levels_[l].down.backward(g);
        if (levels_[l].skip_channels > 0) {
            const Tensor gs = levels_[l].skip.backward(skip_grads[l]);
            for (std::size_t i = 0; i < gin.v.size(); ++i) gin.v[i] += gs.v[i];
        }
        g = std::move(gin);
    }
}

void Generator::zero_grad()
{
    for (Param* p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::size_t Generator::parameter_count() const
{
    std::size_t n = 0;
    for (const Param* p : params_) n += p->size();
    return n;
}

std::vector<double> Generator::flat_parameters() const
{
    std::vector<double> out;
    for (const Param* p : params_) out.insert(out.end(), p->value.begin(), p->value.end());
    return out;
}

void Adam::step(const std::vector<Param*>& params)
{
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Param* p : params)
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double g = p->grad[i];
            p->m[i] = beta1_ * p->m[i] + (1.0 - beta1_) * g;
            p->v[i] = beta2_ * p->v[i] + (1.0 - beta2_) * g * g;
            const double mhat = p->m[i] / c1;
            const double vhat = p->v[i] / c2;
            p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
}

} // namespace simbil::nn
