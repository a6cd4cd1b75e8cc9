#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "json.hpp"
#include "simbil/kernels.hpp"

namespace simbil::nn {

// Planar C x H x W tensor.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int channels, int height, int width, double fill = 0.0)
        : c(channels), h(height), w(width), v(static_cast<std::size_t>(channels) * height * width, fill) {}

    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    double& at(int ch, int y, int x) { return v[(ch * static_cast<std::size_t>(h) + y) * w + x]; }
    double at(int ch, int y, int x) const { return v[(ch * static_cast<std::size_t>(h) + y) * w + x]; }
};

struct Param {
    std::vector<double> value, grad, m, v;

    explicit Param(std::size_t n = 0) : value(n, 0.0), grad(n, 0.0), m(n, 0.0), v(n, 0.0) {}
    std::size_t size() const { return value.size(); }
};

// Uniform doubles in [0, 1) built from raw 64-bit engine output, so streams
// are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    std::uint64_t next() { return engine_(); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x) = 0;
    virtual Tensor backward(const Tensor& grad_y) = 0;
    virtual void collect(std::vector<Param*>&) {}
};

class Conv2d : public Layer {
public:
    Conv2d(int in_channels, int out_channels, int kernel, int stride, Rng& rng);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_y) override;
    void collect(std::vector<Param*>& out) override { out.push_back(&weight_); out.push_back(&bias_); }

private:
    int in_ch_, out_ch_, kernel_, stride_;
    Param weight_, bias_;
    Tensor padded_;
    int in_h_ = 0, in_w_ = 0;
};

// Per-channel normalisation over the spatial extent (batch of one).
class BatchNorm : public Layer {
public:
    explicit BatchNorm(int channels);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_y) override;
    void collect(std::vector<Param*>& out) override { out.push_back(&gamma_); out.push_back(&beta_); }

private:
    Param gamma_, beta_;
    Tensor normalized_;
    std::vector<double> inv_std_;
};

class LeakyRelu : public Layer {
public:
    explicit LeakyRelu(double slope = 0.2) : slope_(slope) {}
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_y) override;

private:
    double slope_;
    Tensor input_;
};

class Sigmoid : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_y) override;

private:
    Tensor output_;
};

// Bilinear x2 with half-pixel centres.
class Upsample2x : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_y) override;

private:
    int in_h_ = 0, in_w_ = 0;
};

class Sequential : public Layer {
public:
    Sequential& add(std::unique_ptr<Layer> layer)
    {
        layers_.push_back(std::move(layer));
        return *this;
    }
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_y) override;
    void collect(std::vector<Param*>& out) override;
    bool empty() const { return layers_.empty(); }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

struct NetworkConfig {
    int depth = 5;
    int channels = 64;
    int skip_channels = 4;

    bool operator==(const NetworkConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

// Deepest level count whose halving keeps both sides integral and >= 1.
int max_depth(int height, int width);

// Encoder-decoder with skip connections mapping a 1-channel noise map to an
// out_channels image in (0, 1).
class Generator {
public:
    Generator(const NetworkConfig& config, int height, int width, int out_channels, std::uint64_t seed);

    Tensor forward(const Tensor& z);
    // Accumulates parameter gradients for d(loss)/d(output).
    void backward(const Tensor& grad_out);
    void zero_grad();

    std::vector<Param*> parameters() { return params_; }
    std::size_t parameter_count() const;
    std::vector<double> flat_parameters() const;

    int height() const { return height_; }
    int width() const { return width_; }

private:
    struct Level {
        Sequential skip, down, up;
        int skip_channels = 0;
    };

    NetworkConfig config_;
    int height_, width_, out_channels_;
    std::vector<Level> levels_;
    std::vector<Upsample2x> upsamplers_;
    Sequential head_;
    std::vector<Param*> params_;
};

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Param*>& params);
    long steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

} // namespace simbil::nn
