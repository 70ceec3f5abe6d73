#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dacesr/rng.hpp"

namespace dacesr::nn {

/// Dense row-major tensor of doubles. Feature maps are stored HWC so that a
/// row-major flatten is the raster token order used by the scan.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        v.assign(n, 0.0);
    }
    size_t size() const { return v.size(); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
    double* data() { return v.data(); }
    const double* data() const { return v.data(); }
};

/// Learnable tensor with gradient and Adam state.
struct Param {
    std::string name;
    Tensor w;
    Tensor g;
    Tensor m;
    Tensor s;

    void init(std::string n, std::vector<int> shape) {
        name = std::move(n);
        w = Tensor(shape);
        g = Tensor(shape);
        m = Tensor(shape);
        s = Tensor(shape);
    }
    void fill_uniform(Rng& rng, double lo, double hi) {
        for (double& x : w.v) x = rng.uniform(lo, hi);
    }
};

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
    void step(const std::vector<Param*>& params);
    int iterations() const { return t_; }

private:
    AdamConfig cfg_;
    int t_ = 0;
};

void zero_grads(const std::vector<Param*>& params);

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}
inline double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

// ---- conv2d (zero padding) ----
// weight layout [kh][kw][cin][cout], bias [cout]; x is [H,W,Cin].
struct Conv2d {
    Param weight, bias;
    int kh = 3, kw = 3, cin = 0, cout = 0, stride = 1, pad = 1;

    void init(const std::string& name, int k, int in, int out, int stride_, Rng& rng);
    Tensor forward(const Tensor& x) const;
    /// Accumulates weight/bias grads and returns grad w.r.t. x.
    Tensor backward(const Tensor& x, const Tensor& gy);
    /// Forward with an additive weight delta of the same layout (LoRA path).
    Tensor forward_delta(const Tensor& x, const Tensor& wdelta) const;
    Tensor backward_delta(const Tensor& x, const Tensor& gy, const Tensor& wdelta,
                          Tensor& gwdelta) const;
    std::vector<Param*> params() { return {&weight, &bias}; }
};

// ---- per-token linear: x [L,Din] -> y [L,Dout], weight [Din,Dout] ----
struct Linear {
    Param weight, bias;
    int din = 0, dout = 0;

    void init(const std::string& name, int in, int out, Rng& rng);
    Tensor forward(const Tensor& x) const;
    Tensor backward(const Tensor& x, const Tensor& gy);
    std::vector<Param*> params() { return {&weight, &bias}; }
};

// ---- layer norm over the channel (last) dimension ----
struct LayerNorm {
    Param gamma, beta;
    int dim = 0;

    void init(const std::string& name, int d);
    Tensor forward(const Tensor& x, Tensor& cache_mean, Tensor& cache_inv_std) const;
    Tensor backward(const Tensor& x, const Tensor& gy, const Tensor& mean,
                    const Tensor& inv_std);
    std::vector<Param*> params() { return {&gamma, &beta}; }
};

// ---- causal depthwise 1-D conv over tokens: x [L,D], weight [k,D] ----
struct CausalConv1d {
    Param weight, bias;
    int k = 4, dim = 0;

    void init(const std::string& name, int width, int d, Rng& rng);
    Tensor forward(const Tensor& x) const;
    Tensor backward(const Tensor& x, const Tensor& gy);
    std::vector<Param*> params() { return {&weight, &bias}; }
};

/// Channel-to-space, channel-major sub-pixel order:
/// out(yr+dy, xr+dx, c) = in(y, x, c*r^2 + dy*r + dx).
Tensor pixel_shuffle(const Tensor& x, int r);
Tensor pixel_unshuffle(const Tensor& x, int r);
Tensor pixel_shuffle_backward(const Tensor& gy, int r);

/// Bilinear feature-map resize [H,W,C] -> [oh,ow,C] and its transpose.
Tensor bilinear_resize(const Tensor& x, int oh, int ow);
Tensor bilinear_resize_backward(const Tensor& gy, int in_h, int in_w);

/// Nearest-neighbor ×r upsample and its transpose (sums contributions).
Tensor upsample_nearest(const Tensor& x, int r);
Tensor upsample_nearest_backward(const Tensor& gy, int r);

// ---- checkpoint I/O: JSON manifest + flat binary blob ----
struct NamedTensor {
    std::string name;
    const Tensor* t;
};

/// Writes base.json + base.bin; dtype is "f64" or "f32".
void save_checkpoint(const std::string& base_path,
                     const std::vector<NamedTensor>& tensors,
                     const std::string& dtype = "f64");
/// Loads by name into pre-shaped tensors; throws on missing name or shape mismatch.
void load_checkpoint(const std::string& base_path,
                     const std::vector<std::pair<std::string, Tensor*>>& tensors);

std::vector<NamedTensor> named_params(const std::vector<Param*>& params);
std::vector<std::pair<std::string, Tensor*>> mutable_params(
    const std::vector<Param*>& params);

/// FNV-1a hash of a tensor's raw bytes (golden-value tests, base-frozen checks).
uint64_t tensor_hash(const Tensor& t);

}  // namespace dacesr::nn
