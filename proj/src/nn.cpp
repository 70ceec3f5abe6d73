#include "dacesr/nn.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dacesr::nn {

using nlohmann::json;

void Adam::step(const std::vector<Param*>& params) {
    ++t_;
    for (Param* p : params) {
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (size_t i = 0; i < p->w.size(); ++i) {
            double g = p->g.v[i];
            p->m.v[i] = cfg_.beta1 * p->m.v[i] + (1.0 - cfg_.beta1) * g;
            p->s.v[i] = cfg_.beta2 * p->s.v[i] + (1.0 - cfg_.beta2) * g * g;
            double mhat = p->m.v[i] / bc1;
            double shat = p->s.v[i] / bc2;
            p->w.v[i] -= cfg_.lr * mhat / (std::sqrt(shat) + cfg_.eps);
        }
    }
}

void zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params) p->g.zero();
}

// ---------------- conv2d ----------------

void Conv2d::init(const std::string& name, int k, int in, int out, int stride_,
                  Rng& rng) {
    kh = kw = k;
    cin = in;
    cout = out;
    stride = stride_;
    pad = k / 2;
    weight.init(name + ".weight", {kh, kw, cin, cout});
    bias.init(name + ".bias", {cout});
    double bound = std::sqrt(1.0 / (k * k * in));
    weight.fill_uniform(rng, -bound, bound);
}

Tensor Conv2d::forward(const Tensor& x) const {
    const int h = x.dim(0), w = x.dim(1);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
    Tensor y({oh, ow, cout});
    const double* wp = weight.w.data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            double* out = y.data() + (static_cast<size_t>(oy) * ow + ox) * cout;
            for (int c = 0; c < cout; ++c) out[c] = bias.w.v[c];
            for (int ky = 0; ky < kh; ++ky) {
                int sy = oy * stride - pad + ky;
                if (sy < 0 || sy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int sx = ox * stride - pad + kx;
                    if (sx < 0 || sx >= w) continue;
                    const double* in = x.data() + (static_cast<size_t>(sy) * w + sx) * cin;
                    const double* wrow = wp + (static_cast<size_t>(ky) * kw + kx) * cin * cout;
                    for (int i = 0; i < cin; ++i) {
                        double s = in[i];
                        const double* wr = wrow + static_cast<size_t>(i) * cout;
                        for (int c = 0; c < cout; ++c) out[c] += s * wr[c];
                    }
                }
            }
        }
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& gy) {
    const int h = x.dim(0), w = x.dim(1);
    const int oh = gy.dim(0), ow = gy.dim(1);
    Tensor gx({h, w, cin});
    double* gwp = weight.g.data();
    const double* wp = weight.w.data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const double* go = gy.data() + (static_cast<size_t>(oy) * ow + ox) * cout;
            for (int c = 0; c < cout; ++c) bias.g.v[c] += go[c];
            for (int ky = 0; ky < kh; ++ky) {
                int sy = oy * stride - pad + ky;
                if (sy < 0 || sy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int sx = ox * stride - pad + kx;
                    if (sx < 0 || sx >= w) continue;
                    const double* in = x.data() + (static_cast<size_t>(sy) * w + sx) * cin;
                    double* gin = gx.data() + (static_cast<size_t>(sy) * w + sx) * cin;
                    size_t base = (static_cast<size_t>(ky) * kw + kx) * cin * cout;
                    for (int i = 0; i < cin; ++i) {
                        const double* wr = wp + base + static_cast<size_t>(i) * cout;
                        double* gwr = gwp + base + static_cast<size_t>(i) * cout;
                        double s = in[i];
                        double acc = 0.0;
                        for (int c = 0; c < cout; ++c) {
                            gwr[c] += s * go[c];
                            acc += wr[c] * go[c];
                        }
                        gin[i] += acc;
                    }
                }
            }
        }
    }
    return gx;
}

Tensor Conv2d::forward_delta(const Tensor& x, const Tensor& wdelta) const {
    const int h = x.dim(0), w = x.dim(1);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
    Tensor y({oh, ow, cout});
    const double* wp = weight.w.data();
    const double* dp = wdelta.data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            double* out = y.data() + (static_cast<size_t>(oy) * ow + ox) * cout;
            for (int c = 0; c < cout; ++c) out[c] = bias.w.v[c];
            for (int ky = 0; ky < kh; ++ky) {
                int sy = oy * stride - pad + ky;
                if (sy < 0 || sy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int sx = ox * stride - pad + kx;
                    if (sx < 0 || sx >= w) continue;
                    const double* in = x.data() + (static_cast<size_t>(sy) * w + sx) * cin;
                    size_t base = (static_cast<size_t>(ky) * kw + kx) * cin * cout;
                    for (int i = 0; i < cin; ++i) {
                        double s = in[i];
                        const double* wr = wp + base + static_cast<size_t>(i) * cout;
                        const double* dr = dp + base + static_cast<size_t>(i) * cout;
                        for (int c = 0; c < cout; ++c) out[c] += s * (wr[c] + dr[c]);
                    }
                }
            }
        }
    }
    return y;
}

Tensor Conv2d::backward_delta(const Tensor& x, const Tensor& gy, const Tensor& wdelta,
                              Tensor& gwdelta) const {
    const int h = x.dim(0), w = x.dim(1);
    const int oh = gy.dim(0), ow = gy.dim(1);
    Tensor gx({h, w, cin});
    const double* wp = weight.w.data();
    const double* dp = wdelta.data();
    double* gdp = gwdelta.data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const double* go = gy.data() + (static_cast<size_t>(oy) * ow + ox) * cout;
            for (int ky = 0; ky < kh; ++ky) {
                int sy = oy * stride - pad + ky;
                if (sy < 0 || sy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int sx = ox * stride - pad + kx;
                    if (sx < 0 || sx >= w) continue;
                    const double* in = x.data() + (static_cast<size_t>(sy) * w + sx) * cin;
                    double* gin = gx.data() + (static_cast<size_t>(sy) * w + sx) * cin;
                    size_t base = (static_cast<size_t>(ky) * kw + kx) * cin * cout;
                    for (int i = 0; i < cin; ++i) {
                        const double* wr = wp + base + static_cast<size_t>(i) * cout;
                        const double* dr = dp + base + static_cast<size_t>(i) * cout;
                        double* gdr = gdp + base + static_cast<size_t>(i) * cout;
                        double s = in[i];
                        double acc = 0.0;
                        for (int c = 0; c < cout; ++c) {
                            gdr[c] += s * go[c];
                            acc += (wr[c] + dr[c]) * go[c];
                        }
                        gin[i] += acc;
                    }
                }
            }
        }
    }
    return gx;
}

// ---------------- linear ----------------

void Linear::init(const std::string& name, int in, int out, Rng& rng) {
    din = in;
    dout = out;
    weight.init(name + ".weight", {din, dout});
    bias.init(name + ".bias", {dout});
    double bound = std::sqrt(1.0 / in);
    weight.fill_uniform(rng, -bound, bound);
}

Tensor Linear::forward(const Tensor& x) const {
    const int L = static_cast<int>(x.size()) / din;
    Tensor y({L, dout});
    for (int t = 0; t < L; ++t) {
        const double* in = x.data() + static_cast<size_t>(t) * din;
        double* out = y.data() + static_cast<size_t>(t) * dout;
        for (int o = 0; o < dout; ++o) out[o] = bias.w.v[o];
        for (int i = 0; i < din; ++i) {
            double s = in[i];
            const double* wr = weight.w.data() + static_cast<size_t>(i) * dout;
            for (int o = 0; o < dout; ++o) out[o] += s * wr[o];
        }
    }
    return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& gy) {
    const int L = static_cast<int>(x.size()) / din;
    Tensor gx(x.shape);
    for (int t = 0; t < L; ++t) {
        const double* in = x.data() + static_cast<size_t>(t) * din;
        const double* go = gy.data() + static_cast<size_t>(t) * dout;
        double* gin = gx.data() + static_cast<size_t>(t) * din;
        for (int o = 0; o < dout; ++o) bias.g.v[o] += go[o];
        for (int i = 0; i < din; ++i) {
            const double* wr = weight.w.data() + static_cast<size_t>(i) * dout;
            double* gwr = weight.g.data() + static_cast<size_t>(i) * dout;
            double s = in[i];
            double acc = 0.0;
            for (int o = 0; o < dout; ++o) {
                gwr[o] += s * go[o];
                acc += wr[o] * go[o];
            }
            gin[i] = acc;
        }
    }
    return gx;
}

// ---------------- layer norm ----------------

void LayerNorm::init(const std::string& name, int d) {
    dim = d;
    gamma.init(name + ".gamma", {d});
    beta.init(name + ".beta", {d});
    std::fill(gamma.w.v.begin(), gamma.w.v.end(), 1.0);
}

Tensor LayerNorm::forward(const Tensor& x, Tensor& cache_mean,
                          Tensor& cache_inv_std) const {
    const int L = static_cast<int>(x.size()) / dim;
    Tensor y(x.shape);
    cache_mean = Tensor({L});
    cache_inv_std = Tensor({L});
    constexpr double kEps = 1e-6;
    for (int t = 0; t < L; ++t) {
        const double* in = x.data() + static_cast<size_t>(t) * dim;
        double* out = y.data() + static_cast<size_t>(t) * dim;
        double mean = 0.0;
        for (int i = 0; i < dim; ++i) mean += in[i];
        mean /= dim;
        double var = 0.0;
        for (int i = 0; i < dim; ++i) var += (in[i] - mean) * (in[i] - mean);
        var /= dim;
        double inv = 1.0 / std::sqrt(var + kEps);
        cache_mean.v[t] = mean;
        cache_inv_std.v[t] = inv;
        for (int i = 0; i < dim; ++i)
            out[i] = gamma.w.v[i] * (in[i] - mean) * inv + beta.w.v[i];
    }
    return y;
}

Tensor LayerNorm::backward(const Tensor& x, const Tensor& gy, const Tensor& mean,
                           const Tensor& inv_std) {
    const int L = static_cast<int>(x.size()) / dim;
    Tensor gx(x.shape);
    for (int t = 0; t < L; ++t) {
        const double* in = x.data() + static_cast<size_t>(t) * dim;
        const double* go = gy.data() + static_cast<size_t>(t) * dim;
        double* gin = gx.data() + static_cast<size_t>(t) * dim;
        const double mu = mean.v[t];
        const double inv = inv_std.v[t];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int i = 0; i < dim; ++i) {
            double xhat = (in[i] - mu) * inv;
            double gg = go[i] * gamma.w.v[i];
            gamma.g.v[i] += go[i] * xhat;
            beta.g.v[i] += go[i];
            sum_g += gg;
            sum_gx += gg * xhat;
        }
        for (int i = 0; i < dim; ++i) {
            double xhat = (in[i] - mu) * inv;
            double gg = go[i] * gamma.w.v[i];
            gin[i] = inv * (gg - sum_g / dim - xhat * sum_gx / dim);
        }
    }
    return gx;
}

// ---------------- causal depthwise conv1d ----------------

void CausalConv1d::init(const std::string& name, int width, int d, Rng& rng) {
    k = width;
    dim = d;
    weight.init(name + ".weight", {k, dim});
    bias.init(name + ".bias", {dim});
    double bound = std::sqrt(1.0 / k);
    weight.fill_uniform(rng, -bound, bound);
}

Tensor CausalConv1d::forward(const Tensor& x) const {
    const int L = x.dim(0);
    Tensor y({L, dim});
    for (int t = 0; t < L; ++t) {
        double* out = y.data() + static_cast<size_t>(t) * dim;
        for (int d = 0; d < dim; ++d) out[d] = bias.w.v[d];
        for (int j = 0; j < k; ++j) {
            int src = t - (k - 1) + j;
            if (src < 0) continue;
            const double* in = x.data() + static_cast<size_t>(src) * dim;
            const double* wr = weight.w.data() + static_cast<size_t>(j) * dim;
            for (int d = 0; d < dim; ++d) out[d] += wr[d] * in[d];
        }
    }
    return y;
}

Tensor CausalConv1d::backward(const Tensor& x, const Tensor& gy) {
    const int L = x.dim(0);
    Tensor gx({L, dim});
    for (int t = 0; t < L; ++t) {
        const double* go = gy.data() + static_cast<size_t>(t) * dim;
        for (int d = 0; d < dim; ++d) bias.g.v[d] += go[d];
        for (int j = 0; j < k; ++j) {
            int src = t - (k - 1) + j;
            if (src < 0) continue;
            const double* in = x.data() + static_cast<size_t>(src) * dim;
            double* gin = gx.data() + static_cast<size_t>(src) * dim;
            const double* wr = weight.w.data() + static_cast<size_t>(j) * dim;
            double* gwr = weight.g.data() + static_cast<size_t>(j) * dim;
            for (int d = 0; d < dim; ++d) {
                gwr[d] += in[d] * go[d];
                gin[d] += wr[d] * go[d];
            }
        }
    }
    return gx;
}

// ---------------- pixel shuffle ----------------

Tensor pixel_shuffle(const Tensor& x, int r) {
    const int h = x.dim(0), w = x.dim(1), c_in = x.dim(2);
    if (c_in % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
    const int c = c_in / (r * r);
    Tensor y({h * r, w * r, c});
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx)
                    for (int ch = 0; ch < c; ++ch)
                        y.v[((static_cast<size_t>(yy * r + dy) * (w * r)) + (xx * r + dx)) * c + ch] =
                            x.v[(static_cast<size_t>(yy) * w + xx) * c_in + ch * r * r + dy * r + dx];
    return y;
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
    const int hr = x.dim(0), wr = x.dim(1), c = x.dim(2);
    if (hr % r != 0 || wr % r != 0)
        throw std::invalid_argument("pixel_unshuffle: dims not divisible by r");
    const int h = hr / r, w = wr / r;
    Tensor y({h, w, c * r * r});
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx)
                    for (int ch = 0; ch < c; ++ch)
                        y.v[(static_cast<size_t>(yy) * w + xx) * (c * r * r) + ch * r * r + dy * r + dx] =
                            x.v[((static_cast<size_t>(yy * r + dy) * wr) + (xx * r + dx)) * c + ch];
    return y;
}

Tensor pixel_shuffle_backward(const Tensor& gy, int r) { return pixel_unshuffle(gy, r); }

// ---------------- bilinear feature resize ----------------

namespace {

struct Lerp {
    int lo, hi;
    double w_hi;
};

std::vector<Lerp> lerp_axis(int in, int out) {
    std::vector<Lerp> v(out);
    const double scale = static_cast<double>(out) / in;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) / scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        int lo = static_cast<int>(std::floor(src));
        int hi = std::min(lo + 1, in - 1);
        v[o] = {lo, hi, src - lo};
    }
    return v;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int oh, int ow) {
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (h == oh && w == ow) return x;
    auto ay = lerp_axis(h, oh);
    auto ax = lerp_axis(w, ow);
    Tensor y({oh, ow, c});
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            double* out = y.data() + (static_cast<size_t>(oy) * ow + ox) * c;
            const auto& ly = ay[oy];
            const auto& lx = ax[ox];
            const double w00 = (1 - ly.w_hi) * (1 - lx.w_hi);
            const double w01 = (1 - ly.w_hi) * lx.w_hi;
            const double w10 = ly.w_hi * (1 - lx.w_hi);
            const double w11 = ly.w_hi * lx.w_hi;
            const double* p00 = x.data() + (static_cast<size_t>(ly.lo) * w + lx.lo) * c;
            const double* p01 = x.data() + (static_cast<size_t>(ly.lo) * w + lx.hi) * c;
            const double* p10 = x.data() + (static_cast<size_t>(ly.hi) * w + lx.lo) * c;
            const double* p11 = x.data() + (static_cast<size_t>(ly.hi) * w + lx.hi) * c;
            for (int ch = 0; ch < c; ++ch)
                out[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
        }
    }
    return y;
}

Tensor bilinear_resize_backward(const Tensor& gy, int in_h, int in_w) {
    const int oh = gy.dim(0), ow = gy.dim(1), c = gy.dim(2);
    if (oh == in_h && ow == in_w) return gy;
    auto ay = lerp_axis(in_h, oh);
    auto ax = lerp_axis(in_w, ow);
    Tensor gx({in_h, in_w, c});
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const double* go = gy.data() + (static_cast<size_t>(oy) * ow + ox) * c;
            const auto& ly = ay[oy];
            const auto& lx = ax[ox];
            const double w00 = (1 - ly.w_hi) * (1 - lx.w_hi);
            const double w01 = (1 - ly.w_hi) * lx.w_hi;
            const double w10 = ly.w_hi * (1 - lx.w_hi);
            const double w11 = ly.w_hi * lx.w_hi;
            double* p00 = gx.data() + (static_cast<size_t>(ly.lo) * in_w + lx.lo) * c;
            double* p01 = gx.data() + (static_cast<size_t>(ly.lo) * in_w + lx.hi) * c;
            double* p10 = gx.data() + (static_cast<size_t>(ly.hi) * in_w + lx.lo) * c;
            double* p11 = gx.data() + (static_cast<size_t>(ly.hi) * in_w + lx.hi) * c;
            for (int ch = 0; ch < c; ++ch) {
                p00[ch] += w00 * go[ch];
                p01[ch] += w01 * go[ch];
                p10[ch] += w10 * go[ch];
                p11[ch] += w11 * go[ch];
            }
        }
    }
    return gx;
}

Tensor upsample_nearest(const Tensor& x, int r) {
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor y({h * r, w * r, c});
    for (int yy = 0; yy < h * r; ++yy)
        for (int xx = 0; xx < w * r; ++xx) {
            const double* in = x.data() + (static_cast<size_t>(yy / r) * w + xx / r) * c;
            double* out = y.data() + (static_cast<size_t>(yy) * (w * r) + xx) * c;
            for (int ch = 0; ch < c; ++ch) out[ch] = in[ch];
        }
    return y;
}

Tensor upsample_nearest_backward(const Tensor& gy, int r) {
    const int hr = gy.dim(0), wr = gy.dim(1), c = gy.dim(2);
    const int h = hr / r, w = wr / r;
    Tensor gx({h, w, c});
    for (int yy = 0; yy < hr; ++yy)
        for (int xx = 0; xx < wr; ++xx) {
            const double* go = gy.data() + (static_cast<size_t>(yy) * wr + xx) * c;
            double* gin = gx.data() + (static_cast<size_t>(yy / r) * w + xx / r) * c;
            for (int ch = 0; ch < c; ++ch) gin[ch] += go[ch];
        }
    return gx;
}

// ---------------- checkpoint I/O ----------------

void save_checkpoint(const std::string& base_path,
                     const std::vector<NamedTensor>& tensors,
                     const std::string& dtype) {
    if (dtype != "f64" && dtype != "f32")
        throw std::invalid_argument("save_checkpoint: dtype must be f32 or f64");
    json manifest;
    manifest["version"] = 1;
    manifest["dtype"] = dtype;
    manifest["tensors"] = json::array();

    std::ofstream blob(base_path + ".bin", std::ios::binary | std::ios::trunc);
    if (!blob) throw std::runtime_error("cannot write " + base_path + ".bin");
    size_t offset = 0;
    for (const auto& nt : tensors) {
        manifest["tensors"].push_back(
            {{"name", nt.name}, {"shape", nt.t->shape}, {"offset", offset},
             {"count", nt.t->size()}});
        if (dtype == "f64") {
            blob.write(reinterpret_cast<const char*>(nt.t->data()),
                       static_cast<std::streamsize>(nt.t->size() * sizeof(double)));
            offset += nt.t->size() * sizeof(double);
        } else {
            std::vector<float> f(nt.t->size());
            for (size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(nt.t->v[i]);
            blob.write(reinterpret_cast<const char*>(f.data()),
                       static_cast<std::streamsize>(f.size() * sizeof(float)));
            offset += f.size() * sizeof(float);
        }
    }
    std::ofstream mf(base_path + ".json", std::ios::trunc);
    if (!mf) throw std::runtime_error("cannot write " + base_path + ".json");
    mf << manifest.dump(2) << "\n";
}

void load_checkpoint(const std::string& base_path,
                     const std::vector<std::pair<std::string, Tensor*>>& tensors) {
    std::ifstream mf(base_path + ".json");
    if (!mf) throw std::runtime_error("cannot read " + base_path + ".json");
    json manifest = json::parse(mf);
    const std::string dtype = manifest.at("dtype").get<std::string>();
    std::ifstream blob(base_path + ".bin", std::ios::binary);
    if (!blob) throw std::runtime_error("cannot read " + base_path + ".bin");

    for (const auto& [name, dst] : tensors) {
        bool found = false;
        for (const auto& entry : manifest.at("tensors")) {
            if (entry.at("name").get<std::string>() != name) continue;
            auto shape = entry.at("shape").get<std::vector<int>>();
            if (shape != dst->shape)
                throw std::runtime_error("checkpoint shape mismatch for " + name);
            size_t offset = entry.at("offset").get<size_t>();
            size_t count = entry.at("count").get<size_t>();
            blob.seekg(static_cast<std::streamoff>(offset));
            if (dtype == "f64") {
                blob.read(reinterpret_cast<char*>(dst->data()),
                          static_cast<std::streamsize>(count * sizeof(double)));
            } else {
                std::vector<float> f(count);
                blob.read(reinterpret_cast<char*>(f.data()),
                          static_cast<std::streamsize>(count * sizeof(float)));
                for (size_t i = 0; i < count; ++i) dst->v[i] = f[i];
            }
            if (!blob) throw std::runtime_error("checkpoint blob truncated at " + name);
            found = true;
            break;
        }
        if (!found) throw std::runtime_error("checkpoint missing tensor " + name);
    }
}

std::vector<NamedTensor> named_params(const std::vector<Param*>& params) {
    std::vector<NamedTensor> out;
    out.reserve(params.size());
    for (Param* p : params) out.push_back({p->name, &p->w});
    return out;
}

std::vector<std::pair<std::string, Tensor*>> mutable_params(
    const std::vector<Param*>& params) {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.reserve(params.size());
    for (Param* p : params) out.emplace_back(p->name, &p->w);
    return out;
}

uint64_t tensor_hash(const Tensor& t) {
    uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (size_t i = 0; i < t.size() * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace dacesr::nn
