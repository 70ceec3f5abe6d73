#include "dacesr/ree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dacesr::ree {

namespace {
constexpr int kStageChannels[5] = {3, 16, 32, 64, 32};
}

void EncoderWeights::init(int embed_dim, Rng& rng) {
    out_dim = embed_dim;
    for (int s = 0; s < kStages; ++s) {
        int cin = kStageChannels[s];
        int cout = s == kStages - 1 ? embed_dim : kStageChannels[s + 1];
        conv[s].init("ree.conv" + std::to_string(s), 3, cin, cout, 2, rng);
    }
}

std::vector<nn::Param*> EncoderWeights::params() {
    std::vector<nn::Param*> out;
    for (int s = 0; s < kStages; ++s)
        for (auto* p : conv[s].params()) out.push_back(p);
    return out;
}

void EncoderWeights::save(const std::string& base_path, const std::string& dtype) const {
    auto* self = const_cast<EncoderWeights*>(this);
    nn::save_checkpoint(base_path, nn::named_params(self->params()), dtype);
}

void EncoderWeights::load(const std::string& base_path) {
    nn::load_checkpoint(base_path, nn::mutable_params(params()));
}

uint64_t EncoderWeights::weights_hash() const {
    auto* self = const_cast<EncoderWeights*>(this);
    uint64_t h = 0;
    for (auto* p : self->params()) h ^= nn::tensor_hash(p->w) + 0x9E3779B97F4A7C15ULL + (h << 6);
    return h;
}

void LoraAdapter::init(const EncoderWeights& base, int r, Rng& rng) {
    if (r < 1) throw std::invalid_argument("LoraAdapter: rank must be >= 1");
    rank = r;
    scale = 1.0 / r;
    for (int s = 0; s < EncoderWeights::kStages; ++s) {
        const auto& c = base.conv[s];
        convs[s].down.init("lora.conv" + std::to_string(s) + ".down", {c.cout, r});
        convs[s].up.init("lora.conv" + std::to_string(s) + ".up",
                         {r, c.cin * c.kh * c.kw});
        // down stays zero: adapter output equals base output at step 0.
        double bound = std::sqrt(1.0 / (c.cin * c.kh * c.kw));
        convs[s].up.fill_uniform(rng, -bound, bound);
    }
}

std::vector<nn::Param*> LoraAdapter::params() {
    std::vector<nn::Param*> out;
    for (auto& c : convs) {
        out.push_back(&c.down);
        out.push_back(&c.up);
    }
    return out;
}

void LoraAdapter::save(const std::string& base_path, const std::string& dtype) {
    nn::save_checkpoint(base_path, nn::named_params(params()), dtype);
}

void LoraAdapter::load(const std::string& base_path) {
    nn::load_checkpoint(base_path, nn::mutable_params(params()));
}

Tensor LoraAdapter::weight_delta(const EncoderWeights& base, int stage) const {
    const auto& c = base.conv[stage];
    const auto& ad = convs[stage];
    // conv layout [ky][kx][cin][cout]; up index is i*kh*kw + ky*kw + kx.
    Tensor delta({c.kh, c.kw, c.cin, c.cout});
    for (int ky = 0; ky < c.kh; ++ky)
        for (int kx = 0; kx < c.kw; ++kx)
            for (int i = 0; i < c.cin; ++i) {
                size_t upi = static_cast<size_t>(i) * c.kh * c.kw + ky * c.kw + kx;
                double* drow =
                    delta.data() + ((static_cast<size_t>(ky) * c.kw + kx) * c.cin + i) * c.cout;
                for (int r = 0; r < rank; ++r) {
                    double u = ad.up.w.v[static_cast<size_t>(r) * c.cin * c.kh * c.kw + upi];
                    const double su = scale * u;
                    for (int o = 0; o < c.cout; ++o)
                        drow[o] += su * ad.down.w.v[static_cast<size_t>(o) * rank + r];
                }
            }
    return delta;
}

void LoraAdapter::accumulate_delta_grad(const EncoderWeights& base, int stage,
                                        const Tensor& gwdelta) {
    const auto& c = base.conv[stage];
    auto& ad = convs[stage];
    for (int ky = 0; ky < c.kh; ++ky)
        for (int kx = 0; kx < c.kw; ++kx)
            for (int i = 0; i < c.cin; ++i) {
                size_t upi = static_cast<size_t>(i) * c.kh * c.kw + ky * c.kw + kx;
                const double* grow =
                    gwdelta.data() + ((static_cast<size_t>(ky) * c.kw + kx) * c.cin + i) * c.cout;
                for (int r = 0; r < rank; ++r) {
                    double u = ad.up.w.v[static_cast<size_t>(r) * c.cin * c.kh * c.kw + upi];
                    double acc_up = 0.0;
                    for (int o = 0; o < c.cout; ++o) {
                        double d = ad.down.w.v[static_cast<size_t>(o) * rank + r];
                        ad.down.g.v[static_cast<size_t>(o) * rank + r] +=
                            scale * u * grow[o];
                        acc_up += d * grow[o];
                    }
                    ad.up.g.v[static_cast<size_t>(r) * c.cin * c.kh * c.kw + upi] +=
                        scale * acc_up;
                }
            }
}

namespace {

Tensor reflect_pad_to16(const ImageTensor& img, int& pad_h, int& pad_w) {
    const int ph = (img.height + 15) / 16 * 16;
    const int pw = (img.width + 15) / 16 * 16;
    pad_h = ph - img.height;
    pad_w = pw - img.width;
    Tensor x({ph, pw, img.channels});
    for (int y = 0; y < ph; ++y) {
        int sy = y < img.height ? y : 2 * img.height - 2 - y;
        sy = std::clamp(sy, 0, img.height - 1);
        for (int xx = 0; xx < pw; ++xx) {
            int sx = xx < img.width ? xx : 2 * img.width - 2 - xx;
            sx = std::clamp(sx, 0, img.width - 1);
            for (int c = 0; c < img.channels; ++c)
                x.v[(static_cast<size_t>(y) * pw + xx) * img.channels + c] =
                    img.at(sy, sx, c);
        }
    }
    return x;
}

}  // namespace

Tensor encode_tensor(const Tensor& x, EncoderWeights& base, const LoraAdapter* adapter,
                     EncodeCache& cache) {
    if (x.dim(0) % 16 != 0 || x.dim(1) % 16 != 0)
        throw std::invalid_argument("encode_tensor: dims must be divisible by 16");
    cache.has_adapter = adapter != nullptr;
    Tensor cur = x;
    for (int s = 0; s < EncoderWeights::kStages; ++s) {
        cache.stage_in[s] = cur;
        if (adapter) {
            cache.wdelta[s] = adapter->weight_delta(base, s);
            cache.stage_pre[s] = base.conv[s].forward_delta(cur, cache.wdelta[s]);
        } else {
            cache.stage_pre[s] = base.conv[s].forward(cur);
        }
        cur = cache.stage_pre[s];
        for (double& v : cur.v) v = nn::silu(v);
    }
    return cur;
}

Tensor encode(const ImageTensor& img, EncoderWeights& base, const LoraAdapter* adapter,
              EncodeCache& cache) {
    if (img.channels != 3) throw std::invalid_argument("encode: 3-channel image required");
    Tensor x = reflect_pad_to16(img, cache.pad_h, cache.pad_w);
    return encode_tensor(x, base, adapter, cache);
}

Tensor encode(const ImageTensor& img, EncoderWeights& base, const LoraAdapter* adapter) {
    EncodeCache cache;
    return encode(img, base, adapter, cache);
}

Tensor encode_backward(const Tensor& gy, EncoderWeights& base, LoraAdapter* adapter,
                       const EncodeCache& cache) {
    if (cache.has_adapter && adapter == nullptr)
        throw std::runtime_error("encode_backward: cache built with an adapter");
    Tensor g = gy;
    for (int s = EncoderWeights::kStages; s-- > 0;) {
        for (size_t i = 0; i < g.size(); ++i)
            g.v[i] *= nn::silu_grad(cache.stage_pre[s].v[i]);
        if (cache.has_adapter) {
            Tensor gwdelta(cache.wdelta[s].shape);
            g = base.conv[s].backward_delta(cache.stage_in[s], g, cache.wdelta[s], gwdelta);
            adapter->accumulate_delta_grad(base, s, gwdelta);
        } else {
            g = base.conv[s].backward(cache.stage_in[s], g);
        }
    }
    return g;
}

double rep_mse_loss(const Tensor& f_x, const Tensor& f_y) {
    if (f_x.shape != f_y.shape)
        throw std::invalid_argument("rep_mse_loss: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < f_x.size(); ++i) {
        double d = f_x.v[i] - f_y.v[i];
        acc += d * d;
    }
    return acc / static_cast<double>(f_x.size());
}

Tensor rep_mse_grad(const Tensor& f_x, const Tensor& f_y) {
    Tensor g(f_x.shape);
    const double inv = 2.0 / static_cast<double>(f_x.size());
    for (size_t i = 0; i < f_x.size(); ++i) g.v[i] = inv * (f_x.v[i] - f_y.v[i]);
    return g;
}

namespace {

/// Lightweight decoder used only during pretraining: four nearest-upsample +
/// conv stages mirroring the encoder; final stage is linear.
struct Decoder {
    nn::Conv2d conv[4];

    void init(int embed_dim, Rng& rng) {
        const int ch[5] = {embed_dim, 64, 32, 16, 3};
        for (int s = 0; s < 4; ++s)
            conv[s].init("dec.conv" + std::to_string(s), 3, ch[s], ch[s + 1], 1, rng);
    }
    std::vector<nn::Param*> params() {
        std::vector<nn::Param*> out;
        for (auto& c : conv)
            for (auto* p : c.params()) out.push_back(p);
        return out;
    }
    struct Cache {
        Tensor up[4], pre[4];
    };
    Tensor forward(const Tensor& emb, Cache& cache) {
        Tensor cur = emb;
        for (int s = 0; s < 4; ++s) {
            cache.up[s] = nn::upsample_nearest(cur, 2);
            cache.pre[s] = conv[s].forward(cache.up[s]);
            cur = cache.pre[s];
            if (s < 3)
                for (double& v : cur.v) v = nn::silu(v);
        }
        return cur;
    }
    Tensor backward(const Tensor& gy, const Cache& cache) {
        Tensor g = gy;
        for (int s = 4; s-- > 0;) {
            if (s < 3)
                for (size_t i = 0; i < g.size(); ++i)
                    g.v[i] *= nn::silu_grad(cache.pre[s].v[i]);
            g = conv[s].backward(cache.up[s], g);
            g = nn::upsample_nearest_backward(g, 2);
        }
        return g;
    }
};

}  // namespace

EncoderWeights pretrain_base(const std::vector<ImageTensor>& clean_crops,
                             const PretrainConfig& cfg,
                             std::vector<double>* chunk_losses) {
    if (clean_crops.size() < 64)
        throw std::invalid_argument("pretrain_base: need at least 64 clean crops");

    Rng init_rng(Rng::mix(cfg.seed, 1));
    EncoderWeights base;
    base.init(cfg.embed_dim, init_rng);
    Decoder dec;
    dec.init(cfg.embed_dim, init_rng);

    std::vector<nn::Param*> all = base.params();
    for (auto* p : dec.params()) all.push_back(p);
    nn::Adam opt({cfg.lr, 0.9, 0.99, 1e-8});

    const int chunk = std::max(1, cfg.iterations / 10);
    double chunk_acc = 0.0;
    int chunk_n = 0;
    for (int it = 0; it < cfg.iterations; ++it) {
        Rng rng(Rng::mix(cfg.seed, 1000 + it));
        nn::zero_grads(all);
        double loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const ImageTensor& crop =
                clean_crops[rng.uniform_int(0, static_cast<int64_t>(clean_crops.size()) - 1)];
            EncodeCache ec;
            Tensor emb = encode(crop, base, nullptr, ec);
            Decoder::Cache dc;
            Tensor rec = dec.forward(emb, dc);
            // L1 reconstruction against the padded input.
            const Tensor& target = ec.stage_in[0];
            Tensor grec(rec.shape);
            double inv = 1.0 / (rec.size() * cfg.batch_size);
            for (size_t i = 0; i < rec.size(); ++i) {
                double d = rec.v[i] - target.v[i];
                loss += std::fabs(d) / rec.size();
                grec.v[i] = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * inv;
            }
            Tensor gemb = dec.backward(grec, dc);
            encode_backward(gemb, base, nullptr, ec);
        }
        opt.step(all);
        chunk_acc += loss / cfg.batch_size;
        if (++chunk_n == chunk) {
            if (chunk_losses) chunk_losses->push_back(chunk_acc / chunk_n);
            chunk_acc = 0.0;
            chunk_n = 0;
        }
    }
    if (chunk_losses && chunk_n > 0) chunk_losses->push_back(chunk_acc / chunk_n);
    return base;
}

LoraAdapter finetune_ree(const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs,
                         EncoderWeights& base, const FinetuneConfig& cfg,
                         std::vector<double>* iter_losses) {
    if (pairs.empty())
        throw std::invalid_argument(
            "finetune_ree: no training pairs; the severe set is empty — lower tau2");

    Rng init_rng(Rng::mix(cfg.seed, 2));
    LoraAdapter adapter;
    adapter.init(base, cfg.rank, init_rng);
    auto adapter_params = adapter.params();
    nn::Adam opt({cfg.lr, 0.9, 0.99, 1e-8});

    for (int it = 0; it < cfg.iterations; ++it) {
        Rng rng(Rng::mix(cfg.seed, 2000 + it));
        nn::zero_grads(adapter_params);
        double loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& pair =
                pairs[rng.uniform_int(0, static_cast<int64_t>(pairs.size()) - 1)];
            Tensor target = encode(pair.first, base, nullptr);  // GT branch, frozen
            EncodeCache ec;
            Tensor pred = encode(pair.second, base, &adapter, ec);
            loss += rep_mse_loss(pred, target);
            Tensor g = rep_mse_grad(pred, target);
            for (double& v : g.v) v /= cfg.batch_size;
            encode_backward(g, base, &adapter, ec);
        }
        opt.step(adapter_params);
        if (iter_losses) iter_losses->push_back(loss / cfg.batch_size);
    }
    return adapter;
}

std::vector<std::pair<ImageTensor, ImageTensor>> build_pairs(
    const std::vector<ImageTensor>& crops,
    const std::vector<imgproc::DegradationSpec>& specs, uint64_t seed) {
    if (crops.empty() || specs.empty())
        throw std::invalid_argument("build_pairs: empty crops or specs");
    std::vector<std::pair<ImageTensor, ImageTensor>> pairs;
    pairs.reserve(crops.size());
    for (size_t i = 0; i < crops.size(); ++i) {
        imgproc::DegradationSpec spec = specs[i % specs.size()];
        spec.seed = Rng::mix(seed, i);
        ImageTensor lr = imgproc::apply_chain(crops[i], spec);
        ImageTensor back = imgproc::resize_to(lr, crops[i].height, crops[i].width,
                                              imgproc::ResizeMethod::bicubic);
        pairs.emplace_back(crops[i], std::move(back));
    }
    return pairs;
}

double pair_embedding_mse(const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs,
                          EncoderWeights& base, const LoraAdapter* adapter) {
    if (pairs.empty()) throw std::invalid_argument("pair_embedding_mse: no pairs");
    double acc = 0.0;
    for (const auto& [clean, degraded] : pairs) {
        Tensor a = encode(clean, base, nullptr);
        Tensor b = encode(degraded, base, adapter);
        acc += rep_mse_loss(b, a);
    }
    return acc / static_cast<double>(pairs.size());
}

}  // namespace dacesr::ree
