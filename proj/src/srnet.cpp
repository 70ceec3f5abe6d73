#include "dacesr/srnet.hpp"

#include <stdexcept>

namespace dacesr::srnet {

void NetworkConfig::validate() const {
    if (scale != 2 && scale != 4)
        throw std::invalid_argument("NetworkConfig: scale must be 2 or 4");
    if (n_rssb < 1 || vimm_per_rssb < 1 || channels < 1 || lambda_expand < 1 || state < 1)
        throw std::invalid_argument("NetworkConfig: all sizes must be positive");
}

void CfmWeights::init(const std::string& name, int cond_dim, int channels, Rng& rng) {
    alpha_head.init(name + ".alpha", cond_dim, channels, rng);
    beta_head.init(name + ".beta", cond_dim, channels, rng);
    // Start near identity modulation: alpha ≈ 1, beta ≈ 0.
    std::fill(alpha_head.bias.w.v.begin(), alpha_head.bias.w.v.end(), 1.0);
    for (double& v : alpha_head.weight.w.v) v *= 0.1;
    for (double& v : beta_head.weight.w.v) v *= 0.1;
}

std::vector<nn::Param*> CfmWeights::params() {
    return {&alpha_head.weight, &alpha_head.bias, &beta_head.weight, &beta_head.bias};
}

Tensor cfm(const Tensor& x, const Tensor& cond, CfmWeights& w, CfmCache& cache) {
    const int h = x.dim(0), wd = x.dim(1), c = x.dim(2);
    if (cond.shape.size() != 3 || cond.dim(2) != w.alpha_head.din)
        throw std::invalid_argument("cfm: condition depth mismatch");
    cache.x = x;
    cache.cond_h = cond.dim(0);
    cache.cond_w = cond.dim(1);
    cache.cond_resized = nn::bilinear_resize(cond, h, wd);
    cache.alpha = w.alpha_head.forward(cache.cond_resized);
    cache.beta = w.beta_head.forward(cache.cond_resized);
    if (static_cast<int>(cache.alpha.size()) != h * wd * c)
        throw std::invalid_argument("cfm: channel mismatch after projection");
    Tensor y(x.shape);
    for (size_t i = 0; i < y.size(); ++i)
        y.v[i] = cache.alpha.v[i] * x.v[i] + cache.beta.v[i];
    return y;
}

Tensor cfm_backward(const Tensor& gy, CfmWeights& w, const CfmCache& cache) {
    Tensor gx(cache.x.shape);
    Tensor galpha(cache.alpha.shape);
    for (size_t i = 0; i < gy.size(); ++i) {
        gx.v[i] = gy.v[i] * cache.alpha.v[i];
        galpha.v[i] = gy.v[i] * cache.x.v[i];
    }
    w.alpha_head.backward(cache.cond_resized, galpha);
    w.beta_head.backward(cache.cond_resized, gy);
    return gx;
}

std::vector<nn::Param*> RssbWeights::params() {
    std::vector<nn::Param*> out;
    for (auto& v : vimms)
        for (auto* p : v.params()) out.push_back(p);
    for (auto* p : cfm.params()) out.push_back(p);
    for (auto* p : conv.params()) out.push_back(p);
    return out;
}

Tensor rssb_forward(const Tensor& x, const Tensor& cond, RssbWeights& w,
                    RssbCache& cache, bool use_cfm) {
    cache.vimm_caches.resize(w.vimms.size());
    cache.vimm_in.resize(w.vimms.size());
    Tensor cur = x;
    for (size_t i = 0; i < w.vimms.size(); ++i) {
        cache.vimm_in[i] = cur;
        cur = ssm::vimm_forward(cur, w.vimms[i], cache.vimm_caches[i]);
    }
    cache.cfm_used = use_cfm;
    if (use_cfm) {
        cache.cfm_out = cfm(cur, cond, w.cfm, cache.cfm_cache);
    } else {
        cache.cfm_out = cur;
    }
    Tensor y = w.conv.forward(cache.cfm_out);
    for (size_t i = 0; i < y.size(); ++i) y.v[i] += x.v[i];  // block residual
    return y;
}

Tensor rssb_backward(const Tensor& gy, RssbWeights& w, const RssbCache& cache) {
    Tensor g = w.conv.backward(cache.cfm_out, gy);
    if (cache.cfm_used) g = cfm_backward(g, w.cfm, cache.cfm_cache);
    for (size_t i = w.vimms.size(); i-- > 0;)
        g = ssm::vimm_backward(g, w.vimms[i], cache.vimm_caches[i]);
    for (size_t i = 0; i < g.size(); ++i) g.v[i] += gy.v[i];  // block residual
    return g;
}

void SrNet::init(const NetworkConfig& config, Rng& rng) {
    config.validate();
    cfg = config;
    shallow.init("net.shallow", 3, 3, cfg.channels, 1, rng);
    rssbs.resize(cfg.n_rssb);
    for (int i = 0; i < cfg.n_rssb; ++i) {
        std::string base = "net.rssb" + std::to_string(i);
        rssbs[i].vimms.resize(cfg.vimm_per_rssb);
        for (int j = 0; j < cfg.vimm_per_rssb; ++j)
            rssbs[i].vimms[j].init(base + ".vimm" + std::to_string(j), cfg.channels,
                                   cfg.lambda_expand, cfg.state, 4, rng);
        rssbs[i].cfm.init(base + ".cfm", cfg.cond_dim, cfg.channels, rng);
        rssbs[i].conv.init(base + ".conv", 3, cfg.channels, cfg.channels, 1, rng);
    }
    fuse.init("net.fuse", 3, cfg.channels, cfg.channels, 1, rng);
    head.init("net.head", 3, cfg.channels, 3 * cfg.scale * cfg.scale, 1, rng);
    // ICNR: replicate each color's kernel across its r^2 sub-pixel slots so the
    // initial pixel-shuffle output is a nearest upsample (no checkerboard).
    const int rr = cfg.scale * cfg.scale, cout = 3 * rr;
    auto& hw = head.weight.w.v;
    const size_t spatial = static_cast<size_t>(3 * 3 * cfg.channels);
    for (size_t s = 0; s < spatial; ++s)
        for (int c = 0; c < 3; ++c)
            for (int j = 1; j < rr; ++j)
                hw[s * cout + c * rr + j] = hw[s * cout + c * rr];
}

std::vector<nn::Param*> SrNet::params() {
    std::vector<nn::Param*> out;
    for (auto* p : shallow.params()) out.push_back(p);
    for (auto& r : rssbs)
        for (auto* p : r.params()) out.push_back(p);
    for (auto* p : fuse.params()) out.push_back(p);
    for (auto* p : head.params()) out.push_back(p);
    return out;
}

void SrNet::save(const std::string& base_path, const std::string& dtype) {
    nn::save_checkpoint(base_path, nn::named_params(params()), dtype);
}

void SrNet::load(const std::string& base_path) {
    nn::load_checkpoint(base_path, nn::mutable_params(params()));
}

Tensor net_forward(const Tensor& lr, const Tensor& cond, SrNet& net, NetCache& cache) {
    if (lr.shape.size() != 3 || lr.dim(2) != 3)
        throw std::invalid_argument("net_forward: 3-channel LR input required");
    cache.lr = lr;
    cache.shallow_out = net.shallow.forward(lr);
    cache.rssb_caches.resize(net.rssbs.size());
    cache.rssb_in.resize(net.rssbs.size());
    Tensor cur = cache.shallow_out;
    for (size_t i = 0; i < net.rssbs.size(); ++i) {
        cache.rssb_in[i] = cur;
        cur = rssb_forward(cur, cond, net.rssbs[i], cache.rssb_caches[i],
                           net.cfg.use_cfm);
    }
    cache.deep_in = cur;
    cache.fused = net.fuse.forward(cur);
    for (size_t i = 0; i < cache.fused.size(); ++i)
        cache.fused.v[i] += cache.shallow_out.v[i];  // global residual sum
    cache.head_out = net.head.forward(cache.fused);
    cache.pre_clamp = nn::pixel_shuffle(cache.head_out, net.cfg.scale);
    Tensor sr = cache.pre_clamp;
    for (double& v : sr.v) v = std::clamp(v, 0.0, 1.0);
    return sr;
}

Tensor net_backward(const Tensor& gsr, SrNet& net, const NetCache& cache) {
    if (cache.pre_clamp.size() != gsr.size())
        throw std::runtime_error("net_backward: missing or mismatched forward state");
    Tensor g = gsr;
    for (size_t i = 0; i < g.size(); ++i) {
        double v = cache.pre_clamp.v[i];
        if (v < 0.0 || v > 1.0) g.v[i] = 0.0;
    }
    Tensor ghead_out = nn::pixel_shuffle_backward(g, net.cfg.scale);
    Tensor gfused = net.head.backward(cache.fused, ghead_out);
    Tensor gshallow = gfused;  // global residual branch
    Tensor gdeep = net.fuse.backward(cache.deep_in, gfused);
    for (size_t i = net.rssbs.size(); i-- > 0;)
        gdeep = rssb_backward(gdeep, net.rssbs[i], cache.rssb_caches[i]);
    for (size_t i = 0; i < gshallow.size(); ++i) gshallow.v[i] += gdeep.v[i];
    return net.shallow.backward(cache.lr, gshallow);
}

ImageTensor to_image(const Tensor& t) {
    ImageTensor img(t.dim(0), t.dim(1), t.dim(2));
    img.data = t.v;
    img.clamp01();
    return img;
}

Tensor from_image(const ImageTensor& img) {
    Tensor t({img.height, img.width, img.channels});
    t.v = img.data;
    return t;
}

}  // namespace dacesr::srnet
