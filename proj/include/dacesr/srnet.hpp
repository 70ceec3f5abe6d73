#pragma once

#include <string>
#include <vector>

#include "dacesr/image.hpp"
#include "dacesr/nn.hpp"
#include "dacesr/ssm.hpp"

namespace dacesr::srnet {

using nn::Tensor;

struct NetworkConfig {
    int n_rssb = 4;
    int vimm_per_rssb = 2;
    int channels = 32;
    int scale = 4;
    int lambda_expand = 2;
    int state = 8;
    int cond_dim = 32;  // REE embedding depth
    bool use_cfm = true;

    void validate() const;
};

/// Scale-and-shift conditioning: out = alpha ⊙ x + beta, with alpha and beta
/// from two 1×1 heads over the bilinearly resized condition map.
struct CfmWeights {
    nn::Linear alpha_head;  // cond_dim -> C, bias starts at 1 (identity-ish)
    nn::Linear beta_head;   // cond_dim -> C

    void init(const std::string& name, int cond_dim, int channels, Rng& rng);
    std::vector<nn::Param*> params();
};

struct CfmCache {
    Tensor x, cond_resized, alpha, beta;
    int cond_h = 0, cond_w = 0;
};

Tensor cfm(const Tensor& x, const Tensor& cond, CfmWeights& w, CfmCache& cache);
/// Accumulates head grads; returns grad w.r.t. x (condition grads are not
/// propagated — the REE condition branch is frozen during SR training).
Tensor cfm_backward(const Tensor& gy, CfmWeights& w, const CfmCache& cache);

struct RssbWeights {
    std::vector<ssm::VimmWeights> vimms;
    CfmWeights cfm;
    nn::Conv2d conv;

    std::vector<nn::Param*> params();
};

struct RssbCache {
    std::vector<ssm::VimmCache> vimm_caches;
    std::vector<Tensor> vimm_in;  // input to each ViMM
    CfmCache cfm_cache;
    Tensor cfm_out;
    bool cfm_used = false;
};

struct SrNet {
    NetworkConfig cfg;
    nn::Conv2d shallow;            // 3 -> C
    std::vector<RssbWeights> rssbs;
    nn::Conv2d fuse;               // C -> C, after the RSSB stack
    nn::Conv2d head;               // C -> 3*scale^2, feeds pixel shuffle

    void init(const NetworkConfig& config, Rng& rng);
    std::vector<nn::Param*> params();
    void save(const std::string& base_path, const std::string& dtype = "f64");
    void load(const std::string& base_path);
};

struct NetCache {
    Tensor lr;               // [H,W,3]
    Tensor shallow_out;
    std::vector<RssbCache> rssb_caches;
    std::vector<Tensor> rssb_in;
    Tensor deep_in;          // input to fuse conv (last RSSB output)
    Tensor fused;            // shallow + fuse(deep)
    Tensor head_out;         // pre-shuffle
    Tensor pre_clamp;        // shuffled, pre-clamp
};

Tensor rssb_forward(const Tensor& x, const Tensor& cond, RssbWeights& w,
                    RssbCache& cache, bool use_cfm);
Tensor rssb_backward(const Tensor& gy, RssbWeights& w, const RssbCache& cache);

/// lr and cond are [H,W,3] / [h,w,cond_dim] tensors; returns the clamped SR
/// tensor of shape [scale*H, scale*W, 3].
Tensor net_forward(const Tensor& lr, const Tensor& cond, SrNet& net, NetCache& cache);
/// Grad of the clamped output; clamp passes gradient only where unclipped.
Tensor net_backward(const Tensor& gsr, SrNet& net, const NetCache& cache);

ImageTensor to_image(const Tensor& t);
Tensor from_image(const ImageTensor& img);

}  // namespace dacesr::srnet
