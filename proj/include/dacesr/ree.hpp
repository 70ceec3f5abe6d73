#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dacesr/image.hpp"
#include "dacesr/imgproc.hpp"
#include "dacesr/nn.hpp"

namespace dacesr::ree {

using nn::Tensor;

/// Four stride-2 conv stages (3→16→32→64→d) with SiLU; spatial /16.
struct EncoderWeights {
    static constexpr int kStages = 4;
    nn::Conv2d conv[kStages];
    int out_dim = 32;

    void init(int embed_dim, Rng& rng);
    std::vector<nn::Param*> params();
    void save(const std::string& base_path, const std::string& dtype = "f64") const;
    void load(const std::string& base_path);
    uint64_t weights_hash() const;
};

/// Rank-r additive factors per conv: deltaW[o,i,ky,kx] =
/// scale * sum_r down[o,r] * up[r,i,ky,kx]; down starts at zero so the
/// adapter is exactly null at initialization.
struct LoraAdapter {
    int rank = 8;
    double scale = 1.0 / 8.0;
    struct ConvAdapter {
        nn::Param down;  // [cout, r]
        nn::Param up;    // [r, cin*k*k]
    };
    ConvAdapter convs[EncoderWeights::kStages];

    void init(const EncoderWeights& base, int r, Rng& rng);
    std::vector<nn::Param*> params();
    void save(const std::string& base_path, const std::string& dtype = "f64");
    void load(const std::string& base_path);
    /// Materialized weight delta in conv layout [ky][kw][cin][cout].
    Tensor weight_delta(const EncoderWeights& base, int stage) const;
    void accumulate_delta_grad(const EncoderWeights& base, int stage,
                               const Tensor& gwdelta);
};

struct EncodeCache {
    Tensor stage_in[EncoderWeights::kStages];   // post-activation inputs
    Tensor stage_pre[EncoderWeights::kStages];  // pre-activation conv outputs
    Tensor wdelta[EncoderWeights::kStages];     // materialized LoRA deltas
    bool has_adapter = false;
    int pad_h = 0, pad_w = 0;  // reflect padding applied to the input
};

/// Condition embedding from an image; reflect-pads to a multiple of 16.
Tensor encode(const ImageTensor& img, EncoderWeights& base,
              const LoraAdapter* adapter = nullptr);
Tensor encode(const ImageTensor& img, EncoderWeights& base, const LoraAdapter* adapter,
              EncodeCache& cache);
Tensor encode_tensor(const Tensor& x, EncoderWeights& base, const LoraAdapter* adapter,
                     EncodeCache& cache);

/// Backward through the encoder. Accumulates base grads always and adapter
/// grads when the cache was built with one; returns grad w.r.t. the input.
Tensor encode_backward(const Tensor& gy, EncoderWeights& base, LoraAdapter* adapter,
                       const EncodeCache& cache);

/// Mean of squared elementwise differences.
double rep_mse_loss(const Tensor& f_x, const Tensor& f_y);
/// d/d f_x of rep_mse_loss.
Tensor rep_mse_grad(const Tensor& f_x, const Tensor& f_y);

struct PretrainConfig {
    int iterations = 400;
    int batch_size = 8;
    double lr = 1e-3;
    uint64_t seed = 0;
    int embed_dim = 32;
};

/// Autoencoder pretraining on clean crops (L1 reconstruction); the decoder
/// is discarded. Returns the mean loss of each epoch-equivalent chunk.
EncoderWeights pretrain_base(const std::vector<ImageTensor>& clean_crops,
                             const PretrainConfig& cfg,
                             std::vector<double>* chunk_losses = nullptr);

struct FinetuneConfig {
    int iterations = 300;  // scaled down from the reference 300K budget
    int batch_size = 8;
    double lr = 1e-4;
    int rank = 8;
    uint64_t seed = 0;
};

/// LoRA fine-tune on (clean, degraded) pairs; base stays frozen.
LoraAdapter finetune_ree(const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs,
                         EncoderWeights& base, const FinetuneConfig& cfg,
                         std::vector<double>* iter_losses = nullptr);

/// Builds (clean, degraded) pairs: each crop goes through a spec drawn from
/// `specs` (round-robin by index mixed with seed) and is bicubic-resized back
/// to the crop's resolution so both branches share an embedding shape.
std::vector<std::pair<ImageTensor, ImageTensor>> build_pairs(
    const std::vector<ImageTensor>& crops,
    const std::vector<imgproc::DegradationSpec>& specs, uint64_t seed);

/// Held-out evaluation: mean rep_mse between clean (base) and degraded
/// (base+adapter) embeddings; adapter may be null for the frozen baseline.
double pair_embedding_mse(const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs,
                          EncoderWeights& base, const LoraAdapter* adapter);

}  // namespace dacesr::ree
