#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dacesr/image.hpp"
#include "dacesr/nn.hpp"
#include "dacesr/ree.hpp"
#include "dacesr/srnet.hpp"

namespace dacesr::training {

using nn::Tensor;

enum class Stage { psnr, gan };

struct TrainConfig {
    int patch_size = 64;  // HR patch edge
    int batch_size = 16;
    int iterations = 2000;
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double lambda1 = 1.0;  // perceptual
    double lambda2 = 0.1;  // adversarial
    uint64_t seed = 0;
    Stage stage = Stage::psnr;

    void validate() const;
};

double l1_pixel_loss(const Tensor& sr, const Tensor& hr);
Tensor l1_pixel_grad(const Tensor& sr, const Tensor& hr);

/// Frozen-REE feature distance standing in for a pretrained perceptual loss.
double perceptual_proxy_loss(const Tensor& sr, const Tensor& hr,
                             ree::EncoderWeights& ree_base);
/// Gradient flows into sr only.
Tensor perceptual_proxy_grad(const Tensor& sr, const Tensor& hr,
                             ree::EncoderWeights& ree_base, double* loss_out = nullptr);

struct AdvLosses {
    double g_loss;
    double d_loss;
};
/// Non-saturating logistic GAN:
/// d = mean softplus(-real) + mean softplus(fake), g = mean softplus(-fake).
AdvLosses adversarial_losses(const Tensor& d_real_logits, const Tensor& d_fake_logits);

/// Patch discriminator: three stride-2 convs plus a 1×1 logit head.
struct Discriminator {
    nn::Conv2d conv1, conv2, conv3, head;

    void init(Rng& rng);
    std::vector<nn::Param*> params();
    struct Cache {
        Tensor in, pre1, act1, pre2, act2, pre3, act3;
    };
    Tensor forward(const Tensor& x, Cache& cache);
    /// Returns grad w.r.t. the input image tensor.
    Tensor backward(const Tensor& glogits, const Cache& cache);
};

struct IterRecord {
    int iteration;
    double pixel;
    double perceptual;
    double adversarial;
    double total;
    double wall_seconds;
};

struct TrainResult {
    std::vector<IterRecord> log;
    std::string log_csv() const;
};

/// One training stage over HR images. LR patches are synthesized per
/// iteration with sample_degradation; the condition comes from the REE
/// (base + optional adapter) when the network uses CFM. Deterministic for a
/// fixed seed: all randomness is indexed by iteration.
TrainResult train_stage(srnet::SrNet& net, ree::EncoderWeights& ree_base,
                        const ree::LoraAdapter* ree_adapter,
                        const std::vector<ImageTensor>& dataset,
                        const TrainConfig& cfg,
                        Discriminator* disc = nullptr);

}  // namespace dacesr::training
