#include "dacesr/training.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "dacesr/imgproc.hpp"

namespace dacesr::training {

void TrainConfig::validate() const {
    if (patch_size < 16 || patch_size % 16 != 0)
        throw std::invalid_argument("TrainConfig: patch_size must be a positive multiple of 16");
    if (batch_size < 1 || iterations < 0 || lr <= 0.0)
        throw std::invalid_argument("TrainConfig: positive batch/iterations/lr required");
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw std::invalid_argument("TrainConfig: lambdas must be non-negative");
}

double l1_pixel_loss(const Tensor& sr, const Tensor& hr) {
    if (sr.shape != hr.shape) throw std::invalid_argument("l1_pixel_loss: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < sr.size(); ++i) acc += std::fabs(sr.v[i] - hr.v[i]);
    return acc / static_cast<double>(sr.size());
}

Tensor l1_pixel_grad(const Tensor& sr, const Tensor& hr) {
    Tensor g(sr.shape);
    const double inv = 1.0 / static_cast<double>(sr.size());
    for (size_t i = 0; i < sr.size(); ++i) {
        double d = sr.v[i] - hr.v[i];
        g.v[i] = (d > 0 ? inv : (d < 0 ? -inv : 0.0));
    }
    return g;
}

double perceptual_proxy_loss(const Tensor& sr, const Tensor& hr,
                             ree::EncoderWeights& ree_base) {
    ree::EncodeCache ca, cb;
    Tensor fa = ree::encode_tensor(sr, ree_base, nullptr, ca);
    Tensor fb = ree::encode_tensor(hr, ree_base, nullptr, cb);
    return ree::rep_mse_loss(fa, fb);
}

Tensor perceptual_proxy_grad(const Tensor& sr, const Tensor& hr,
                             ree::EncoderWeights& ree_base, double* loss_out) {
    ree::EncodeCache ca, cb;
    Tensor fa = ree::encode_tensor(sr, ree_base, nullptr, ca);
    Tensor fb = ree::encode_tensor(hr, ree_base, nullptr, cb);
    if (loss_out) *loss_out = ree::rep_mse_loss(fa, fb);
    Tensor gf = ree::rep_mse_grad(fa, fb);
    Tensor gsr = ree::encode_backward(gf, ree_base, nullptr, ca);
    // The proxy never trains the frozen encoder.
    nn::zero_grads(ree_base.params());
    return gsr;
}

AdvLosses adversarial_losses(const Tensor& d_real_logits, const Tensor& d_fake_logits) {
    double d_loss = 0.0, g_loss = 0.0;
    for (double v : d_real_logits.v) d_loss += nn::softplus(-v);
    d_loss /= static_cast<double>(d_real_logits.size());
    double fake_term = 0.0;
    for (double v : d_fake_logits.v) {
        fake_term += nn::softplus(v);
        g_loss += nn::softplus(-v);
    }
    d_loss += fake_term / static_cast<double>(d_fake_logits.size());
    g_loss /= static_cast<double>(d_fake_logits.size());
    return {g_loss, d_loss};
}

void Discriminator::init(Rng& rng) {
    conv1.init("disc.conv1", 3, 3, 16, 2, rng);
    conv2.init("disc.conv2", 3, 16, 32, 2, rng);
    conv3.init("disc.conv3", 3, 32, 64, 2, rng);
    head.init("disc.head", 1, 64, 1, 1, rng);
}

std::vector<nn::Param*> Discriminator::params() {
    std::vector<nn::Param*> out;
    for (auto* c : {&conv1, &conv2, &conv3, &head})
        for (auto* p : c->params()) out.push_back(p);
    return out;
}

Tensor Discriminator::forward(const Tensor& x, Cache& cache) {
    cache.in = x;
    cache.pre1 = conv1.forward(x);
    cache.act1 = cache.pre1;
    for (double& v : cache.act1.v) v = nn::silu(v);
    cache.pre2 = conv2.forward(cache.act1);
    cache.act2 = cache.pre2;
    for (double& v : cache.act2.v) v = nn::silu(v);
    cache.pre3 = conv3.forward(cache.act2);
    cache.act3 = cache.pre3;
    for (double& v : cache.act3.v) v = nn::silu(v);
    return head.forward(cache.act3);
}

Tensor Discriminator::backward(const Tensor& glogits, const Cache& cache) {
    Tensor g = head.backward(cache.act3, glogits);
    for (size_t i = 0; i < g.size(); ++i) g.v[i] *= nn::silu_grad(cache.pre3.v[i]);
    g = conv3.backward(cache.act2, g);
    for (size_t i = 0; i < g.size(); ++i) g.v[i] *= nn::silu_grad(cache.pre2.v[i]);
    g = conv2.backward(cache.act1, g);
    for (size_t i = 0; i < g.size(); ++i) g.v[i] *= nn::silu_grad(cache.pre1.v[i]);
    return conv1.backward(cache.in, g);
}

std::string TrainResult::log_csv() const {
    std::ostringstream os;
    os << "iteration,pixel,perceptual,adversarial,total,wall_seconds\n";
    for (const auto& r : log)
        os << r.iteration << "," << r.pixel << "," << r.perceptual << ","
           << r.adversarial << "," << r.total << "," << r.wall_seconds << "\n";
    return os.str();
}

namespace {

ImageTensor crop_image(const ImageTensor& img, int y0, int x0, int size, bool hflip) {
    ImageTensor out(size, size, img.channels);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = img.at(y0 + y, hflip ? x0 + size - 1 - x : x0 + x, c);
    return out;
}

}  // namespace

TrainResult train_stage(srnet::SrNet& net, ree::EncoderWeights& ree_base,
                        const ree::LoraAdapter* ree_adapter,
                        const std::vector<ImageTensor>& dataset,
                        const TrainConfig& cfg, Discriminator* disc) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train_stage: empty dataset");
    if (cfg.stage == Stage::gan && disc == nullptr)
        throw std::invalid_argument("train_stage: gan stage needs a discriminator");

    const int hr_size = cfg.patch_size;
    const int lr_size = hr_size / net.cfg.scale;

    auto net_params = net.params();
    nn::Adam g_opt({cfg.lr, cfg.beta1, cfg.beta2, 1e-8});
    std::vector<nn::Param*> d_params;
    std::unique_ptr<nn::Adam> d_opt;
    if (disc) {
        d_params = disc->params();
        d_opt = std::make_unique<nn::Adam>(nn::AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, 1e-8});
    }

    TrainResult result;
    auto t0 = std::chrono::steady_clock::now();

    for (int it = 0; it < cfg.iterations; ++it) {
        Rng rng(Rng::mix(cfg.seed, 4000 + it));

        // Synthesize the batch first (order fixed by batch index).
        std::vector<Tensor> hr_t(cfg.batch_size), lr_t(cfg.batch_size),
            cond_t(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const ImageTensor& src =
                dataset[rng.uniform_int(0, static_cast<int64_t>(dataset.size()) - 1)];
            if (src.height < hr_size || src.width < hr_size)
                throw std::runtime_error("train_stage: image smaller than patch size");
            int y0 = static_cast<int>(rng.uniform_int(0, src.height - hr_size));
            int x0 = static_cast<int>(rng.uniform_int(0, src.width - hr_size));
            bool hflip = rng.next_double() < 0.5;
            ImageTensor hr = crop_image(src, y0, x0, hr_size, hflip);
            imgproc::DegradationSpec spec = imgproc::sample_degradation(rng);
            ImageTensor lr = imgproc::apply_chain(hr, spec);
            if (lr.height != lr_size || lr.width != lr_size)
                lr = imgproc::resize_to(lr, lr_size, lr_size, imgproc::ResizeMethod::bicubic);
            hr_t[b] = srnet::from_image(hr);
            lr_t[b] = srnet::from_image(lr);
            if (net.cfg.use_cfm)
                cond_t[b] = ree::encode(lr, ree_base, ree_adapter);
        }

        double pixel_acc = 0.0, perc_acc = 0.0, adv_acc = 0.0;

        // Discriminator update first, on stale generator outputs.
        if (cfg.stage == Stage::gan) {
            nn::zero_grads(d_params);
            for (int b = 0; b < cfg.batch_size; ++b) {
                srnet::NetCache nc;
                Tensor sr = srnet::net_forward(lr_t[b], cond_t[b], net, nc);
                Discriminator::Cache cr, cf;
                Tensor d_real = disc->forward(hr_t[b], cr);
                Tensor d_fake = disc->forward(sr, cf);
                const double inv = 1.0 / (d_real.size() * cfg.batch_size);
                Tensor g_real(d_real.shape), g_fake(d_fake.shape);
                for (size_t i = 0; i < d_real.size(); ++i)
                    g_real.v[i] = -inv / (1.0 + std::exp(d_real.v[i]));
                for (size_t i = 0; i < d_fake.size(); ++i)
                    g_fake.v[i] = inv / (1.0 + std::exp(-d_fake.v[i]));
                disc->backward(g_real, cr);
                disc->backward(g_fake, cf);
            }
            d_opt->step(d_params);
        }

        // Generator update.
        nn::zero_grads(net_params);
        for (int b = 0; b < cfg.batch_size; ++b) {
            srnet::NetCache nc;
            Tensor sr = srnet::net_forward(lr_t[b], cond_t[b], net, nc);
            double pixel = l1_pixel_loss(sr, hr_t[b]);
            pixel_acc += pixel;
            Tensor gsr = l1_pixel_grad(sr, hr_t[b]);
            for (double& v : gsr.v) v /= cfg.batch_size;

            if (cfg.stage == Stage::gan) {
                double perc = 0.0;
                Tensor gperc = perceptual_proxy_grad(sr, hr_t[b], ree_base, &perc);
                perc_acc += perc;
                for (size_t i = 0; i < gsr.size(); ++i)
                    gsr.v[i] += cfg.lambda1 * gperc.v[i] / cfg.batch_size;

                Discriminator::Cache cf;
                Tensor d_fake = disc->forward(sr, cf);
                double g_adv = 0.0;
                Tensor glog(d_fake.shape);
                const double inv = 1.0 / static_cast<double>(d_fake.size());
                for (size_t i = 0; i < d_fake.size(); ++i) {
                    g_adv += nn::softplus(-d_fake.v[i]) * inv;
                    glog.v[i] = -inv / (1.0 + std::exp(d_fake.v[i]));
                }
                adv_acc += g_adv;
                // Generator sees D grads only through its input; D params
                // were already stepped this iteration and stay fixed here.
                std::vector<Tensor> saved;
                for (auto* p : d_params) saved.push_back(p->g);
                Tensor gsr_adv = disc->backward(glog, cf);
                for (size_t pi = 0; pi < d_params.size(); ++pi)
                    d_params[pi]->g = std::move(saved[pi]);
                for (size_t i = 0; i < gsr.size(); ++i)
                    gsr.v[i] += cfg.lambda2 * gsr_adv.v[i] / cfg.batch_size;
            }
            srnet::net_backward(gsr, net, nc);
        }
        g_opt.step(net_params);

        double pixel = pixel_acc / cfg.batch_size;
        double perc = perc_acc / cfg.batch_size;
        double adv = adv_acc / cfg.batch_size;
        double total = pixel + cfg.lambda1 * perc + cfg.lambda2 * adv;
        if (!std::isfinite(total))
            throw std::runtime_error("train_stage: non-finite loss at iteration " +
                                     std::to_string(it));
        double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back({it, pixel, perc, adv, total, wall});
    }
    return result;
}

}  // namespace dacesr::training
