#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dacesr/fixtures.hpp"
#include "dacesr/nn.hpp"
#include "dacesr/training.hpp"

using namespace dacesr;
using namespace dacesr::training;
using nn::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

ree::EncoderWeights tiny_ree(uint64_t seed) {
    Rng rng(seed);
    ree::EncoderWeights base;
    base.init(4, rng);
    return base;
}

}  // namespace

TEST_CASE("l1 pixel loss: hand values and gradient") {
    Tensor sr({2, 1, 1}), hr({2, 1, 1});
    sr.v = {0.0, 1.0};
    hr.v = {0.5, 0.25};
    // mean(|{-0.5, 0.75}|) = 0.625
    CHECK(l1_pixel_loss(sr, hr) == doctest::Approx(0.625));
    Tensor g = l1_pixel_grad(sr, hr);
    CHECK(g.v[0] == doctest::Approx(-0.5));  // sign/2
    CHECK(g.v[1] == doctest::Approx(0.5));
    CHECK(l1_pixel_loss(sr, sr) == 0.0);
}

TEST_CASE("adversarial losses: oracle values at zero logits") {
    // softplus(0) = ln 2; with all-zero logits d = 2 ln 2, g = ln 2
    Tensor real({4}), fake({4});
    auto l = adversarial_losses(real, fake);
    CHECK(l.d_loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(l.g_loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // a confident discriminator on large logits drives d_loss to zero
    for (double& v : real.v) v = 50.0;
    for (double& v : fake.v) v = -50.0;
    auto conf = adversarial_losses(real, fake);
    CHECK(conf.d_loss < 1e-20);
    CHECK(conf.g_loss == doctest::Approx(50.0));
}

TEST_CASE("adam: converges on a quadratic and matches the first-step size") {
    nn::Param p;
    p.init("q", {1});
    p.w.v[0] = 3.0;
    nn::AdamConfig acfg;
    acfg.lr = 0.1;
    nn::Adam opt(acfg);
    // first step moves by ~lr regardless of gradient scale
    p.g.v[0] = 2.0 * p.w.v[0];
    opt.step({&p});
    CHECK(p.w.v[0] == doctest::Approx(3.0 - 0.1).epsilon(1e-6));
    for (int it = 0; it < 400; ++it) {
        p.g.v[0] = 2.0 * p.w.v[0];
        opt.step({&p});
    }
    CHECK(std::abs(p.w.v[0]) < 1e-2);
}

TEST_CASE("perceptual proxy: zero at identical inputs, grad matches FD") {
    auto base = tiny_ree(120);
    Rng rng(120);
    Tensor sr = random_tensor({16, 16, 3}, rng);
    Tensor hr = random_tensor({16, 16, 3}, rng);
    CHECK(perceptual_proxy_loss(sr, sr, base) == 0.0);
    double l = perceptual_proxy_loss(sr, hr, base);
    CHECK(l > 0.0);

    double loss_out = -1.0;
    Tensor g = perceptual_proxy_grad(sr, hr, base, &loss_out);
    CHECK(loss_out == doctest::Approx(l).epsilon(1e-12));

    const double eps = 1e-5;
    for (size_t i = 0; i < sr.size(); i += 97) {
        Tensor sp = sr, sm = sr;
        sp.v[i] += eps;
        sm.v[i] -= eps;
        double fd = (perceptual_proxy_loss(sp, hr, base) -
                     perceptual_proxy_loss(sm, hr, base)) / (2 * eps);
        double denom = std::max({std::abs(fd), std::abs(g.v[i]), 1e-8});
        CHECK(std::abs(fd - g.v[i]) / denom < 1e-4);
    }
}

TEST_CASE("discriminator: logit map shape and input gradient via FD") {
    Rng rng(121);
    Discriminator d;
    d.init(rng);
    Tensor x = random_tensor({16, 16, 3}, rng);
    Discriminator::Cache cache;
    Tensor logits = d.forward(x, cache);
    REQUIRE(logits.shape.size() == 3);
    CHECK(logits.dim(0) == 2);  // /8 spatial
    CHECK(logits.dim(1) == 2);
    CHECK(logits.dim(2) == 1);

    Tensor gl(logits.shape);
    Rng grng(122);
    for (double& v : gl.v) v = grng.uniform(-1, 1);
    nn::zero_grads(d.params());
    Tensor gx = d.backward(gl, cache);
    REQUIRE(gx.shape == x.shape);

    auto loss = [&](const Tensor& xi) {
        Discriminator::Cache c;
        Tensor lg = d.forward(xi, c);
        double s = 0.0;
        for (size_t i = 0; i < lg.size(); ++i) s += lg.v[i] * gl.v[i];
        return s;
    };
    const double eps = 1e-5;
    for (size_t i = 0; i < x.size(); i += 131) {
        Tensor xp = x, xm = x;
        xp.v[i] += eps;
        xm.v[i] -= eps;
        double fd = (loss(xp) - loss(xm)) / (2 * eps);
        double denom = std::max({std::abs(fd), std::abs(gx.v[i]), 1e-8});
        CHECK(std::abs(fd - gx.v[i]) / denom < 1e-4);
    }
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.batch_size = 0;
    CHECK_THROWS(cfg.validate());
    cfg = TrainConfig{};
    cfg.patch_size = 7;  // not divisible by the scale
    CHECK_THROWS(cfg.validate());
    cfg = TrainConfig{};
    cfg.lr = -1.0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("psnr stage: loss decreases and identical seeds give identical nets") {
    auto dataset = fixtures::make_fixture_corpus(123, 8, 96);
    srnet::NetworkConfig nc;
    nc.n_rssb = 1;
    nc.vimm_per_rssb = 1;
    nc.channels = 8;
    nc.scale = 4;
    nc.state = 2;
    nc.cond_dim = 4;
    nc.use_cfm = true;

    auto base = tiny_ree(123);
    TrainConfig cfg;
    cfg.patch_size = 32;
    cfg.batch_size = 2;
    cfg.iterations = 30;
    cfg.lr = 1e-3;
    cfg.seed = 123;
    cfg.stage = Stage::psnr;

    Rng rng(123);
    srnet::SrNet net;
    net.init(nc, rng);
    TrainResult res = train_stage(net, base, nullptr, dataset, cfg);
    REQUIRE(static_cast<int>(res.log.size()) == cfg.iterations);

    double early = 0.0, late = 0.0;
    for (int i = 0; i < 5; ++i) early += res.log[i].pixel / 5.0;
    for (int i = 0; i < 5; ++i) late += res.log[cfg.iterations - 1 - i].pixel / 5.0;
    CHECK(late < early);
    for (const auto& r : res.log) {
        CHECK(std::isfinite(r.total));
        CHECK(r.adversarial == 0.0);  // psnr stage is pixel-only
        CHECK(r.perceptual == 0.0);
    }

    Rng rng2(123);
    srnet::SrNet net2;
    net2.init(nc, rng2);
    TrainResult res2 = train_stage(net2, base, nullptr, dataset, cfg);
    auto pa = net.params();
    auto pb = net2.params();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->w.v == pb[i]->w.v);
    for (size_t i = 0; i < res.log.size(); ++i)
        CHECK(res.log[i].total == res2.log[i].total);
}

TEST_CASE("gan stage: logs all three loss terms and stays finite") {
    auto dataset = fixtures::make_fixture_corpus(124, 8, 96);
    srnet::NetworkConfig nc;
    nc.n_rssb = 1;
    nc.vimm_per_rssb = 1;
    nc.channels = 8;
    nc.scale = 4;
    nc.state = 2;
    nc.cond_dim = 4;

    auto base = tiny_ree(124);
    TrainConfig cfg;
    cfg.patch_size = 32;
    cfg.batch_size = 2;
    cfg.iterations = 10;
    cfg.lr = 1e-4;
    cfg.seed = 124;
    cfg.stage = Stage::gan;

    Rng rng(124);
    srnet::SrNet net;
    net.init(nc, rng);
    Rng drng(125);
    Discriminator disc;
    disc.init(drng);
    TrainResult res = train_stage(net, base, nullptr, dataset, cfg, &disc);
    REQUIRE(res.log.size() == 10);
    bool any_perc = false, any_adv = false;
    for (const auto& r : res.log) {
        CHECK(std::isfinite(r.total));
        any_perc = any_perc || r.perceptual != 0.0;
        any_adv = any_adv || r.adversarial != 0.0;
    }
    CHECK(any_perc);
    CHECK(any_adv);
}

TEST_CASE("gan stage requires a discriminator") {
    auto dataset = fixtures::make_fixture_corpus(126, 4, 96);
    srnet::NetworkConfig nc;
    nc.n_rssb = 1;
    nc.vimm_per_rssb = 1;
    nc.channels = 4;
    nc.scale = 4;
    nc.state = 2;
    nc.cond_dim = 4;
    auto base = tiny_ree(126);
    TrainConfig cfg;
    cfg.patch_size = 32;
    cfg.batch_size = 1;
    cfg.iterations = 1;
    cfg.seed = 126;
    cfg.stage = Stage::gan;
    Rng rng(126);
    srnet::SrNet net;
    net.init(nc, rng);
    CHECK_THROWS(train_stage(net, base, nullptr, dataset, cfg, nullptr));
}

TEST_CASE("log csv has a header and one row per iteration") {
    TrainResult res;
    res.log = {{0, 0.5, 0.0, 0.0, 0.5, 0.01}, {1, 0.4, 0.0, 0.0, 0.4, 0.01}};
    auto csv = res.log_csv();
    CHECK(csv.rfind("iteration", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
