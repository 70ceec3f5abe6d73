#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dacesr/fixtures.hpp"
#include "dacesr/imgproc.hpp"
#include "dacesr/nn.hpp"
#include "dacesr/ree.hpp"

using namespace dacesr;
using namespace dacesr::ree;
using nn::Tensor;

namespace {

EncoderWeights make_base(uint64_t seed, int embed_dim = 8) {
    Rng rng(seed);
    EncoderWeights base;
    base.init(embed_dim, rng);
    return base;
}

std::vector<ImageTensor> small_crops(uint64_t seed, int n, int size = 32) {
    return fixtures::make_fixture_corpus(seed, n, size);
}

}  // namespace

TEST_CASE("encode: shape, determinism, and padding to a multiple of 16") {
    auto base = make_base(100, 8);
    auto img = small_crops(100, 1, 48)[0];
    Tensor e1 = encode(img, base);
    Tensor e2 = encode(img, base);
    REQUIRE(e1.shape == std::vector<int>{3, 3, 8});  // 48/16 = 3
    CHECK(e1.v == e2.v);

    // 40 is not a multiple of 16: reflect-pad up to 48
    auto odd = small_crops(101, 1, 40)[0];
    Tensor e3 = encode(odd, base);
    CHECK(e3.shape == std::vector<int>{3, 3, 8});
}

TEST_CASE("lora adapter is exactly null at init") {
    auto base = make_base(102, 8);
    auto img = small_crops(102, 1, 32)[0];
    Tensor plain = encode(img, base);

    Rng rng(103);
    LoraAdapter adapter;
    adapter.init(base, 8, rng);
    Tensor adapted = encode(img, base, &adapter);
    CHECK(adapted.v == plain.v);  // bit-exact: down factors start at zero

    for (int s = 0; s < EncoderWeights::kStages; ++s) {
        Tensor d = adapter.weight_delta(base, s);
        for (double v : d.v) CHECK(v == 0.0);
    }
}

TEST_CASE("lora scale is 1/rank and delta follows the factor product") {
    auto base = make_base(104, 8);
    Rng rng(104);
    LoraAdapter adapter;
    adapter.init(base, 4, rng);
    CHECK(adapter.rank == 4);
    CHECK(adapter.scale == doctest::Approx(0.25));

    // set rank-1-style factors on stage 0 and check one delta entry by hand
    auto& ca = adapter.convs[0];
    for (double& v : ca.down.w.v) v = 0.0;
    for (double& v : ca.up.w.v) v = 0.0;
    ca.down.w.v[0 * adapter.rank + 1] = 2.0;  // down[out=0, r=1]
    int in_kk = static_cast<int>(ca.up.w.size()) / adapter.rank;
    ca.up.w.v[1 * in_kk + 5] = 3.0;  // up[r=1, flat_in=5]
    Tensor d = adapter.weight_delta(base, 0);
    double expect = adapter.scale * 2.0 * 3.0;
    double found = 0.0;
    for (double v : d.v)
        if (v != 0.0) found = v;
    CHECK(found == doctest::Approx(expect));
}

TEST_CASE("finetune leaves the base weights frozen") {
    auto base = make_base(105, 8);
    uint64_t before = base.weights_hash();
    auto crops = small_crops(105, 4, 32);
    Rng rng(105);
    std::vector<imgproc::DegradationSpec> specs = {imgproc::sample_degradation(rng)};
    auto pairs = build_pairs(crops, specs, 105);
    FinetuneConfig cfg;
    cfg.iterations = 10;
    cfg.batch_size = 2;
    cfg.rank = 4;
    cfg.seed = 105;
    LoraAdapter adapter = finetune_ree(pairs, base, cfg);
    CHECK(base.weights_hash() == before);
    // and the adapter actually moved
    double moved = 0.0;
    for (auto* p : adapter.params())
        for (double v : p->w.v) moved += std::abs(v);
    CHECK(moved > 0.0);
}

TEST_CASE("encode_backward with adapter matches finite differences") {
    auto base = make_base(106, 4);
    Rng rng(106);
    LoraAdapter adapter;
    adapter.init(base, 2, rng);
    // seed the adapter away from zero so its gradient is non-trivial
    for (auto* p : adapter.params())
        for (double& v : p->w.v) v += rng.uniform(-0.05, 0.05);

    ImageTensor img(32, 32, 3);
    for (double& v : img.data) v = rng.uniform(0.0, 1.0);

    EncodeCache cache;
    Tensor y = encode(img, base, &adapter, cache);
    Tensor gy(y.shape);
    for (double& v : gy.v) v = rng.uniform(-1.0, 1.0);

    auto loss = [&]() {
        EncodeCache c;
        Tensor yy = encode(img, base, &adapter, c);
        double l = 0.0;
        for (size_t i = 0; i < yy.size(); ++i) l += yy.v[i] * gy.v[i];
        return l;
    };

    for (auto* p : adapter.params()) p->g.zero();
    for (auto* p : base.params()) p->g.zero();
    encode_backward(gy, base, &adapter, cache);

    const double eps = 1e-5;
    int checked = 0;
    auto check_params = [&](const std::vector<nn::Param*>& ps) {
        for (auto* p : ps) {
            for (size_t i = 0; i < p->w.size(); i += std::max<size_t>(1, p->w.size() / 4)) {
                double keep = p->w.v[i];
                p->w.v[i] = keep + eps;
                double lp = loss();
                p->w.v[i] = keep - eps;
                double lm = loss();
                p->w.v[i] = keep;
                double fd = (lp - lm) / (2 * eps);
                double an = p->g.v[i];
                if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) continue;
                double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
                CHECK(std::abs(fd - an) / denom < 1e-4);
                ++checked;
            }
        }
    };
    check_params(adapter.params());
    CHECK(checked > 10);
    // the base stays frozen when an adapter is attached: no grads accumulate
    for (auto* p : base.params())
        for (double g : p->g.v) CHECK(g == 0.0);
}

TEST_CASE("rep_mse loss and gradient") {
    Tensor a({2, 2}), b({2, 2});
    a.v = {1.0, 2.0, 3.0, 4.0};
    b.v = {0.0, 2.0, 5.0, 4.0};
    // mean of (1, 0, 4, 0) = 1.25
    CHECK(rep_mse_loss(a, b) == doctest::Approx(1.25));
    Tensor g = rep_mse_grad(a, b);
    CHECK(g.v[0] == doctest::Approx(2.0 * 1.0 / 4.0));
    CHECK(g.v[1] == doctest::Approx(0.0));
    CHECK(g.v[2] == doctest::Approx(2.0 * -2.0 / 4.0));
    CHECK(rep_mse_loss(a, a) == 0.0);
}

TEST_CASE("pretrain reduces the reconstruction loss") {
    auto crops = small_crops(107, 64, 32);
    PretrainConfig cfg;
    cfg.iterations = 120;
    cfg.batch_size = 4;
    cfg.seed = 107;
    cfg.embed_dim = 8;
    std::vector<double> chunks;
    EncoderWeights base = pretrain_base(crops, cfg, &chunks);
    REQUIRE(chunks.size() >= 2);
    CHECK(chunks.back() < chunks.front());
    CHECK(std::isfinite(chunks.back()));
    CHECK(base.out_dim == 8);
}

TEST_CASE("pretrain is deterministic for a fixed seed") {
    auto crops = small_crops(108, 64, 32);
    PretrainConfig cfg;
    cfg.iterations = 20;
    cfg.batch_size = 2;
    cfg.seed = 108;
    cfg.embed_dim = 4;
    EncoderWeights a = pretrain_base(crops, cfg);
    EncoderWeights b = pretrain_base(crops, cfg);
    CHECK(a.weights_hash() == b.weights_hash());
}

TEST_CASE("build_pairs: shapes match and degraded branch differs") {
    auto crops = small_crops(109, 6, 32);
    Rng rng(109);
    std::vector<imgproc::DegradationSpec> specs;
    for (int i = 0; i < 3; ++i) specs.push_back(imgproc::sample_degradation(rng));
    auto pairs = build_pairs(crops, specs, 109);
    REQUIRE(pairs.size() == crops.size());
    for (auto& [clean, degraded] : pairs) {
        CHECK(clean.width == degraded.width);
        CHECK(clean.height == degraded.height);
        CHECK(clean.data != degraded.data);
    }
    // same seed reproduces, different seed re-draws the noise
    auto again = build_pairs(crops, specs, 109);
    CHECK(again[0].second.data == pairs[0].second.data);
    auto other = build_pairs(crops, specs, 110);
    CHECK(other[0].second.data != pairs[0].second.data);
}

TEST_CASE("finetune lowers embedding mse on its training pairs") {
    auto crops = small_crops(111, 64, 32);
    Rng rng(111);
    std::vector<imgproc::DegradationSpec> specs;
    for (int i = 0; i < 2; ++i) specs.push_back(imgproc::sample_degradation(rng));

    PretrainConfig pcfg;
    pcfg.iterations = 80;
    pcfg.batch_size = 4;
    pcfg.seed = 111;
    pcfg.embed_dim = 8;
    EncoderWeights base = pretrain_base(crops, pcfg);

    auto pairs = build_pairs(crops, specs, 111);
    double before = pair_embedding_mse(pairs, base, nullptr);

    FinetuneConfig fcfg;
    fcfg.iterations = 400;
    fcfg.batch_size = 4;
    fcfg.rank = 4;
    fcfg.lr = 5e-3;
    fcfg.seed = 111;
    LoraAdapter adapter = finetune_ree(pairs, base, fcfg);
    double after = pair_embedding_mse(pairs, base, &adapter);
    CHECK(after < before);
}

TEST_CASE("adapter save/load round-trip") {
    auto base = make_base(112, 8);
    Rng rng(112);
    LoraAdapter a;
    a.init(base, 4, rng);
    for (auto* p : a.params())
        for (double& v : p->w.v) v = rng.uniform(-0.1, 0.1);
    a.save("/tmp/ree_adapter_roundtrip");

    LoraAdapter b;
    b.init(base, 4, rng);
    b.load("/tmp/ree_adapter_roundtrip");
    auto pa = a.params();
    auto pb = b.params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->w.v == pb[i]->w.v);
}

TEST_CASE("encoder save/load round-trip") {
    auto base = make_base(113, 8);
    base.save("/tmp/ree_base_roundtrip");
    auto other = make_base(999, 8);
    other.load("/tmp/ree_base_roundtrip");
    CHECK(other.weights_hash() == base.weights_hash());
}
