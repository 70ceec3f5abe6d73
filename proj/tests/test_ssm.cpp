#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "dacesr/ssm.hpp"

using namespace dacesr;
using nn::Tensor;

namespace {

// Dense matrix-exponential oracle: scaling and squaring with a Taylor series,
// independent of the closed form under test.
std::vector<double> mat_exp(const std::vector<double>& m, int n) {
    double norm = 0.0;
    for (double v : m) norm = std::max(norm, std::fabs(v));
    int s = 0;
    while (norm > 0.5) {
        norm /= 2.0;
        ++s;
    }
    std::vector<double> a(m);
    for (double& v : a) v /= std::pow(2.0, s);

    std::vector<double> result(n * n, 0.0), term(n * n, 0.0);
    for (int i = 0; i < n; ++i) result[i * n + i] = term[i * n + i] = 1.0;
    for (int k = 1; k <= 24; ++k) {
        std::vector<double> next(n * n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int l = 0; l < n; ++l)
                    next[i * n + j] += term[i * n + l] * a[l * n + j] / k;
        term = next;
        for (int i = 0; i < n * n; ++i) result[i] += term[i];
    }
    for (int q = 0; q < s; ++q) {
        std::vector<double> sq(n * n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int l = 0; l < n; ++l)
                    sq[i * n + j] += result[i * n + l] * result[l * n + j];
        result = sq;
    }
    return result;
}

double sum_all(const Tensor& t) {
    double s = 0.0;
    for (double v : t.v) s += v;
    return s;
}

}  // namespace

TEST_CASE("zoh scalar closed form") {
    ssm::ZohScalar r = ssm::discretize_zoh(-1.0, 1.0, 0.1);
    CHECK(r.a_bar == doctest::Approx(0.9048374180359595).epsilon(1e-12));
    CHECK(r.b_bar == doctest::Approx(0.09516258196404048).epsilon(1e-12));
}

TEST_CASE("zoh zero-matrix limit") {
    ssm::ZohScalar r = ssm::discretize_zoh(0.0, 2.0, 0.1);
    CHECK(r.a_bar == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.b_bar == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("zoh rejects nonpositive delta") {
    CHECK_THROWS(ssm::discretize_zoh(-1.0, 1.0, 0.0));
    CHECK_THROWS(ssm::discretize_zoh(-1.0, 1.0, -0.5));
}

TEST_CASE("zoh vector form matches scalar elementwise") {
    Rng rng(31);
    std::vector<double> a(4), b(4), abar, bbar;
    for (int i = 0; i < 4; ++i) {
        a[i] = -rng.uniform(0.1, 3.0);
        b[i] = rng.uniform(-2.0, 2.0);
    }
    double delta = rng.uniform(0.01, 1.0);
    ssm::discretize_zoh(a, b, delta, abar, bbar);
    for (int i = 0; i < 4; ++i) {
        ssm::ZohScalar r = ssm::discretize_zoh(a[i], b[i], delta);
        CHECK(abar[i] == doctest::Approx(r.a_bar).epsilon(1e-14));
        CHECK(bbar[i] == doctest::Approx(r.b_bar).epsilon(1e-14));
    }
}

TEST_CASE("zoh matches matrix-exponential oracle on diagonal matrices") {
    Rng rng(32);
    for (int trial = 0; trial < 50; ++trial) {
        double a = -rng.uniform(0.01, 5.0);
        double b = rng.uniform(-2.0, 2.0);
        double delta = rng.uniform(1e-3, 1.0);
        ssm::ZohScalar r = ssm::discretize_zoh(a, b, delta);

        std::vector<double> da = {delta * a};
        std::vector<double> e = mat_exp(da, 1);
        CHECK(r.a_bar == doctest::Approx(e[0]).epsilon(1e-8));
        // B_bar = (dA)^{-1} (exp(dA) - I) dB
        double bbar = (e[0] - 1.0) / (delta * a) * delta * b;
        CHECK(r.b_bar == doctest::Approx(bbar).epsilon(1e-8));
    }
}

TEST_CASE("zoh matches dense 4x4 matrix-exponential oracle") {
    Rng rng(33);
    const int n = 4;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = -rng.uniform(0.05, 4.0);
            b[i] = rng.uniform(-1.5, 1.5);
        }
        double delta = rng.uniform(0.01, 0.8);

        // Dense path: build dA as a full matrix, exponentiate with the
        // oracle, then solve (dA) X = (exp(dA) - I) dB.
        std::vector<double> da(n * n, 0.0);
        for (int i = 0; i < n; ++i) da[i * n + i] = delta * a[i];
        std::vector<double> e = mat_exp(da, n);

        std::vector<double> abar, bbar;
        ssm::discretize_zoh(a, b, delta, abar, bbar);
        for (int i = 0; i < n; ++i) {
            CHECK(abar[i] == doctest::Approx(e[i * n + i]).epsilon(1e-8));
            double rhs = (e[i * n + i] - 1.0) * delta * b[i];
            double x = rhs / (delta * a[i]);
            CHECK(bbar[i] == doctest::Approx(x).epsilon(1e-8));
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) CHECK(std::fabs(e[i * n + j]) < 1e-12);
    }
}

TEST_CASE("a_bar stays in (0, 1] and approaches I + dA for small delta") {
    Rng rng(34);
    for (int trial = 0; trial < 20; ++trial) {
        double a = -rng.uniform(0.01, 5.0);
        double delta = rng.uniform(1e-9, 1e-5);
        ssm::ZohScalar r = ssm::discretize_zoh(a, 1.0, delta);
        CHECK(r.a_bar > 0.0);
        CHECK(r.a_bar <= 1.0);
        CHECK(r.a_bar == doctest::Approx(1.0 + delta * a).epsilon(1e-8));
    }
}

TEST_CASE("ssm_step recurrence") {
    std::vector<double> h = {0.5, -0.25};
    std::vector<double> abar = {0.9, 0.8};
    std::vector<double> bbar = {0.1, 0.2};
    std::vector<double> c = {1.0, -1.0};
    double y = ssm::ssm_step(h, 2.0, abar, bbar, c);
    CHECK(h[0] == doctest::Approx(0.65).epsilon(1e-14));
    CHECK(h[1] == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(y == doctest::Approx(0.45).epsilon(1e-14));
}

TEST_CASE("selective_scan matches the naive per-step loop") {
    Rng rng(35);
    for (int trial = 0; trial < 100; ++trial) {
        int L = 1 + static_cast<int>(rng.uniform_int(0, 15));
        int D = 1 + static_cast<int>(rng.uniform_int(0, 7));
        int N = 1 + static_cast<int>(rng.uniform_int(0, 7));
        ssm::SsmParams p;
        p.init("t.ssm", D, N, rng);
        for (double& v : p.wb.w.v) v = rng.uniform(-0.5, 0.5);
        for (double& v : p.wc.w.v) v = rng.uniform(-0.5, 0.5);
        Tensor x({L, D});
        for (double& v : x.v) v = rng.uniform(-1.0, 1.0);

        ssm::ScanCache cache;
        Tensor y = ssm::selective_scan(x, p, cache);

        // Naive reference: per-token projections, per-channel ZOH + step.
        std::vector<double> a = p.a_diag();
        std::vector<std::vector<double>> h(D, std::vector<double>(N, 0.0));
        for (int t = 0; t < L; ++t) {
            std::vector<double> bt(N), ct(N), draw(D);
            for (int n = 0; n < N; ++n) {
                bt[n] = p.bb.w.v[n];
                ct[n] = p.bc.w.v[n];
            }
            for (int d = 0; d < D; ++d) draw[d] = p.bdelta.w.v[d];
            for (int d = 0; d < D; ++d) {
                double s = x.v[t * D + d];
                for (int n = 0; n < N; ++n) {
                    bt[n] += s * p.wb.w.v[d * N + n];
                    ct[n] += s * p.wc.w.v[d * N + n];
                }
                for (int j = 0; j < D; ++j) draw[j] += s * p.wdelta.w.v[d * D + j];
            }
            for (int d = 0; d < D; ++d) {
                double delta = nn::softplus(draw[d]);
                std::vector<double> ad(N), abar, bbar;
                for (int n = 0; n < N; ++n) ad[n] = a[d * N + n];
                ssm::discretize_zoh(ad, bt, delta, abar, bbar);
                double yt = ssm::ssm_step(h[d], x.v[t * D + d], abar, bbar, ct);
                CHECK(std::fabs(yt - y.v[t * D + d]) < 1e-10);
            }
        }
    }
}

TEST_CASE("selective_scan rejects empty sequences") {
    ssm::SsmParams p;
    Rng rng(36);
    p.init("t.ssm", 2, 2, rng);
    ssm::ScanCache cache;
    CHECK_THROWS(ssm::selective_scan(Tensor({0, 2}), p, cache));
}

TEST_CASE("selective_scan_backward matches finite differences") {
    Rng rng(37);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        int L = 2 + static_cast<int>(rng.uniform_int(0, 4));
        int D = 1 + static_cast<int>(rng.uniform_int(0, 3));
        int N = 1 + static_cast<int>(rng.uniform_int(0, 3));
        ssm::SsmParams p;
        p.init("t.ssm", D, N, rng);
        for (double& v : p.wb.w.v) v = rng.uniform(-0.5, 0.5);
        for (double& v : p.wc.w.v) v = rng.uniform(-0.5, 0.5);
        Tensor x({L, D});
        for (double& v : x.v) v = rng.uniform(-1.0, 1.0);

        ssm::ScanCache cache;
        Tensor y = ssm::selective_scan(x, p, cache);
        Tensor gy(y.shape);
        for (double& v : gy.v) v = rng.uniform(-1.0, 1.0);
        nn::zero_grads(p.params());
        Tensor gx = ssm::selective_scan_backward(gy, p, cache);

        auto weighted = [&](const Tensor& yy) {
            double s = 0.0;
            for (size_t i = 0; i < yy.size(); ++i) s += yy.v[i] * gy.v[i];
            return s;
        };
        const double eps = 1e-6;

        // input grads
        for (int k = 0; k < 3; ++k) {
            size_t i = static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(x.size()) - 1));
            Tensor xp = x, xm = x;
            xp.v[i] += eps;
            xm.v[i] -= eps;
            ssm::ScanCache c1, c2;
            double num = (weighted(ssm::selective_scan(xp, p, c1)) -
                          weighted(ssm::selective_scan(xm, p, c2))) /
                         (2 * eps);
            double ana = gx.v[i];
            double rel = std::fabs(num - ana) /
                         std::max({std::fabs(num), std::fabs(ana), 1e-8});
            worst = std::max(worst, rel);
        }
        // parameter grads
        for (nn::Param* prm : p.params()) {
            for (int k = 0; k < 2; ++k) {
                size_t i = static_cast<size_t>(
                    rng.uniform_int(0, static_cast<int64_t>(prm->w.size()) - 1));
                double save = prm->w.v[i];
                prm->w.v[i] = save + eps;
                ssm::ScanCache c1;
                double lp = weighted(ssm::selective_scan(x, p, c1));
                prm->w.v[i] = save - eps;
                ssm::ScanCache c2;
                double lm = weighted(ssm::selective_scan(x, p, c2));
                prm->w.v[i] = save;
                double num = (lp - lm) / (2 * eps);
                double ana = prm->g.v[i];
                double rel = std::fabs(num - ana) /
                             std::max({std::fabs(num), std::fabs(ana), 1e-8});
                worst = std::max(worst, rel);
            }
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("vimm preserves shape and zero out_proj is the identity") {
    Rng rng(38);
    ssm::VimmWeights w;
    w.init("t.vimm", 8, 2, 4, 4, rng);
    Tensor x({5, 6, 8});
    for (double& v : x.v) v = rng.uniform(-1.0, 1.0);

    ssm::VimmCache cache;
    Tensor y = ssm::vimm_forward(x, w, cache);
    REQUIRE(y.shape == x.shape);

    for (double& v : w.out_proj.weight.w.v) v = 0.0;
    for (double& v : w.out_proj.bias.w.v) v = 0.0;
    ssm::VimmCache c2;
    Tensor y2 = ssm::vimm_forward(x, w, c2);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y2.v[i] == x.v[i]);
}

TEST_CASE("vimm backward matches finite differences") {
    Rng rng(39);
    ssm::VimmWeights w;
    w.init("t.vimm", 4, 2, 3, 4, rng);
    Tensor x({3, 3, 4});
    for (double& v : x.v) v = rng.uniform(-1.0, 1.0);

    ssm::VimmCache cache;
    Tensor y = ssm::vimm_forward(x, w, cache);
    Tensor gy(y.shape);
    for (double& v : gy.v) v = rng.uniform(-1.0, 1.0);
    nn::zero_grads(w.params());
    Tensor gx = ssm::vimm_backward(gy, w, cache);

    auto weighted = [&](const Tensor& yy) {
        double s = 0.0;
        for (size_t i = 0; i < yy.size(); ++i) s += yy.v[i] * gy.v[i];
        return s;
    };
    const double eps = 1e-6;
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        size_t i = static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(x.size()) - 1));
        Tensor xp = x, xm = x;
        xp.v[i] += eps;
        xm.v[i] -= eps;
        ssm::VimmCache c1, c2;
        double num = (weighted(ssm::vimm_forward(xp, w, c1)) -
                      weighted(ssm::vimm_forward(xm, w, c2))) /
                     (2 * eps);
        double rel = std::fabs(num - gx.v[i]) /
                     std::max({std::fabs(num), std::fabs(gx.v[i]), 1e-8});
        worst = std::max(worst, rel);
    }
    for (nn::Param* prm : w.params()) {
        for (int k = 0; k < 2; ++k) {
            size_t i = static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(prm->w.size()) - 1));
            double save = prm->w.v[i];
            prm->w.v[i] = save + eps;
            ssm::VimmCache c1;
            double lp = weighted(ssm::vimm_forward(x, w, c1));
            prm->w.v[i] = save - eps;
            ssm::VimmCache c2;
            double lm = weighted(ssm::vimm_forward(x, w, c2));
            prm->w.v[i] = save;
            double num = (lp - lm) / (2 * eps);
            double rel = std::fabs(num - prm->g.v[i]) /
                         std::max({std::fabs(num), std::fabs(prm->g.v[i]), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("scan output is finite on long sequences") {
    Rng rng(40);
    ssm::SsmParams p;
    p.init("t.ssm", 4, 4, rng);
    Tensor x({512, 4});
    for (double& v : x.v) v = rng.uniform(-2.0, 2.0);
    ssm::ScanCache cache;
    Tensor y = ssm::selective_scan(x, p, cache);
    CHECK(std::isfinite(sum_all(y)));
}
