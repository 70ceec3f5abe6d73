#include "dacesr/ssm.hpp"

#include <cmath>
#include <stdexcept>

namespace dacesr::ssm {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// (e^z - 1)/z and its d/da companion (z e^z - e^z + 1)/z^2, written in terms
// of an already-computed e^z (the cached A_bar) so the scan pays one
// transcendental per element; series limits near zero.
double phi_from_exp(double z, double ez) {
    if (std::fabs(z) < 1e-6) return 1.0 + z / 2.0 + z * z / 6.0;
    return (ez - 1.0) / z;
}

double psi_from_exp(double z, double ez) {
    if (std::fabs(z) < 1e-4) return 0.5 + z / 3.0 + z * z / 8.0;
    return (ez * (z - 1.0) + 1.0) / (z * z);
}

}  // namespace

ZohScalar discretize_zoh(double a, double b, double delta) {
    if (delta <= 0.0) throw std::invalid_argument("discretize_zoh: delta must be > 0");
    double z = delta * a;
    double ez = std::exp(z);
    return {ez, delta * phi_from_exp(z, ez) * b};
}

void discretize_zoh(const std::vector<double>& a_diag, const std::vector<double>& b,
                    double delta, std::vector<double>& a_bar,
                    std::vector<double>& b_bar) {
    if (a_diag.size() != b.size())
        throw std::invalid_argument("discretize_zoh: size mismatch");
    a_bar.resize(a_diag.size());
    b_bar.resize(a_diag.size());
    for (size_t i = 0; i < a_diag.size(); ++i) {
        ZohScalar r = discretize_zoh(a_diag[i], b[i], delta);
        a_bar[i] = r.a_bar;
        b_bar[i] = r.b_bar;
    }
}

double ssm_step(std::vector<double>& h, double x, const std::vector<double>& a_bar,
                const std::vector<double>& b_bar, const std::vector<double>& c) {
    if (h.size() != a_bar.size() || h.size() != b_bar.size() || h.size() != c.size())
        throw std::invalid_argument("ssm_step: size mismatch");
    double y = 0.0;
    for (size_t n = 0; n < h.size(); ++n) {
        h[n] = a_bar[n] * h[n] + b_bar[n] * x;
        y += c[n] * h[n];
    }
    return y;
}

void SsmParams::init(const std::string& name, int d, int n, Rng& rng) {
    dim = d;
    state = n;
    a_log.init(name + ".a_log", {d, n});
    wb.init(name + ".wb", {d, n});
    bb.init(name + ".bb", {n});
    wc.init(name + ".wc", {d, n});
    bc.init(name + ".bc", {n});
    wdelta.init(name + ".wdelta", {d, d});
    bdelta.init(name + ".bdelta", {d});

    // A = -(1..N) per state dimension at init.
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < n; ++j) a_log.w.v[static_cast<size_t>(i) * n + j] = std::log(j + 1.0);
    double bound = std::sqrt(1.0 / d);
    wb.fill_uniform(rng, -bound, bound);
    wc.fill_uniform(rng, -bound, bound);
    wdelta.fill_uniform(rng, -bound * 0.1, bound * 0.1);
    // softplus(bdelta) in [1e-3, 1e-1]
    for (int i = 0; i < d; ++i) {
        double target = rng.uniform(1e-3, 1e-1);
        bdelta.w.v[i] = std::log(std::expm1(target));
    }
}

std::vector<nn::Param*> SsmParams::params() {
    if (input_dependent) return {&a_log, &wb, &bb, &wc, &bc, &wdelta, &bdelta};
    return {&a_log, &bb, &bc, &bdelta};
}

std::vector<double> SsmParams::a_diag() const {
    std::vector<double> a(a_log.w.size());
    for (size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log.w.v[i]);
    return a;
}

Tensor selective_scan(const Tensor& x, SsmParams& params, ScanCache& cache) {
    const int D = params.dim, N = params.state;
    const int L = static_cast<int>(x.size()) / D;
    if (L < 1) throw std::invalid_argument("selective_scan: empty sequence");

    cache.x = x;
    cache.delta_raw = Tensor({L, D});
    cache.bt = Tensor({L, N});
    cache.ct = Tensor({L, N});
    cache.h = Tensor({L, D, N});
    cache.a_bar = Tensor({L, D, N});

    std::vector<double> a = params.a_diag();
    Tensor y({L, D});
    std::vector<double> h_prev(static_cast<size_t>(D) * N, 0.0);

    for (int t = 0; t < L; ++t) {
        const double* xt = x.data() + static_cast<size_t>(t) * D;
        double* draw = cache.delta_raw.data() + static_cast<size_t>(t) * D;
        double* bt = cache.bt.data() + static_cast<size_t>(t) * N;
        double* ct = cache.ct.data() + static_cast<size_t>(t) * N;

        for (int n = 0; n < N; ++n) {
            bt[n] = params.bb.w.v[n];
            ct[n] = params.bc.w.v[n];
        }
        for (int d = 0; d < D; ++d) draw[d] = params.bdelta.w.v[d];
        if (params.input_dependent) {
            for (int d = 0; d < D; ++d) {
                double s = xt[d];
                const double* wbr = params.wb.w.data() + static_cast<size_t>(d) * N;
                const double* wcr = params.wc.w.data() + static_cast<size_t>(d) * N;
                for (int n = 0; n < N; ++n) {
                    bt[n] += s * wbr[n];
                    ct[n] += s * wcr[n];
                }
                const double* wdr = params.wdelta.w.data() + static_cast<size_t>(d) * D;
                for (int j = 0; j < D; ++j) draw[j] += s * wdr[j];
            }
        }

        double* ht = cache.h.data() + static_cast<size_t>(t) * D * N;
        double* abar = cache.a_bar.data() + static_cast<size_t>(t) * D * N;
        double* yt = y.data() + static_cast<size_t>(t) * D;
        for (int d = 0; d < D; ++d) {
            const double delta = nn::softplus(draw[d]);
            const double xv = xt[d];
            const double* ad = a.data() + static_cast<size_t>(d) * N;
            double* hd = ht + static_cast<size_t>(d) * N;
            double* abd = abar + static_cast<size_t>(d) * N;
            const double* hp = h_prev.data() + static_cast<size_t>(d) * N;
            double acc = 0.0;
            for (int n = 0; n < N; ++n) {
                double z = delta * ad[n];
                double ab = std::exp(z);
                double bb_ = delta * phi_from_exp(z, ab) * bt[n];
                double h = ab * hp[n] + bb_ * xv;
                abd[n] = ab;
                hd[n] = h;
                acc += ct[n] * h;
            }
            yt[d] = acc;
        }
        std::copy(ht, ht + static_cast<size_t>(D) * N, h_prev.data());
    }
    return y;
}

Tensor selective_scan_backward(const Tensor& gy, SsmParams& params,
                               const ScanCache& cache) {
    const int D = params.dim, N = params.state;
    const int L = static_cast<int>(cache.x.size()) / D;
    if (static_cast<int>(gy.size()) != L * D)
        throw std::runtime_error("selective_scan_backward: shape mismatch");

    std::vector<double> a = params.a_diag();
    Tensor gx({L, D});
    std::vector<double> dh(static_cast<size_t>(D) * N, 0.0);
    std::vector<double> d_bt(N), d_ct(N), d_draw(D);

    for (int t = L - 1; t >= 0; --t) {
        const double* xt = cache.x.data() + static_cast<size_t>(t) * D;
        const double* draw = cache.delta_raw.data() + static_cast<size_t>(t) * D;
        const double* bt = cache.bt.data() + static_cast<size_t>(t) * N;
        const double* ct = cache.ct.data() + static_cast<size_t>(t) * N;
        const double* ht = cache.h.data() + static_cast<size_t>(t) * D * N;
        const double* hprev =
            t > 0 ? cache.h.data() + static_cast<size_t>(t - 1) * D * N : nullptr;
        const double* abar = cache.a_bar.data() + static_cast<size_t>(t) * D * N;
        const double* gyt = gy.data() + static_cast<size_t>(t) * D;
        double* gxt = gx.data() + static_cast<size_t>(t) * D;

        std::fill(d_bt.begin(), d_bt.end(), 0.0);
        std::fill(d_ct.begin(), d_ct.end(), 0.0);

        for (int d = 0; d < D; ++d) {
            const double delta = nn::softplus(draw[d]);
            const double xv = xt[d];
            const double dy = gyt[d];
            const double* ad = a.data() + static_cast<size_t>(d) * N;
            const double* hd = ht + static_cast<size_t>(d) * N;
            const double* abd = abar + static_cast<size_t>(d) * N;
            double* dhd = dh.data() + static_cast<size_t>(d) * N;
            double* galog = params.a_log.g.data() + static_cast<size_t>(d) * N;

            double d_delta = 0.0;
            double d_x = 0.0;
            for (int n = 0; n < N; ++n) {
                d_ct[n] += dy * hd[n];
                double dhn = dhd[n] + ct[n] * dy;
                double hp = hprev ? hprev[static_cast<size_t>(d) * N + n] : 0.0;
                double z = delta * ad[n];
                double ph = phi_from_exp(z, abd[n]);
                double bbar = delta * ph * bt[n];

                double d_abar = dhn * hp;
                double d_bbar = dhn * xv;
                d_x += dhn * bbar;
                d_delta += d_abar * ad[n] * abd[n] + d_bbar * bt[n] * abd[n];
                double d_a = d_abar * delta * abd[n] +
                             d_bbar * delta * delta * bt[n] * psi_from_exp(z, abd[n]);
                galog[n] += d_a * ad[n];  // a = -exp(a_log)
                d_bt[n] += d_bbar * delta * ph;
                dhd[n] = dhn * abd[n];  // becomes dh_{t-1}
            }
            d_draw[d] = d_delta * sigmoid(draw[d]);
            gxt[d] = d_x;
        }

        // Projection grads; time-invariant mode trains biases only.
        for (int n = 0; n < N; ++n) {
            params.bb.g.v[n] += d_bt[n];
            params.bc.g.v[n] += d_ct[n];
        }
        for (int d = 0; d < D; ++d) params.bdelta.g.v[d] += d_draw[d];
        if (params.input_dependent) {
            for (int d = 0; d < D; ++d) {
                double s = xt[d];
                double* gwbr = params.wb.g.data() + static_cast<size_t>(d) * N;
                double* gwcr = params.wc.g.data() + static_cast<size_t>(d) * N;
                const double* wbr = params.wb.w.data() + static_cast<size_t>(d) * N;
                const double* wcr = params.wc.w.data() + static_cast<size_t>(d) * N;
                double acc = 0.0;
                for (int n = 0; n < N; ++n) {
                    gwbr[n] += s * d_bt[n];
                    gwcr[n] += s * d_ct[n];
                    acc += wbr[n] * d_bt[n] + wcr[n] * d_ct[n];
                }
                gxt[d] += acc;
                double* gwdr = params.wdelta.g.data() + static_cast<size_t>(d) * D;
                const double* wdr = params.wdelta.w.data() + static_cast<size_t>(d) * D;
                double acc2 = 0.0;
                for (int j = 0; j < D; ++j) {
                    gwdr[j] += s * d_draw[j];
                    acc2 += wdr[j] * d_draw[j];
                }
                gxt[d] += acc2;
            }
        }
    }
    return gx;
}

void VimmWeights::init(const std::string& name, int c, int lambda, int state,
                       int conv_width, Rng& rng) {
    channels = c;
    expand = lambda;
    const int ec = c * lambda;
    norm.init(name + ".norm", c);
    in_proj.init(name + ".in_proj", c, ec, rng);
    gate_proj.init(name + ".gate_proj", c, ec, rng);
    conv.init(name + ".conv", conv_width, ec, rng);
    ssm.init(name + ".ssm", ec, state, rng);
    out_proj.init(name + ".out_proj", ec, c, rng);
}

std::vector<nn::Param*> VimmWeights::params() {
    std::vector<nn::Param*> out;
    for (auto* p : norm.params()) out.push_back(p);
    for (auto* p : in_proj.params()) out.push_back(p);
    for (auto* p : gate_proj.params()) out.push_back(p);
    for (auto* p : conv.params()) out.push_back(p);
    for (auto* p : ssm.params()) out.push_back(p);
    for (auto* p : out_proj.params()) out.push_back(p);
    return out;
}

Tensor vimm_forward(const Tensor& x, VimmWeights& w, VimmCache& cache) {
    const int c = w.channels;
    const int L = static_cast<int>(x.size()) / c;
    if (static_cast<size_t>(L) * c != x.size())
        throw std::invalid_argument("vimm_forward: shape mismatch");

    cache.x = x;
    Tensor flat = x;
    flat.shape = {L, c};
    cache.normed = w.norm.forward(flat, cache.norm_mean, cache.norm_inv_std);
    cache.expanded = w.in_proj.forward(cache.normed);
    cache.conv_out = w.conv.forward(cache.expanded);
    cache.conv_act = cache.conv_out;
    for (double& v : cache.conv_act.v) v = nn::silu(v);
    cache.scan_out = selective_scan(cache.conv_act, w.ssm, cache.scan);
    cache.gate_pre = w.gate_proj.forward(cache.normed);
    cache.gated = cache.scan_out;
    for (size_t i = 0; i < cache.gated.size(); ++i)
        cache.gated.v[i] *= nn::silu(cache.gate_pre.v[i]);
    Tensor y = w.out_proj.forward(cache.gated);
    for (size_t i = 0; i < y.size(); ++i) y.v[i] += x.v[i];
    y.shape = x.shape;
    return y;
}

Tensor vimm_backward(const Tensor& gy, VimmWeights& w, const VimmCache& cache) {
    const int c = w.channels;
    const int L = static_cast<int>(cache.x.size()) / c;
    Tensor gflat = gy;
    gflat.shape = {L, c};

    Tensor ggated = w.out_proj.backward(cache.gated, gflat);
    Tensor gscan = ggated;
    Tensor ggate_pre = ggated;
    for (size_t i = 0; i < ggated.size(); ++i) {
        gscan.v[i] = ggated.v[i] * nn::silu(cache.gate_pre.v[i]);
        ggate_pre.v[i] =
            ggated.v[i] * cache.scan_out.v[i] * nn::silu_grad(cache.gate_pre.v[i]);
    }
    Tensor gconv_act = selective_scan_backward(gscan, w.ssm, cache.scan);
    for (size_t i = 0; i < gconv_act.size(); ++i)
        gconv_act.v[i] *= nn::silu_grad(cache.conv_out.v[i]);
    Tensor gexpanded = w.conv.backward(cache.expanded, gconv_act);
    Tensor gnormed = w.in_proj.backward(cache.normed, gexpanded);
    Tensor gnormed2 = w.gate_proj.backward(cache.normed, ggate_pre);
    for (size_t i = 0; i < gnormed.size(); ++i) gnormed.v[i] += gnormed2.v[i];

    Tensor xflat = cache.x;
    xflat.shape = {L, c};
    Tensor gx = w.norm.backward(xflat, gnormed, cache.norm_mean, cache.norm_inv_std);
    for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += gy.v[i];  // residual
    gx.shape = cache.x.shape;
    return gx;
}

}  // namespace dacesr::ssm
