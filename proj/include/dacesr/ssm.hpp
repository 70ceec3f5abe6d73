#pragma once

#include <vector>

#include "dacesr/nn.hpp"

namespace dacesr::ssm {

using nn::Tensor;

/// Exact ZOH for one diagonal entry: A_bar = exp(delta*a),
/// B_bar = (exp(delta*a)-1)/a * b, with the series limit for |delta*a| small.
struct ZohScalar {
    double a_bar;
    double b_bar;
};
ZohScalar discretize_zoh(double a, double b, double delta);

/// Elementwise ZOH over a diagonal A.
void discretize_zoh(const std::vector<double>& a_diag, const std::vector<double>& b,
                    double delta, std::vector<double>& a_bar, std::vector<double>& b_bar);

/// One recurrence step: h_next = A_bar⊙h + B_bar·x, y = C·h_next.
double ssm_step(std::vector<double>& h, double x, const std::vector<double>& a_bar,
                const std::vector<double>& b_bar, const std::vector<double>& c);

/// Selective-scan parameters for a D-channel sequence with diagonal state.
/// B, C and delta are input-dependent linear maps of the token; a
/// time-invariant variant (bias-only maps) is available as a toggle.
struct SsmParams {
    int dim = 0;    // token feature dim D
    int state = 0;  // state size N
    bool input_dependent = true;

    nn::Param a_log;      // [D,N]; A = -exp(a_log) keeps entries < 0
    nn::Param wb, bb;     // B_proj: x[D] -> [N]
    nn::Param wc, bc;     // C_proj: x[D] -> [N]
    nn::Param wdelta, bdelta;  // delta_proj: x[D] -> [D], softplus

    void init(const std::string& name, int d, int n, Rng& rng);
    std::vector<nn::Param*> params();
    /// Diagonal A entries (negative) materialized from a_log.
    std::vector<double> a_diag() const;
};

struct ScanCache {
    Tensor x;          // [L,D]
    Tensor delta_raw;  // [L,D]
    Tensor bt, ct;     // [L,N]
    Tensor h;          // [L,D,N]
    Tensor a_bar;      // [L,D,N]
};

/// Unidirectional left-to-right scan; per-token ZOH discretization.
Tensor selective_scan(const Tensor& x, SsmParams& params, ScanCache& cache);

/// Exact reverse-mode pass; accumulates parameter grads, returns grad of x.
Tensor selective_scan_backward(const Tensor& gy, SsmParams& params,
                               const ScanCache& cache);

/// Vision Mamba Module: norm → expand → causal conv → scan, gated, projected
/// back with a residual connection.
struct VimmWeights {
    int channels = 0;
    int expand = 2;  // lambda

    nn::LayerNorm norm;
    nn::Linear in_proj;    // C -> lambda*C
    nn::Linear gate_proj;  // C -> lambda*C
    nn::CausalConv1d conv;
    SsmParams ssm;
    nn::Linear out_proj;  // lambda*C -> C

    void init(const std::string& name, int c, int lambda, int state, int conv_width,
              Rng& rng);
    std::vector<nn::Param*> params();
};

struct VimmCache {
    Tensor x, norm_mean, norm_inv_std, normed;
    Tensor expanded, conv_out, conv_act;  // scan branch pre/post activation
    Tensor gate_pre;                      // gate branch pre-activation
    Tensor scan_out, gated;
    ScanCache scan;
};

/// x is [H,W,C] (or [L,C]); tokens are the row-major raster order.
Tensor vimm_forward(const Tensor& x, VimmWeights& w, VimmCache& cache);
Tensor vimm_backward(const Tensor& gy, VimmWeights& w, const VimmCache& cache);

}  // namespace dacesr::ssm
