#pragma once

#include <string>
#include <vector>

#include "mcad/nn/init.hpp"
#include "mcad/nn/ssm.hpp"

namespace mcad::model {

using nn::Parameter;
using nn::ScanMode;
using nn::Shape;
using nn::Tape;

/// Pre-norm residual Mamba block:
///   y = x + out_proj( SSM(conv_causal(branch1)) . silu(branch2) )
/// with [branch1, branch2] = in_proj(rmsnorm(x)). Causal end to end.
template <typename T>
struct MambaBlockParams {
    Parameter<T> norm_g;
    Parameter<T> w_in;             // (2*Din, D), no bias
    Parameter<T> conv_w, conv_b;   // (Din, K)
    nn::SsmParams<T> ssm;
    Parameter<T> w_out;            // (D, Din), no bias
    int d = 0, d_inner = 0;

    MambaBlockParams() = default;
    MambaBlockParams(const std::string& prefix, int d_, int expand, int n_state, int conv_width)
        : norm_g(prefix + ".norm_g", Shape{d_}),
          w_in(prefix + ".w_in", Shape{2 * expand * d_, d_}),
          conv_w(prefix + ".conv_w", Shape{expand * d_, conv_width}),
          conv_b(prefix + ".conv_b", Shape{expand * d_}),
          ssm(prefix + ".ssm", expand * d_, n_state),
          w_out(prefix + ".w_out", Shape{d_, expand * d_}),
          d(d_), d_inner(expand * d_) {}

    void init(Rng& rng) {
        nn::init_const(norm_g, T(1));
        nn::init_linear(w_in, rng);
        nn::init_conv_dw(conv_w, rng);
        nn::init_zero(conv_b);
        nn::init_linear(ssm.w_dt, rng);
        nn::init_dt_bias(ssm.b_dt, rng);
        nn::init_linear(ssm.w_b, rng);
        nn::init_linear(ssm.w_c, rng);
        nn::init_log_a(ssm.log_a);
        nn::init_linear(w_out, rng);
    }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> ps = {&norm_g, &w_in, &conv_w, &conv_b, &w_out};
        for (auto* p : ssm.parameters()) ps.push_back(p);
        return ps;
    }
};

template <typename T>
int mamba_block(Tape<T>& tp, MambaBlockParams<T>& p, int x, ScanMode mode) {
    int xn = nn::rmsnorm(tp, x, tp.param(p.norm_g));
    int proj = nn::linear(tp, xn, tp.param(p.w_in));
    int b1 = nn::slice_lastdim(tp, proj, 0, p.d_inner);
    int b2 = nn::slice_lastdim(tp, proj, p.d_inner, p.d_inner);
    int conv = nn::causal_depthwise_conv(tp, b1, tp.param(p.conv_w), tp.param(p.conv_b));
    int s = nn::ssm_layer(tp, p.ssm, conv, mode);
    int gated = nn::mul(tp, s, nn::silu(tp, b2));
    int out = nn::linear(tp, gated, tp.param(p.w_out));
    return nn::add(tp, x, out);
}

/// Pre-norm transformer block (ablation variant A): multi-head self-attention
/// plus a 4x feed-forward, both residual.
template <typename T>
struct AttentionBlockParams {
    Parameter<T> norm1_g, norm2_g;
    Parameter<T> w_q, w_k, w_v, w_o;       // (D, D)
    Parameter<T> w_ff1, b_ff1, w_ff2, b_ff2;
    int d = 0, n_heads = 0;

    AttentionBlockParams() = default;
    AttentionBlockParams(const std::string& prefix, int d_, int heads)
        : norm1_g(prefix + ".norm1_g", Shape{d_}),
          norm2_g(prefix + ".norm2_g", Shape{d_}),
          w_q(prefix + ".w_q", Shape{d_, d_}),
          w_k(prefix + ".w_k", Shape{d_, d_}),
          w_v(prefix + ".w_v", Shape{d_, d_}),
          w_o(prefix + ".w_o", Shape{d_, d_}),
          w_ff1(prefix + ".w_ff1", Shape{4 * d_, d_}),
          b_ff1(prefix + ".b_ff1", Shape{4 * d_}),
          w_ff2(prefix + ".w_ff2", Shape{d_, 4 * d_}),
          b_ff2(prefix + ".b_ff2", Shape{d_}),
          d(d_), n_heads(heads) {}

    void init(Rng& rng) {
        nn::init_const(norm1_g, T(1));
        nn::init_const(norm2_g, T(1));
        for (auto* w : {&w_q, &w_k, &w_v, &w_o, &w_ff1, &w_ff2}) nn::init_linear(*w, rng);
        nn::init_zero(b_ff1);
        nn::init_zero(b_ff2);
    }

    std::vector<Parameter<T>*> parameters() {
        return {&norm1_g, &norm2_g, &w_q, &w_k, &w_v, &w_o, &w_ff1, &b_ff1, &w_ff2, &b_ff2};
    }
};

template <typename T>
int attention_block(Tape<T>& tp, AttentionBlockParams<T>& p, int x) {
    const auto& X = tp.val(x);
    int B = X.shape[0], L = X.shape[1], D = X.shape[2];
    int H = p.n_heads, dh = D / H;
    nn::check_shape(D % H == 0, "attention heads must divide d");

    int xn = nn::rmsnorm(tp, x, tp.param(p.norm1_g));
    auto split_heads = [&](int y) {
        int y4 = nn::reshape(tp, y, Shape{B, L, H, dh});
        int yp = nn::permute_0213(tp, y4);  // (B, H, L, dh)
        return nn::reshape(tp, yp, Shape{B * H, L, dh});
    };
    int q = split_heads(nn::linear(tp, xn, tp.param(p.w_q)));
    int k = split_heads(nn::linear(tp, xn, tp.param(p.w_k)));
    int v = split_heads(nn::linear(tp, xn, tp.param(p.w_v)));

    int scores = nn::scale(tp, nn::bmm(tp, q, k, false, true), T(1.0 / std::sqrt(double(dh))));
    int attn = nn::softmax_lastdim(tp, scores);
    int ctx = nn::bmm(tp, attn, v, false, false);  // (B*H, L, dh)
    int c4 = nn::reshape(tp, ctx, Shape{B, H, L, dh});
    int cp = nn::permute_0213(tp, c4);  // (B, L, H, dh)
    int merged = nn::reshape(tp, cp, Shape{B, L, D});
    int x1 = nn::add(tp, x, nn::linear(tp, merged, tp.param(p.w_o)));

    int x1n = nn::rmsnorm(tp, x1, tp.param(p.norm2_g));
    int ff = nn::linear(tp, nn::silu(tp, nn::linear(tp, x1n, tp.param(p.w_ff1), tp.param(p.b_ff1))),
                        tp.param(p.w_ff2), tp.param(p.b_ff2));
    return nn::add(tp, x1, ff);
}

}  // namespace mcad::model
