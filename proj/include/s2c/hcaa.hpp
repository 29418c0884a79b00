#pragma once

// Hand-Coordinated Asymmetric Attention: each stream's self-attention minus
// a learnable lambda times the peer stream's self-attention, which cancels
// noise components common to both streams. The concat and cross-attention
// alternatives live behind the same fusion interface so swapping them is a
// pure config change.

#include <cmath>
#include <string>
#include <vector>

#include "s2c/autodiff.hpp"
#include "s2c/nn.hpp"

namespace s2c {

enum class Side { left, right };

inline const char* side_name(Side s) { return s == Side::left ? "left" : "right"; }
inline Side other_side(Side s) { return s == Side::left ? Side::right : Side::left; }

enum class FusionMode { none, concat, cross_attention, hcaa };

inline const char* fusion_mode_name(FusionMode m) {
    switch (m) {
        case FusionMode::none: return "none";
        case FusionMode::concat: return "concat";
        case FusionMode::cross_attention: return "cross-attention";
        case FusionMode::hcaa: return "hcaa";
    }
    return "?";
}

inline FusionMode fusion_mode_from_name(const std::string& s) {
    if (s == "none") return FusionMode::none;
    if (s == "concat") return FusionMode::concat;
    if (s == "cross-attention") return FusionMode::cross_attention;
    if (s == "hcaa") return FusionMode::hcaa;
    throw std::invalid_argument("unknown fusion mode: " + s);
}

// Exported post-MHSA features of one stream at a fusion point.
template <class T>
struct StreamFeaturesT {
    VarT<T> values;  // N x d
    Side hand = Side::left;
};

// Per-head lambda parameters; zero init makes lambda == lambda_init exactly.
template <class T>
struct HcaaLambdaT {
    ParamPtr<T> l1q, l1k, l2q, l2k;
    double lambda_init = 0.78;

    static HcaaLambdaT make(ParamStoreT<T>& store, const std::string& name, int dk, double lambda_init) {
        HcaaLambdaT p;
        p.l1q = store.add(name + ".l1q", TensorT<T>(Shape{dk}, T(0)));
        p.l1k = store.add(name + ".l1k", TensorT<T>(Shape{dk}, T(0)));
        p.l2q = store.add(name + ".l2q", TensorT<T>(Shape{dk}, T(0)));
        p.l2k = store.add(name + ".l2k", TensorT<T>(Shape{dk}, T(0)));
        p.lambda_init = lambda_init;
        return p;
    }
};

// exp arguments are clamped to [-20, 20] so early training cannot overflow
constexpr double kLambdaClamp = 20.0;

// lambda = exp(l1q . l1k) - exp(l2q . l2k) + lambda_init
template <class T>
double compute_lambda(const HcaaLambdaT<T>& p) {
    double d1 = 0, d2 = 0;
    for (std::size_t i = 0; i < p.l1q->value.data.size(); ++i) {
        d1 += static_cast<double>(p.l1q->value.data[i]) * p.l1k->value.data[i];
        d2 += static_cast<double>(p.l2q->value.data[i]) * p.l2k->value.data[i];
    }
    d1 = std::min(kLambdaClamp, std::max(-kLambdaClamp, d1));
    d2 = std::min(kLambdaClamp, std::max(-kLambdaClamp, d2));
    return std::exp(d1) - std::exp(d2) + p.lambda_init;
}

// graph version used during training; the scalar flows gradients into the
// four lambda vectors
template <class T>
VarT<T> lambda_var(GraphT<T>& g, const HcaaLambdaT<T>& p) {
    VarT<T> d1 = clamp_of(sum_all(mul(g.param(p.l1q), g.param(p.l1k))), -kLambdaClamp, kLambdaClamp);
    VarT<T> d2 = clamp_of(sum_all(mul(g.param(p.l2q), g.param(p.l2k))), -kLambdaClamp, kLambdaClamp);
    return add_scalar(sub(exp_of(d1), exp_of(d2)), p.lambda_init);
}

// One stream's fusion-point weights. Only the members required by `mode`
// are populated, so checkpoint names stay stable per configuration.
template <class T>
struct FusionT {
    FusionMode mode = FusionMode::none;
    int heads = 1;
    int dim = 0;

    // hcaa: per-stream projections plus per-head lambda parameters
    LinearT<T> wq, wk, wv, wo;
    std::vector<HcaaLambdaT<T>> lam;

    // concat: projection from 2d back to d, initialized to [I; 0] so the
    // fused features start as the own stream's features
    LinearT<T> cat_proj;

    // cross-attention: Q from own, K/V from peer, residual added to own
    LinearT<T> xq, xk, xv, xo;

    static FusionT make(ParamStoreT<T>& store, const std::string& name, FusionMode mode, int dim, int heads,
                        double lambda_init, RngStream& rng) {
        FusionT f;
        f.mode = mode;
        f.heads = heads;
        f.dim = dim;
        if (dim % heads != 0) {
            throw std::invalid_argument("fusion width must be divisible by head count");
        }
        switch (mode) {
            case FusionMode::none:
                break;
            case FusionMode::hcaa: {
                f.wq = LinearT<T>::make(store, name + ".wq", dim, dim, rng);
                f.wk = LinearT<T>::make(store, name + ".wk", dim, dim, rng);
                f.wv = LinearT<T>::make(store, name + ".wv", dim, dim, rng);
                f.wo = LinearT<T>::make(store, name + ".wo", dim, dim, rng);
                const int dk = dim / heads;
                for (int h = 0; h < heads; ++h) {
                    f.lam.push_back(
                        HcaaLambdaT<T>::make(store, name + ".lam" + std::to_string(h), dk, lambda_init));
                }
                break;
            }
            case FusionMode::concat: {
                f.cat_proj = LinearT<T>::make(store, name + ".proj", 2 * dim, dim, rng, /*zero_init=*/true);
                for (int i = 0; i < dim; ++i) {
                    f.cat_proj.w->value(i, i) = T(1);
                }
                break;
            }
            case FusionMode::cross_attention: {
                f.xq = LinearT<T>::make(store, name + ".xq", dim, dim, rng);
                f.xk = LinearT<T>::make(store, name + ".xk", dim, dim, rng);
                f.xv = LinearT<T>::make(store, name + ".xv", dim, dim, rng);
                f.xo = LinearT<T>::make(store, name + ".xo", dim, dim, rng, /*zero_init=*/true);
                break;
            }
        }
        return f;
    }
};

// Differential attention before the output projection: per head,
// own-stream self-attention minus lambda times the peer's self-attention.
// Each stream's Q/K/V come from that stream's own projections.
template <class T>
VarT<T> hcaa_attend_preproj(GraphT<T>& g, const FusionT<T>& own, const FusionT<T>& peer, VarT<T> own_x,
                            VarT<T> peer_x) {
    ensure_same_shape(own_x.val(), peer_x.val(), "hcaa_attend");
    auto ctx_own = per_head_contexts(g, own.wq(g, own_x), own.wk(g, own_x), own.wv(g, own_x), own.heads);
    auto ctx_peer =
        per_head_contexts(g, peer.wq(g, peer_x), peer.wk(g, peer_x), peer.wv(g, peer_x), peer.heads);
    std::vector<VarT<T>> out;
    out.reserve(ctx_own.size());
    for (std::size_t h = 0; h < ctx_own.size(); ++h) {
        VarT<T> lam = lambda_var(g, own.lam[h]);
        out.push_back(sub(ctx_own[h], mul_scalar_var(ctx_peer[h], lam)));
    }
    return concat_heads(g, out);
}

template <class T>
VarT<T> hcaa_attend(GraphT<T>& g, const FusionT<T>& own, const FusionT<T>& peer, VarT<T> own_x,
                    VarT<T> peer_x) {
    return own.wo(g, hcaa_attend_preproj(g, own, peer, own_x, peer_x));
}

// channelwise concatenation followed by a linear projection back to d
template <class T>
VarT<T> fuse_concat(GraphT<T>& g, const FusionT<T>& own, VarT<T> own_x, VarT<T> peer_x) {
    ensure_same_shape(own_x.val(), peer_x.val(), "fuse_concat");
    return own.cat_proj(g, concat_cols(own_x, peer_x));
}

// standard attention with Q from own, K and V from peer, residual-added to own
template <class T>
VarT<T> fuse_cross_attention(GraphT<T>& g, const FusionT<T>& own, VarT<T> own_x, VarT<T> peer_x) {
    ensure_same_shape(own_x.val(), peer_x.val(), "fuse_cross_attention");
    auto ctx = per_head_contexts(g, own.xq(g, own_x), own.xk(g, peer_x), own.xv(g, peer_x), own.heads);
    return add(own_x, own.xo(g, concat_heads(g, ctx)));
}

// single fusion interface used by the denoiser; peer features are expected
// to already carry stop_grad when decoupled optimization wants them inert
template <class T>
VarT<T> apply_fusion(GraphT<T>& g, const FusionT<T>& own, const FusionT<T>& peer, VarT<T> own_x,
                     VarT<T> peer_x) {
    switch (own.mode) {
        case FusionMode::none: return own_x;
        case FusionMode::hcaa: return hcaa_attend(g, own, peer, own_x, peer_x);
        case FusionMode::concat: return fuse_concat(g, own, own_x, peer_x);
        case FusionMode::cross_attention: return fuse_cross_attention(g, own, own_x, peer_x);
    }
    return own_x;
}

}  // namespace s2c
