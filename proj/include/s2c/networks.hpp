#pragma once

// The three trainable function families: per-hand audio refiners, per-hand
// position predictors, and the dual-stream U-Net denoisers whose post-MHSA
// features are the cross-stream fusion point.

#include <optional>
#include <string>
#include <vector>

#include "s2c/autodiff.hpp"
#include "s2c/hcaa.hpp"
#include "s2c/nn.hpp"

namespace s2c {

struct RefinerConfig {
    int in_channels = 16;
    int width = 16;
    int layers = 2;
    int heads = 2;
    int ffn_mult = 2;
};

struct PredictorConfig {
    int in_channels = 16;
    int width = 32;
    int kernel = 5;
};

struct DenoiserConfig {
    int levels = 2;
    std::vector<int> dims = {32, 64};
    int heads = 2;
    FusionMode fusion_mode = FusionMode::hcaa;
    bool position_sharing = true;
    bool decoupled_noise = true;
    bool fuse_all_levels = false;
    int time_dim = 32;
    int joints = 6;
    int kernel = 5;
    int cond_channels = 22;  // refiner width + own/other wrist positions

    void validate() const {
        if (levels < 1 || static_cast<int>(dims.size()) != levels) {
            throw std::invalid_argument("denoiser: dims must list one width per level");
        }
        for (int l = 0; l < levels; ++l) {
            if (dims[static_cast<std::size_t>(l)] <= 0) {
                throw std::invalid_argument("denoiser: widths must be positive");
            }
            if (l > 0 && dims[static_cast<std::size_t>(l)] <= dims[static_cast<std::size_t>(l - 1)]) {
                throw std::invalid_argument("denoiser: dims must be strictly increasing with depth");
            }
            if (dims[static_cast<std::size_t>(l)] % heads != 0) {
                throw std::invalid_argument("denoiser: heads must divide every attention width");
            }
        }
        if (time_dim < 2 || time_dim % 2 != 0) {
            throw std::invalid_argument("denoiser: time_dim must be even");
        }
        if (joints < 1) {
            throw std::invalid_argument("denoiser: joints must be positive");
        }
    }

    bool level_fused(int level) const {
        if (fusion_mode == FusionMode::none) {
            return false;
        }
        return fuse_all_levels || level == levels - 1;
    }

    // minimum frame count: every downsample halves the frame axis
    int frame_multiple() const { return 1 << (levels - 1); }
};

// --- audio refiner -----------------------------------------------------------

// Encoder-only transformer; with zero-initialized block output projections
// the initial forward equals the embedding branch.
template <class T>
struct RefinerT {
    struct Layer {
        LayerNormT<T> ln1;
        MhsaT<T> att;
        LayerNormT<T> ln2;
        FfnT<T> ffn;
    };
    LinearT<T> embed;
    std::vector<Layer> layers;

    static RefinerT make(ParamStoreT<T>& store, const std::string& name, const RefinerConfig& cfg,
                         RngStream& rng) {
        RefinerT r;
        r.embed = LinearT<T>::make(store, name + ".embed", cfg.in_channels, cfg.width, rng);
        for (int i = 0; i < cfg.layers; ++i) {
            const std::string ln = name + ".layer" + std::to_string(i);
            Layer l;
            l.ln1 = LayerNormT<T>::make(store, ln + ".ln1", cfg.width);
            l.att = MhsaT<T>::make(store, ln + ".att", cfg.width, cfg.heads, rng);
            l.ln2 = LayerNormT<T>::make(store, ln + ".ln2", cfg.width);
            l.ffn = FfnT<T>::make(store, ln + ".ffn", cfg.width, cfg.width * cfg.ffn_mult, rng);
            r.layers.push_back(std::move(l));
        }
        return r;
    }

    VarT<T> operator()(GraphT<T>& g, VarT<T> features) const {
        VarT<T> h = embed(g, features);
        for (const auto& l : layers) {
            h = add(h, l.att(g, l.ln1(g, h)));
            h = add(h, l.ffn(g, l.ln2(g, h)));
        }
        return h;
    }
};

// --- position predictor --------------------------------------------------------

// 1-D conv encoder (3 layers, stride 1, replicate padding keeps constant
// inputs constant) plus a per-frame linear head. The head starts at zero so
// an untrained predictor outputs the origin.
template <class T>
struct PositionPredictorT {
    Conv1dT<T> c1, c2, c3;
    LinearT<T> head;

    static PositionPredictorT make(ParamStoreT<T>& store, const std::string& name,
                                   const PredictorConfig& cfg, RngStream& rng) {
        PositionPredictorT p;
        p.c1 = Conv1dT<T>::make(store, name + ".c1", cfg.kernel, cfg.in_channels, cfg.width, rng);
        p.c2 = Conv1dT<T>::make(store, name + ".c2", cfg.kernel, cfg.width, cfg.width, rng);
        p.c3 = Conv1dT<T>::make(store, name + ".c3", cfg.kernel, cfg.width, cfg.width, rng);
        p.head = LinearT<T>::make(store, name + ".head", cfg.width, 3, rng, /*zero_init=*/true);
        return p;
    }

    VarT<T> operator()(GraphT<T>& g, VarT<T> features) const {
        VarT<T> h = gelu(c1(g, features));
        h = gelu(c2(g, h));
        h = gelu(c3(g, h));
        return head(g, h);
    }
};

// --- denoiser --------------------------------------------------------------------

// U-Net over the frame axis. Per encoder level: conditioning concat, conv
// block with the timestep embedding, residual MHSA (the fusion point), conv
// block, then a stride-2 downsample. The decoder mirrors with repeat
// upsampling and skip concatenation; the head is zero-initialized so an
// untrained denoiser predicts v = 0.
template <class T>
struct DenoiserT {
    struct Level {
        LinearT<T> t_proj;
        Conv1dT<T> conv_in;
        LayerNormT<T> ln_in;
        MhsaT<T> att;
        Conv1dT<T> conv_out;
        LayerNormT<T> ln_out;
        Conv1dT<T> down;  // absent on the deepest level
    };
    struct Dec {
        Conv1dT<T> up;
        Conv1dT<T> conv;
        LayerNormT<T> ln;
    };

    DenoiserConfig cfg;
    LinearT<T> time1, time2;
    std::vector<Level> enc;
    std::vector<Dec> dec;  // index l in [0 .. levels-2]
    LinearT<T> head;

    static DenoiserT make(ParamStoreT<T>& store, const std::string& name, const DenoiserConfig& cfg,
                          RngStream& rng) {
        cfg.validate();
        DenoiserT d;
        d.cfg = cfg;
        d.time1 = LinearT<T>::make(store, name + ".time1", cfg.time_dim, cfg.time_dim, rng);
        d.time2 = LinearT<T>::make(store, name + ".time2", cfg.time_dim, cfg.time_dim, rng);
        const int x_ch = cfg.joints * 3;
        for (int l = 0; l < cfg.levels; ++l) {
            const std::string ln = name + ".enc" + std::to_string(l);
            const int width = cfg.dims[static_cast<std::size_t>(l)];
            // the downsample below level l-1 already widened to dims[l]
            const int in_ch = (l == 0 ? x_ch : cfg.dims[static_cast<std::size_t>(l)]) + cfg.cond_channels;
            Level lev;
            lev.t_proj = LinearT<T>::make(store, ln + ".t", cfg.time_dim, width, rng);
            lev.conv_in = Conv1dT<T>::make(store, ln + ".conv-in", cfg.kernel, in_ch, width, rng);
            lev.ln_in = LayerNormT<T>::make(store, ln + ".ln-in", width);
            lev.att = MhsaT<T>::make(store, ln + ".att", width, cfg.heads, rng);
            lev.conv_out = Conv1dT<T>::make(store, ln + ".conv-out", cfg.kernel, width, width, rng);
            lev.ln_out = LayerNormT<T>::make(store, ln + ".ln-out", width);
            if (l + 1 < cfg.levels) {
                lev.down = Conv1dT<T>::make(store, ln + ".down", cfg.kernel, width,
                                            cfg.dims[static_cast<std::size_t>(l + 1)], rng, /*stride=*/2);
            }
            d.enc.push_back(std::move(lev));
        }
        for (int l = 0; l + 1 < cfg.levels; ++l) {
            const std::string ln = name + ".dec" + std::to_string(l);
            const int width = cfg.dims[static_cast<std::size_t>(l)];
            Dec dl;
            dl.up = Conv1dT<T>::make(store, ln + ".up", cfg.kernel,
                                     cfg.dims[static_cast<std::size_t>(l + 1)], width, rng);
            dl.conv = Conv1dT<T>::make(store, ln + ".conv", cfg.kernel, 2 * width, width, rng);
            dl.ln = LayerNormT<T>::make(store, ln + ".ln", width);
            d.dec.push_back(std::move(dl));
        }
        d.head = LinearT<T>::make(store, name + ".head", cfg.dims[0], x_ch, rng, /*zero_init=*/true);
        return d;
    }

    // exact frame-axis receptive radius with attention masked out, via
    // interval propagation of an input impulse through the conv stack
    int receptive_radius() const {
        const int half = cfg.kernel / 2;
        struct Interval {
            long long lo = 0, hi = 0;
            static long long floor_div2(long long x) { return x >= 0 ? x / 2 : -((-x + 1) / 2); }
            static long long ceil_div2(long long x) { return x >= 0 ? (x + 1) / 2 : -((-x) / 2); }
            void conv(int h) {
                lo -= h;
                hi += h;
            }
            void down(int h) {
                // stride-2 conv: output o reads inputs [2o - h, 2o + h]
                lo = ceil_div2(lo - h);
                hi = floor_div2(hi + h);
            }
            void up() {
                lo = 2 * lo;
                hi = 2 * hi + 1;
            }
        };
        Interval r;
        std::vector<Interval> skips;
        for (int l = 0; l < cfg.levels; ++l) {
            r.conv(half);  // conv_in
            r.conv(half);  // conv_out
            skips.push_back(r);
            if (l + 1 < cfg.levels) {
                r.down(half);
            }
        }
        for (int l = cfg.levels - 2; l >= 0; --l) {
            r.up();
            r.conv(half);  // up conv
            r.lo = std::min(r.lo, skips[static_cast<std::size_t>(l)].lo);
            r.hi = std::max(r.hi, skips[static_cast<std::size_t>(l)].hi);
            r.conv(half);  // decoder conv
        }
        return static_cast<int>(std::max(-r.lo, r.hi));
    }

    VarT<T> time_embedding(GraphT<T>& g, int t) const {
        VarT<T> emb = g.input(TensorT<T>(Shape{1, cfg.time_dim}, sinusoidal_embedding<T>(t, cfg.time_dim).data));
        return time2(g, gelu(time1(g, emb)));
    }
};

// intermediate state of one stream's forward pass, paused at a fusion point
template <class T>
struct DenoiserCursor {
    VarT<T> h;                       // current features
    VarT<T> temb;                    // 1 x time_dim after the MLP
    std::vector<VarT<T>> c_levels;   // conditioning pooled per level
    std::vector<VarT<T>> skips;      // post conv_out features per level
    int level = 0;                   // encoder level about to run or paused at
};

namespace denoiser_detail {

// run one encoder level up to its post-MHSA features (the fusion point)
template <class T>
VarT<T> level_to_attention(GraphT<T>& g, const DenoiserT<T>& net, DenoiserCursor<T>& cur) {
    const auto& lev = net.enc[static_cast<std::size_t>(cur.level)];
    VarT<T> h = concat_cols(cur.h, cur.c_levels[static_cast<std::size_t>(cur.level)]);
    h = lev.conv_in(g, h);
    h = add_rowvec(h, reshape(lev.t_proj(g, cur.temb), Shape{h.val().cols()}));
    h = gelu(lev.ln_in(g, h));
    return add(h, lev.att(g, h));  // residual MHSA; these are the exported features
}

// finish the level from (possibly fused) post-MHSA features and advance
template <class T>
void level_from_attention(GraphT<T>& g, const DenoiserT<T>& net, DenoiserCursor<T>& cur, VarT<T> fused) {
    const auto& lev = net.enc[static_cast<std::size_t>(cur.level)];
    VarT<T> h = gelu(lev.ln_out(g, lev.conv_out(g, fused)));
    cur.skips.push_back(h);
    if (cur.level + 1 < net.cfg.levels) {
        h = lev.down(g, h);
    }
    cur.h = h;
    cur.level += 1;
}

template <class T>
VarT<T> run_decoder_and_head(GraphT<T>& g, const DenoiserT<T>& net, DenoiserCursor<T>& cur) {
    VarT<T> h = cur.h;
    for (int l = net.cfg.levels - 2; l >= 0; --l) {
        const auto& dl = net.dec[static_cast<std::size_t>(l)];
        h = dl.up(g, upsample2_rows(h));
        h = concat_cols(h, cur.skips[static_cast<std::size_t>(l)]);
        h = gelu(dl.ln(g, dl.conv(g, h)));
    }
    return net.head(g, h);
}

template <class T>
DenoiserCursor<T> start_forward(GraphT<T>& g, const DenoiserT<T>& net, VarT<T> x_flat, int t, VarT<T> c) {
    if (c.val().rows() != x_flat.val().rows()) {
        throw std::invalid_argument("denoise_forward: conditioning frame count must match x");
    }
    if (x_flat.val().rows() % net.cfg.frame_multiple() != 0) {
        throw std::invalid_argument("denoise_forward: frame count must be divisible by 2^(levels-1)");
    }
    DenoiserCursor<T> cur;
    cur.h = x_flat;
    cur.temb = net.time_embedding(g, t);
    cur.c_levels.push_back(c);
    for (int l = 1; l < net.cfg.levels; ++l) {
        cur.c_levels.push_back(avgpool2_rows(cur.c_levels.back()));
    }
    return cur;
}

}  // namespace denoiser_detail

// Single-stream forward with externally supplied peer features at the
// designated (deepest) fusion point. Returns the v prediction and the
// pre-fusion exported features.
template <class T>
struct DenoiseResult {
    VarT<T> v;
    StreamFeaturesT<T> features;
};

template <class T>
DenoiseResult<T> denoise_forward(GraphT<T>& g, const DenoiserT<T>& net, const FusionT<T>* own_fusion,
                                 const FusionT<T>* peer_fusion, VarT<T> x_flat, int t, VarT<T> c, Side hand,
                                 std::optional<StreamFeaturesT<T>> peer_features) {
    using namespace denoiser_detail;
    if (net.cfg.fuse_all_levels && net.cfg.fusion_mode != FusionMode::none) {
        throw std::invalid_argument("denoise_forward: all-level fusion requires the paired forward");
    }
    const bool wants_peer = net.cfg.fusion_mode != FusionMode::none;
    if (wants_peer && !peer_features.has_value()) {
        throw std::invalid_argument("denoise_forward: fusion mode requires peer features");
    }
    DenoiserCursor<T> cur = start_forward(g, net, x_flat, t, c);
    StreamFeaturesT<T> exported;
    exported.hand = hand;
    for (int l = 0; l < net.cfg.levels; ++l) {
        VarT<T> att = level_to_attention(g, net, cur);
        if (l == net.cfg.levels - 1) {
            exported.values = att;
            if (wants_peer) {
                att = apply_fusion(g, *own_fusion, *peer_fusion, att, peer_features->values);
            }
        }
        level_from_attention(g, net, cur, att);
    }
    VarT<T> v = run_decoder_and_head(g, net, cur);
    return DenoiseResult<T>{v, exported};
}

// Pre-fusion exported features of one stream (encoder run to the deepest
// post-MHSA point). This is what a peer consumes at the exchange.
template <class T>
StreamFeaturesT<T> denoiser_features(GraphT<T>& g, const DenoiserT<T>& net, VarT<T> x_flat, int t,
                                     VarT<T> c, Side hand) {
    using namespace denoiser_detail;
    DenoiserCursor<T> cur = start_forward(g, net, x_flat, t, c);
    VarT<T> att;
    for (int l = 0; l < net.cfg.levels; ++l) {
        att = level_to_attention(g, net, cur);
        if (l + 1 < net.cfg.levels) {
            level_from_attention(g, net, cur, att);
        }
    }
    return StreamFeaturesT<T>{att, hand};
}

// Paired forward for both streams with lockstep exchanges at every fused
// level. Peer features cross with stop_grad when peer_stop_grad is set, so
// each stream's optimizer only sees its own parameters.
template <class T>
std::pair<VarT<T>, VarT<T>> dual_denoise_forward(GraphT<T>& g, const DenoiserT<T>& net_l,
                                                 const DenoiserT<T>& net_r,
                                                 const std::vector<FusionT<T>>& fus_l,
                                                 const std::vector<FusionT<T>>& fus_r, VarT<T> xl,
                                                 VarT<T> xr, int t, VarT<T> cl, VarT<T> cr,
                                                 bool peer_stop_grad) {
    using namespace denoiser_detail;
    if (net_l.cfg.levels != net_r.cfg.levels) {
        throw std::invalid_argument("dual_denoise_forward: mismatched stream depths");
    }
    DenoiserCursor<T> cur_l = start_forward(g, net_l, xl, t, cl);
    DenoiserCursor<T> cur_r = start_forward(g, net_r, xr, t, cr);
    std::size_t fuse_idx = 0;
    for (int l = 0; l < net_l.cfg.levels; ++l) {
        VarT<T> att_l = level_to_attention(g, net_l, cur_l);
        VarT<T> att_r = level_to_attention(g, net_r, cur_r);
        if (net_l.cfg.level_fused(l)) {
            VarT<T> peer_for_l = peer_stop_grad ? stop_grad(att_r) : att_r;
            VarT<T> peer_for_r = peer_stop_grad ? stop_grad(att_l) : att_l;
            const FusionT<T>& fl = fus_l[fuse_idx];
            const FusionT<T>& fr = fus_r[fuse_idx];
            VarT<T> fused_l = apply_fusion(g, fl, fr, att_l, peer_for_l);
            VarT<T> fused_r = apply_fusion(g, fr, fl, att_r, peer_for_r);
            att_l = fused_l;
            att_r = fused_r;
            ++fuse_idx;
        }
        level_from_attention(g, net_l, cur_l, att_l);
        level_from_attention(g, net_r, cur_r, att_r);
    }
    VarT<T> v_l = run_decoder_and_head(g, net_l, cur_l);
    VarT<T> v_r = run_decoder_and_head(g, net_r, cur_r);
    return {v_l, v_r};
}

// conditioning tensor c = [refined features, own positions, other positions];
// the other hand's channels are zeroed when position sharing is off
template <class T>
VarT<T> build_conditioning(GraphT<T>& g, VarT<T> refined, const TensorT<T>& p_own, const TensorT<T>& p_other,
                           bool position_sharing) {
    const int n = refined.val().rows();
    if (p_own.rows() != n || p_other.rows() != n) {
        throw std::invalid_argument("build_conditioning: frame count mismatch");
    }
    VarT<T> own = g.input(p_own);
    VarT<T> other = position_sharing ? g.input(p_other) : g.input(TensorT<T>(p_other.shape, T(0)));
    return concat_cols(concat_cols(refined, own), other);
}

}  // namespace s2c
