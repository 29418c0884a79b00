#pragma once

// Bundles both streams' networks behind one parameter registry. Parameter
// names are stable across runs and are the checkpoint schema.

#include <cstdint>
#include <string>
#include <vector>

#include "s2c/networks.hpp"

namespace s2c {

struct ModelConfig {
    int feature_channels = 16;  // C of the incoming feature sequence
    RefinerConfig refiner;
    PredictorConfig predictor;
    DenoiserConfig denoiser;
    double lambda_init = 0.78;
    bool peer_stop_grad = true;

    void finalize() {
        refiner.in_channels = feature_channels;
        predictor.in_channels = feature_channels;
        denoiser.cond_channels = refiner.width + 6;
        denoiser.validate();
    }
};

template <class T>
struct StreamT {
    RefinerT<T> refiner;
    PositionPredictorT<T> predictor;
    DenoiserT<T> denoiser;
    std::vector<FusionT<T>> fusion;  // one per fused level, shallow to deep
};

template <class T>
struct ModelT {
    ModelConfig cfg;
    ParamStoreT<T> params;
    StreamT<T> left, right;

    // parameters owned by one stream's stage-2 optimizer
    std::vector<ParamPtr<T>> motion_params(Side s) const {
        std::vector<ParamPtr<T>> out;
        const std::string prefix = std::string(side_name(s)) + ".";
        for (const auto& p : params.items) {
            if (p->name.rfind(prefix, 0) == 0 && p->name.find(".pred.") == std::string::npos) {
                out.push_back(p);
            }
        }
        return out;
    }

    std::vector<ParamPtr<T>> predictor_params(Side s) const {
        std::vector<ParamPtr<T>> out;
        const std::string prefix = std::string(side_name(s)) + ".pred.";
        for (const auto& p : params.items) {
            if (p->name.rfind(prefix, 0) == 0) {
                out.push_back(p);
            }
        }
        return out;
    }

    const StreamT<T>& stream(Side s) const { return s == Side::left ? left : right; }
    StreamT<T>& stream(Side s) { return s == Side::left ? left : right; }
};

template <class T>
StreamT<T> make_stream(ParamStoreT<T>& store, const std::string& prefix, const ModelConfig& cfg,
                       RngStream& rng) {
    StreamT<T> s;
    s.refiner = RefinerT<T>::make(store, prefix + ".refiner", cfg.refiner, rng);
    s.predictor = PositionPredictorT<T>::make(store, prefix + ".pred", cfg.predictor, rng);
    s.denoiser = DenoiserT<T>::make(store, prefix + ".denoiser", cfg.denoiser, rng);
    for (int l = 0; l < cfg.denoiser.levels; ++l) {
        if (cfg.denoiser.level_fused(l)) {
            s.fusion.push_back(FusionT<T>::make(store, prefix + ".fusion" + std::to_string(l),
                                                cfg.denoiser.fusion_mode,
                                                cfg.denoiser.dims[static_cast<std::size_t>(l)],
                                                cfg.denoiser.heads, cfg.lambda_init, rng));
        }
    }
    return s;
}

template <class T>
ModelT<T> make_model(ModelConfig cfg, std::uint64_t seed) {
    cfg.finalize();
    ModelT<T> m;
    m.cfg = cfg;
    RngStream rng_l(seed, 101);
    RngStream rng_r(seed, 202);
    m.left = make_stream(m.params, "left", cfg, rng_l);
    m.right = make_stream(m.params, "right", cfg, rng_r);
    return m;
}

// FNV-1a over the raw parameter bytes; used to prove stage-1 weights stay
// frozen through stage 2
template <class T>
std::uint64_t params_checksum(const std::vector<ParamPtr<T>>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params) {
        for (T v : p->value.data) {
            const unsigned char* bytes = reinterpret_cast<const unsigned char*>(&v);
            for (std::size_t i = 0; i < sizeof(T); ++i) {
                h ^= bytes[i];
                h *= 1099511628211ULL;
            }
        }
    }
    return h;
}

}  // namespace s2c
