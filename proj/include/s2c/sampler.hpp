#pragma once

// Dual-stream coordinated reverse diffusion: from independent Gaussian
// noise (or one shared draw when decoupled noise is off) down to both
// hands' gesture sequences, exchanging stream features every step.

#include <functional>
#include <utility>

#include "s2c/model.hpp"
#include "s2c/rng.hpp"
#include "s2c/schedule.hpp"

namespace s2c {

template <class T>
struct SamplerStateT {
    TensorT<T> xt_l, xt_r;
    int t = 0;
    RngStream rng_l, rng_r;
};

// produces both streams' v predictions for the current step
template <class T>
using DualVFn =
    std::function<std::pair<TensorT<T>, TensorT<T>>(const TensorT<T>&, const TensorT<T>&, int)>;

template <class T>
SamplerStateT<T> init_sampler(const Shape& shape, const DiffusionSchedule& sched, RngStream rng_l,
                              RngStream rng_r, bool decoupled_noise) {
    SamplerStateT<T> st;
    st.t = sched.timesteps;
    st.rng_l = rng_l;
    st.rng_r = rng_r;
    st.xt_l = TensorT<T>(shape);
    st.rng_l.fill_normal(st.xt_l);
    if (decoupled_noise) {
        st.xt_r = TensorT<T>(shape);
        st.rng_r.fill_normal(st.xt_r);
    } else {
        st.xt_r = st.xt_l;
    }
    return st;
}

// one ancestral step for both streams; eps is forced to zero at t = 1
template <class T>
void reverse_step(SamplerStateT<T>& st, const TensorT<T>& v_l, const TensorT<T>& v_r,
                  const DiffusionSchedule& sched, bool decoupled_noise) {
    if (st.t < 1) {
        throw std::logic_error("reverse_step: step underflow");
    }
    const int t = st.t;
    auto advance = [&](TensorT<T>& xt, const TensorT<T>& v, RngStream& rng, const TensorT<T>* shared_eps) {
        TensorT<T> x0_hat = recover_x0(xt, v, t, sched);
        auto post = posterior_params(x0_hat, xt, t, sched);
        if (t > 1) {
            const T sd = static_cast<T>(std::exp(0.5 * post.log_var));
            if (shared_eps != nullptr) {
                for (std::size_t i = 0; i < post.mean.data.size(); ++i) {
                    post.mean.data[i] += sd * shared_eps->data[i];
                }
            } else {
                for (std::size_t i = 0; i < post.mean.data.size(); ++i) {
                    post.mean.data[i] += sd * static_cast<T>(rng.normal());
                }
            }
        }
        xt = std::move(post.mean);
    };
    if (decoupled_noise) {
        advance(st.xt_l, v_l, st.rng_l, nullptr);
        advance(st.xt_r, v_r, st.rng_r, nullptr);
    } else {
        TensorT<T> eps(st.xt_l.shape, T(0));
        if (t > 1) {
            st.rng_l.fill_normal(eps);
        }
        advance(st.xt_l, v_l, st.rng_l, &eps);
        advance(st.xt_r, v_r, st.rng_r, &eps);
    }
    st.t -= 1;
}

template <class T>
std::pair<TensorT<T>, TensorT<T>> reverse_diffuse(const Shape& shape, const DiffusionSchedule& sched,
                                                  const DualVFn<T>& v_fn, RngStream rng_l, RngStream rng_r,
                                                  bool decoupled_noise) {
    SamplerStateT<T> st = init_sampler<T>(shape, sched, rng_l, rng_r, decoupled_noise);
    while (st.t >= 1) {
        auto [v_l, v_r] = v_fn(st.xt_l, st.xt_r, st.t);
        reverse_step(st, v_l, v_r, sched, decoupled_noise);
    }
    return {std::move(st.xt_l), std::move(st.xt_r)};
}

template <class T>
struct MotionSample {
    TensorT<T> theta_l, theta_r;  // N x J x 3
};

// Algorithm: run the frozen position predictors and the refiners once,
// build each hand's conditioning, then iterate the coordinated reverse
// process with a feature exchange inside every denoiser call.
template <class T>
MotionSample<T> generate_motion(const ModelT<T>& model, const TensorT<T>& features,
                                const DiffusionSchedule& sched, std::uint64_t seed_l, std::uint64_t seed_r) {
    if (features.rank() != 2 || features.shape[1] != model.cfg.feature_channels) {
        throw std::invalid_argument("generate_motion: bad feature shape");
    }
    const int n = features.shape[0];
    const DenoiserConfig& dc = model.cfg.denoiser;

    // conditioning is constant across steps: positions from the frozen
    // stage-1 predictors, refined features from each stream's refiner
    TensorT<T> c_l, c_r;
    {
        GraphT<T> g(false);
        VarT<T> f = g.input(features);
        TensorT<T> p_l = model.left.predictor(g, f).val();
        TensorT<T> p_r = model.right.predictor(g, f).val();
        VarT<T> refined_l = model.left.refiner(g, f);
        VarT<T> refined_r = model.right.refiner(g, f);
        c_l = build_conditioning(g, refined_l, p_l, p_r, dc.position_sharing).val();
        c_r = build_conditioning(g, refined_r, p_r, p_l, dc.position_sharing).val();
    }

    DualVFn<T> v_fn = [&](const TensorT<T>& xl, const TensorT<T>& xr, int t) {
        GraphT<T> g(false);
        auto [vl, vr] = dual_denoise_forward(g, model.left.denoiser, model.right.denoiser,
                                             model.left.fusion, model.right.fusion, g.input(xl),
                                             g.input(xr), t, g.input(c_l), g.input(c_r),
                                             model.cfg.peer_stop_grad);
        return std::make_pair(vl.val(), vr.val());
    };

    auto [xl, xr] = reverse_diffuse<T>(Shape{n, dc.joints * 3}, sched, v_fn, RngStream(seed_l, 11),
                                       RngStream(seed_r, 22), dc.decoupled_noise);
    MotionSample<T> out;
    out.theta_l = TensorT<T>(Shape{n, dc.joints, 3}, std::move(xl.data));
    out.theta_r = TensorT<T>(Shape{n, dc.joints, 3}, std::move(xr.data));
    return out;
}

}  // namespace s2c
