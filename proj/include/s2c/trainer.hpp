#pragma once

// Two-stage optimization. Stage 1 fits the per-hand position predictors
// with mean-squared error; stage 2 trains the dual-stream v-prediction
// denoisers (plus refiners and fusion weights) with the summed per-hand
// loss, one Adam optimizer per stream. Batches fan out across workers with
// per-item graphs and merge gradients in item order, so loss curves are
// bitwise reproducible for any worker count.

#include <cstdint>
#include <string>
#include <vector>

#include "s2c/config.hpp"
#include "s2c/model.hpp"
#include "s2c/sampler.hpp"
#include "s2c/schedule.hpp"
#include "s2c/synthdata.hpp"

namespace s2c {

struct TrainConfig {
    std::string stage = "motion";
    int steps = 1500;
    int batch_size = 16;
    double learning_rate = 2.5e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 7;
    double grad_clip = 0.0;  // global-norm clip, 0 disables
    int workers = 1;

    void validate() const {
        if (learning_rate <= 0.0) {
            throw std::invalid_argument("learning_rate must be positive");
        }
        if (batch_size < 1 || steps < 1) {
            throw std::invalid_argument("batch_size and steps must be >= 1");
        }
    }
};

TrainConfig train_config_from(const RunConfig& cfg);

struct AdamState {
    std::vector<Tensor32> m, v;
    long long step = 0;
};

// standard bias-corrected Adam over one parameter group; gradients are
// zeroed afterwards and non-finite gradients abort
void adam_step(const std::vector<ParamPtr<float>>& params, AdamState& state, const TrainConfig& cfg);

struct LossRow {
    long long step = 0;
    std::string stage;
    double loss_l = 0;
    double loss_r = 0;
};

std::string loss_rows_to_csv(const std::vector<LossRow>& rows);

std::vector<LossRow> train_position_stage(ModelT<float>& model, const Dataset& ds, const TrainConfig& cfg);

std::vector<LossRow> train_motion_stage(ModelT<float>& model, const Dataset& ds,
                                        const DiffusionSchedule& sched, const TrainConfig& cfg);

// expected per-coordinate loss of a zero-output denoiser:
// mean over t of abar_t + sigma_t^2 * E[x0^2] on the train split
double zero_output_baseline(const Dataset& ds, const DiffusionSchedule& sched);

// deterministic per-(step, item) draw streams used by stage 2; exposed so
// tests can replay the exact noise the trainer saw
RngStream stage2_draw_stream(std::uint64_t seed, long long step, int item, int purpose);

// fixed draws for one stage-2 item: a shared t across hands, independent
// eps per hand unless the decoupled-noise ablation is off
template <class T>
struct Stage2DrawT {
    int t = 1;
    TensorT<T> eps_l, eps_r;
};

template <class T>
Stage2DrawT<T> stage2_draws(std::uint64_t seed, long long step, int item, const Shape& shape,
                            int timesteps, bool decoupled_noise) {
    Stage2DrawT<T> d;
    RngStream t_rng = stage2_draw_stream(seed, step, item, 0);
    d.t = 1 + static_cast<int>(t_rng.below(static_cast<std::uint64_t>(timesteps)));
    d.eps_l = TensorT<T>(shape);
    stage2_draw_stream(seed, step, item, 1).fill_normal(d.eps_l);
    if (decoupled_noise) {
        d.eps_r = TensorT<T>(shape);
        stage2_draw_stream(seed, step, item, 2).fill_normal(d.eps_r);
    } else {
        d.eps_r = d.eps_l;
    }
    return d;
}

// Per-item Eq-style v-prediction losses for both hands with fixed draws.
// One code path serves the trainer (float), the gradient checks (double)
// and the symmetry tests.
template <class T>
std::pair<VarT<T>, VarT<T>> stage2_item_losses(GraphT<T>& g, const ModelT<T>& model,
                                               const DiffusionSchedule& sched, const TensorT<T>& features,
                                               const TensorT<T>& pos_l, const TensorT<T>& pos_r,
                                               const TensorT<T>& gest_l_flat, const TensorT<T>& gest_r_flat,
                                               const Stage2DrawT<T>& draw) {
    const DenoiserConfig& dc = model.cfg.denoiser;
    const TensorT<T> xt_l = forward_sample(gest_l_flat, draw.t, draw.eps_l, sched);
    const TensorT<T> xt_r = forward_sample(gest_r_flat, draw.t, draw.eps_r, sched);
    const TensorT<T> vt_l = v_target(gest_l_flat, draw.eps_l, draw.t, sched);
    const TensorT<T> vt_r = v_target(gest_r_flat, draw.eps_r, draw.t, sched);
    VarT<T> f = g.input(features);
    VarT<T> c_l = build_conditioning(g, model.left.refiner(g, f), pos_l, pos_r, dc.position_sharing);
    VarT<T> c_r = build_conditioning(g, model.right.refiner(g, f), pos_r, pos_l, dc.position_sharing);
    auto [v_l, v_r] =
        dual_denoise_forward(g, model.left.denoiser, model.right.denoiser, model.left.fusion,
                             model.right.fusion, g.input(xt_l), g.input(xt_r), draw.t, c_l, c_r,
                             model.cfg.peer_stop_grad);
    return {mse(v_l, g.input(vt_l)), mse(v_r, g.input(vt_r))};
}

// checkpoints: one named tensor per parameter
void save_checkpoint(const ModelT<float>& model, const std::string& path, bool predictors_only);
void load_checkpoint(ModelT<float>& model, const std::string& path, bool predictors_only);

}  // namespace s2c
