#pragma once

// Closed-form diffusion mathematics: the linear noise schedule, the forward
// marginal, the v target, x0 recovery and the reverse-posterior parameters.
// Tables are kept in double; tensor-valued helpers work at either precision.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "s2c/tensor.hpp"

namespace s2c {

struct DiffusionSchedule {
    int timesteps = 0;
    std::vector<double> beta;       // beta[t-1] for t in [1..T]
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // prod_{s<=t} alpha
    std::vector<double> sigma;      // sqrt(1 - alpha_bar)

    // alpha_bar with the t=0 convention alpha_bar_0 = 1, which makes the
    // final reverse step deterministic
    double abar(int t) const {
        check_step(t, true);
        return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)];
    }
    double beta_at(int t) const {
        check_step(t, false);
        return beta[static_cast<std::size_t>(t - 1)];
    }
    double alpha_at(int t) const {
        check_step(t, false);
        return alpha[static_cast<std::size_t>(t - 1)];
    }
    double sigma_at(int t) const {
        check_step(t, false);
        return sigma[static_cast<std::size_t>(t - 1)];
    }

    void check_step(int t, bool allow_zero) const {
        const int lo = allow_zero ? 0 : 1;
        if (t < lo || t > timesteps) {
            throw std::out_of_range("diffusion step out of range");
        }
    }
};

DiffusionSchedule linear_schedule(int timesteps, double beta1, double beta_final);

struct PosteriorCoeffs {
    double mean_x0;   // beta_t sqrt(abar_{t-1}) / (1 - abar_t)
    double mean_xt;   // (1 - abar_{t-1}) sqrt(alpha_t) / (1 - abar_t)
    double log_var;   // log((1 - abar_{t-1}) beta_t / (1 - abar_t)), floored at t=1
    double variance;  // exact posterior variance (0 at t=1)
};

PosteriorCoeffs posterior_coeffs(int t, const DiffusionSchedule& sched);

// x_t = sqrt(abar_t) x0 + eps sqrt(1 - abar_t)
template <class T>
TensorT<T> forward_sample(const TensorT<T>& x0, int t, const TensorT<T>& eps, const DiffusionSchedule& sched) {
    ensure_same_shape(x0, eps, "forward_sample");
    sched.check_step(t, false);
    const double a = std::sqrt(sched.abar(t));
    const double s = sched.sigma_at(t);
    TensorT<T> out(x0.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<T>(a * x0.data[i] + s * eps.data[i]);
    }
    ensure_finite(out, "forward_sample");
    return out;
}

// v = sqrt(abar_t) eps - sigma_t x0
template <class T>
TensorT<T> v_target(const TensorT<T>& x0, const TensorT<T>& eps, int t, const DiffusionSchedule& sched) {
    ensure_same_shape(x0, eps, "v_target");
    sched.check_step(t, false);
    const double a = std::sqrt(sched.abar(t));
    const double s = sched.sigma_at(t);
    TensorT<T> out(x0.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<T>(a * eps.data[i] - s * x0.data[i]);
    }
    ensure_finite(out, "v_target");
    return out;
}

// x0_hat = sqrt(abar_t) x_t - sigma_t v; exact inverse of the pair above
// because abar_t + sigma_t^2 = 1
template <class T>
TensorT<T> recover_x0(const TensorT<T>& xt, const TensorT<T>& v, int t, const DiffusionSchedule& sched) {
    ensure_same_shape(xt, v, "recover_x0");
    sched.check_step(t, false);
    const double a = std::sqrt(sched.abar(t));
    const double s = sched.sigma_at(t);
    TensorT<T> out(xt.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<T>(a * xt.data[i] - s * v.data[i]);
    }
    ensure_finite(out, "recover_x0");
    return out;
}

template <class T>
struct PosteriorParamsT {
    TensorT<T> mean;
    double log_var;
};

template <class T>
PosteriorParamsT<T> posterior_params(const TensorT<T>& x0_hat, const TensorT<T>& xt, int t,
                                     const DiffusionSchedule& sched) {
    ensure_same_shape(x0_hat, xt, "posterior_params");
    const PosteriorCoeffs c = posterior_coeffs(t, sched);
    TensorT<T> mean(xt.shape);
    for (std::size_t i = 0; i < mean.data.size(); ++i) {
        mean.data[i] = static_cast<T>(c.mean_x0 * x0_hat.data[i] + c.mean_xt * xt.data[i]);
    }
    ensure_finite(mean, "posterior_params");
    return PosteriorParamsT<T>{std::move(mean), c.log_var};
}

}  // namespace s2c
