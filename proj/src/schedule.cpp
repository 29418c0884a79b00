#include "s2c/schedule.hpp"

#include <cmath>

namespace s2c {

DiffusionSchedule linear_schedule(int timesteps, double beta1, double beta_final) {
    if (timesteps < 1) {
        throw std::invalid_argument("linear_schedule: timesteps must be >= 1");
    }
    if (!(beta1 > 0.0) || !(beta1 <= beta_final) || !(beta_final < 1.0)) {
        throw std::invalid_argument("linear_schedule: need 0 < beta1 <= beta_final < 1");
    }
    DiffusionSchedule s;
    s.timesteps = timesteps;
    s.beta.resize(static_cast<std::size_t>(timesteps));
    s.alpha.resize(static_cast<std::size_t>(timesteps));
    s.alpha_bar.resize(static_cast<std::size_t>(timesteps));
    s.sigma.resize(static_cast<std::size_t>(timesteps));
    double prod = 1.0;
    for (int t = 1; t <= timesteps; ++t) {
        const double frac = (timesteps == 1) ? 0.0 : static_cast<double>(t - 1) / (timesteps - 1);
        const double b = beta1 + frac * (beta_final - beta1);
        const std::size_t i = static_cast<std::size_t>(t - 1);
        s.beta[i] = b;
        s.alpha[i] = 1.0 - b;
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
        s.sigma[i] = std::sqrt(1.0 - prod);
    }
    return s;
}

PosteriorCoeffs posterior_coeffs(int t, const DiffusionSchedule& sched) {
    sched.check_step(t, false);
    PosteriorCoeffs c;
    if (t == 1) {
        // abar_0 = 1 makes the final step deterministic: beta_1/(1 - abar_1)
        // is identically 1 but loses digits numerically, so pin it
        c.mean_x0 = 1.0;
        c.mean_xt = 0.0;
        c.variance = 0.0;
        c.log_var = std::log(1e-20);
        return c;
    }
    const double abar_t = sched.abar(t);
    const double abar_prev = sched.abar(t - 1);
    const double beta_t = sched.beta_at(t);
    const double alpha_t = sched.alpha_at(t);
    const double denom = 1.0 - abar_t;
    c.mean_x0 = beta_t * std::sqrt(abar_prev) / denom;
    c.mean_xt = (1.0 - abar_prev) * std::sqrt(alpha_t) / denom;
    c.variance = (1.0 - abar_prev) * beta_t / denom;
    // t=1 has zero posterior variance; the floor keeps log finite where a
    // value is required, and the sampler never adds noise at t=1
    c.log_var = std::log(std::max(c.variance, 1e-20));
    return c;
}

}  // namespace s2c
