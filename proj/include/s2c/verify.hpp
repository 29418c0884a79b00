#pragma once

// Fast invariant suite behind the `verify` CLI command: schedule identities,
// lambda contracts, gradient checks and metric closed forms. The schedule
// trio is injected through hooks so a deliberately broken implementation is
// reported by name (mutation canary in the tests).

#include <functional>
#include <ostream>

#include "s2c/schedule.hpp"

namespace s2c {

struct VerifyHooks {
    std::function<double(double x0, double eps, int t, const DiffusionSchedule&)> forward_sample;
    std::function<double(double x0, double eps, int t, const DiffusionSchedule&)> v_target;
    std::function<double(double xt, double v, int t, const DiffusionSchedule&)> recover_x0;

    VerifyHooks();
};

// runs every check, prints one stable line per check, returns failure count
int run_verify(std::ostream& out, const VerifyHooks& hooks = VerifyHooks());

}  // namespace s2c
