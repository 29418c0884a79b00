#include "s2c/verify.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "s2c/hcaa.hpp"
#include "s2c/metrics.hpp"
#include "s2c/model.hpp"
#include "s2c/trainer.hpp"

namespace s2c {

namespace {

double scalar_apply(const TensorT<double>& t) { return t.data[0]; }

}  // namespace

VerifyHooks::VerifyHooks() {
    forward_sample = [](double x0, double eps, int t, const DiffusionSchedule& s) {
        return scalar_apply(s2c::forward_sample(TensorT<double>(Shape{1}, {x0}), t,
                                                TensorT<double>(Shape{1}, {eps}), s));
    };
    v_target = [](double x0, double eps, int t, const DiffusionSchedule& s) {
        return scalar_apply(s2c::v_target(TensorT<double>(Shape{1}, {x0}),
                                          TensorT<double>(Shape{1}, {eps}), t, s));
    };
    recover_x0 = [](double xt, double v, int t, const DiffusionSchedule& s) {
        return scalar_apply(s2c::recover_x0(TensorT<double>(Shape{1}, {xt}),
                                            TensorT<double>(Shape{1}, {v}), t, s));
    };
}

namespace {

using CheckFn = std::function<std::optional<std::string>()>;

std::optional<std::string> check_schedule_roundtrip(const VerifyHooks& hooks) {
    const DiffusionSchedule s = linear_schedule(1000, 1e-4, 0.02);
    RngStream rng(101, 1);
    double worst = 0;
    for (int i = 0; i < 2000; ++i) {
        const int t = 1 + static_cast<int>(rng.below(1000));
        const double x0 = rng.u01() * 4 - 2;
        const double eps = rng.normal();
        const double xt = hooks.forward_sample(x0, eps, t, s);
        const double v = hooks.v_target(x0, eps, t, s);
        const double rec = hooks.recover_x0(xt, v, t, s);
        worst = std::max(worst, std::abs(rec - x0));
    }
    if (worst > 1e-12) {
        std::ostringstream os;
        os << "max |recover_x0 - x0| = " << worst << " exceeds 1e-12";
        return os.str();
    }
    return std::nullopt;
}

std::optional<std::string> check_schedule_tables() {
    const DiffusionSchedule s = linear_schedule(1000, 1e-4, 0.02);
    for (int t = 1; t <= 1000; ++t) {
        if (t > 1 && !(s.abar(t) < s.abar(t - 1))) {
            return "alpha_bar is not strictly decreasing";
        }
        const PosteriorCoeffs c = posterior_coeffs(t, s);
        if (c.variance < 0 || c.variance > s.beta_at(t) + 1e-15) {
            return "posterior variance escaped [0, beta_t]";
        }
    }
    if (std::abs(posterior_coeffs(1, s).mean_x0 - 1.0) > 0 || posterior_coeffs(1, s).mean_xt != 0.0) {
        return "t=1 posterior mean is not exactly x0_hat";
    }
    return std::nullopt;
}

std::optional<std::string> check_lambda_init() {
    ParamStoreT<double> store;
    RngStream rng(3, 3);
    FusionT<double> f = FusionT<double>::make(store, "v", FusionMode::hcaa, 8, 4, 0.78, rng);
    for (const auto& lam : f.lam) {
        if (compute_lambda(lam) != 0.78) {
            return "zero-initialized lambda is not exactly lambda_init";
        }
    }
    return std::nullopt;
}

std::optional<std::string> check_hcaa_cancellation() {
    ParamStoreT<double> store;
    RngStream rng(4, 4);
    FusionT<double> own = FusionT<double>::make(store, "own", FusionMode::hcaa, 8, 2, 0.5, rng);
    FusionT<double> peer = FusionT<double>::make(store, "peer", FusionMode::hcaa, 8, 2, 0.5, rng);
    peer.wq.w->value = own.wq.w->value;
    peer.wk.w->value = own.wk.w->value;
    peer.wv.w->value = own.wv.w->value;
    for (auto& lam : own.lam) {
        lam.l1q->value.data[0] = 1.0;
        lam.l1k->value.data[0] = std::log(1.0 + 1.0 - lam.lambda_init);  // lambda = 1
    }
    GraphT<double> g(false);
    TensorT<double> x(Shape{6, 8});
    rng.fill_uniform(x, -1, 1);
    VarT<double> pre = hcaa_attend_preproj(g, own, peer, g.input(x), g.input(x));
    double mx = 0;
    for (double v : pre.val().data) {
        mx = std::max(mx, std::abs(v));
    }
    if (mx >= 1e-6) {
        std::ostringstream os;
        os << "common-mode residue " << mx << " >= 1e-6";
        return os.str();
    }
    return std::nullopt;
}

std::optional<std::string> check_hcaa_lambda_zero() {
    ParamStoreT<double> store;
    RngStream rng(5, 5);
    FusionT<double> own = FusionT<double>::make(store, "own", FusionMode::hcaa, 6, 2, 0.0, rng);
    FusionT<double> peer = FusionT<double>::make(store, "peer", FusionMode::hcaa, 6, 2, 0.0, rng);
    GraphT<double> g(false);
    TensorT<double> x(Shape{5, 6}), y(Shape{5, 6});
    rng.fill_uniform(x, -1, 1);
    rng.fill_uniform(y, -1, 1);
    VarT<double> xin = g.input(x);
    VarT<double> fused = hcaa_attend(g, own, peer, xin, g.input(y));
    auto ctx = per_head_contexts(g, own.wq(g, xin), own.wk(g, xin), own.wv(g, xin), own.heads);
    VarT<double> ref = own.wo(g, concat_heads(g, ctx));
    for (std::size_t i = 0; i < ref.val().data.size(); ++i) {
        if (fused.val().data[i] != ref.val().data[i]) {
            return "lambda = 0 does not reduce to self-attention elementwise";
        }
    }
    return std::nullopt;
}

std::optional<std::string> check_gradient_primitives() {
    ParamStoreT<double> store;
    RngStream rng(6, 6);
    auto a = store.add("a", TensorT<double>(Shape{4, 5}));
    auto b = store.add("b", TensorT<double>(Shape{5, 3}));
    rng.fill_uniform(a->value, -1, 1);
    rng.fill_uniform(b->value, -1, 1);
    const double err = grad_check({a, b},
                                  [&](GraphT<double>& g) {
                                      VarT<double> h = gelu(matmul(g.param(a), g.param(b)));
                                      return mean_all(mul(softmax_lastdim(h), h));
                                  },
                                  1e-5, 20, rng);
    if (err >= 1e-5) {
        std::ostringstream os;
        os << "primitive gradient error " << err << " >= 1e-5";
        return os.str();
    }
    return std::nullopt;
}

std::optional<std::string> check_gradient_stage2() {
    ModelConfig mc;
    mc.feature_channels = 4;
    mc.refiner.width = 4;
    mc.refiner.layers = 1;
    mc.refiner.heads = 2;
    mc.predictor.width = 4;
    mc.denoiser.levels = 1;
    mc.denoiser.dims = {6};
    mc.denoiser.heads = 2;
    mc.denoiser.joints = 2;
    mc.denoiser.time_dim = 8;
    mc.denoiser.fusion_mode = FusionMode::hcaa;
    mc.peer_stop_grad = false;
    mc.finalize();
    ModelT<double> m = make_model<double>(mc, 6);
    RngStream nudge(7, 1);
    for (auto& prm : m.params.items) {
        bool all_zero = true;
        for (double v : prm->value.data) {
            all_zero = all_zero && v == 0.0;
        }
        if (all_zero && prm->value.numel() > 2) {
            nudge.fill_uniform(prm->value, -0.2, 0.2);
        }
    }
    RngStream rng(8, 1);
    TensorT<double> features(Shape{4, 4});
    rng.fill_uniform(features, 0, 1);
    TensorT<double> pos_l(Shape{4, 3}), pos_r(Shape{4, 3});
    rng.fill_uniform(pos_l, -1, 1);
    rng.fill_uniform(pos_r, -1, 1);
    TensorT<double> gl(Shape{4, 6}), gr(Shape{4, 6});
    rng.fill_uniform(gl, -0.5, 0.5);
    rng.fill_uniform(gr, -0.5, 0.5);
    const DiffusionSchedule sched = linear_schedule(20, 1e-4, 0.02);
    const Stage2DrawT<double> draw = stage2_draws<double>(3, 0, 0, gl.shape, sched.timesteps, true);
    std::vector<ParamPtr<double>> params;
    for (Side s : {Side::left, Side::right}) {
        for (const auto& prm : m.motion_params(s)) {
            params.push_back(prm);
        }
    }
    const double err = grad_check(params,
                                  [&](GraphT<double>& g) {
                                      auto [ll, lr] = stage2_item_losses(g, m, sched, features, pos_l,
                                                                         pos_r, gl, gr, draw);
                                      return add(ll, lr);
                                  },
                                  1e-5, 2, rng);
    if (err >= 1e-4) {
        std::ostringstream os;
        os << "stage-2 gradient error " << err << " >= 1e-4";
        return os.str();
    }
    return std::nullopt;
}

std::optional<std::string> check_metric_closed_forms() {
    GaussianStats a, b;
    a.dim = b.dim = 1;
    a.mean = {0.0};
    a.cov = {1.0};
    b.mean = {1.0};
    b.cov = {1.0};
    if (std::abs(frechet_distance(a, b) - 1.0) > 1e-9) {
        return "frechet 1-D closed form failed";
    }
    const double w2 = gaussian_w2sq_diag({0.0}, {1.0}, {1.0}, {4.0});
    if (std::abs(w2 - (1.0 + 1.0)) > 1e-12) {
        return "diagonal W2^2 closed form failed";
    }
    const double ot = transport_cost({0.7, 0.3}, {0.3, 0.7}, {0.0, 100.0, 100.0, 0.0});
    if (std::abs(ot - 40.0) > 1e-9) {
        return "hand-solvable transport plan failed";
    }
    Tensor32 frozen(Shape{8, 1, 3}, 0.1f);
    Tensor32 moving(Shape{8, 1, 3});
    for (int t = 0; t < 8; ++t) {
        for (int k = 0; k < 3; ++k) {
            moving.data[static_cast<std::size_t>(t) * 3 + k] = static_cast<float>(std::sin(0.9 * t + k));
        }
    }
    if (smoothness(frozen, moving) != 1.0) {
        return "static-vs-moving smoothness is not exactly 1";
    }
    return std::nullopt;
}

std::optional<std::string> check_rng_streams() {
    RngStream a(7, 1), b(7, 2);
    const int n = 100000;
    double sab = 0, saa = 0, sbb = 0, sa = 0, sb = 0;
    for (int i = 0; i < n; ++i) {
        const double x = a.normal();
        const double y = b.normal();
        sa += x;
        sb += y;
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    const double ma = sa / n, mb = sb / n;
    const double rho =
        (sab / n - ma * mb) / std::sqrt((saa / n - ma * ma) * (sbb / n - mb * mb));
    if (std::abs(rho) >= 0.02) {
        return "cross-stream correlation out of bounds";
    }
    return std::nullopt;
}

}  // namespace

int run_verify(std::ostream& out, const VerifyHooks& hooks) {
    struct Entry {
        const char* name;
        CheckFn fn;
    };
    const std::vector<Entry> checks = {
        {"schedule-round-trip", [&]() { return check_schedule_roundtrip(hooks); }},
        {"schedule-tables", []() { return check_schedule_tables(); }},
        {"lambda-zero-init", []() { return check_lambda_init(); }},
        {"hcaa-common-mode-cancellation", []() { return check_hcaa_cancellation(); }},
        {"hcaa-lambda-zero-reduction", []() { return check_hcaa_lambda_zero(); }},
        {"gradients-primitives", []() { return check_gradient_primitives(); }},
        {"gradients-stage2-toy", []() { return check_gradient_stage2(); }},
        {"metric-closed-forms", []() { return check_metric_closed_forms(); }},
        {"rng-stream-independence", []() { return check_rng_streams(); }},
    };
    int failures = 0;
    for (const auto& c : checks) {
        std::optional<std::string> err;
        try {
            err = c.fn();
        } catch (const std::exception& e) {
            err = std::string("exception: ") + e.what();
        }
        if (err.has_value()) {
            out << "[FAIL] " << c.name << ": " << *err << "\n";
            ++failures;
        } else {
            out << "[ok]   " << c.name << "\n";
        }
    }
    out << (failures == 0 ? "verify: all checks passed" : "verify: FAILURES") << " ("
        << checks.size() - static_cast<std::size_t>(failures) << "/" << checks.size() << ")\n";
    return failures;
}

}  // namespace s2c
