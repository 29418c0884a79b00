#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "s2c/model.hpp"
#include "s2c/networks.hpp"
#include "testutil.hpp"

using namespace s2c;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.feature_channels = 5;
    cfg.refiner.width = 6;
    cfg.refiner.layers = 2;
    cfg.refiner.heads = 2;
    cfg.predictor.width = 8;
    cfg.denoiser.levels = 2;
    cfg.denoiser.dims = {6, 8};
    cfg.denoiser.heads = 2;
    cfg.denoiser.joints = 2;
    cfg.denoiser.time_dim = 8;
    cfg.denoiser.fusion_mode = FusionMode::hcaa;
    cfg.finalize();
    return cfg;
}

}  // namespace

TEST_CASE("refiner shape contract and zero-init identity") {
    RngStream rng(21, 0);
    ParamStoreT<double> store;
    RefinerConfig rc;
    rc.in_channels = 5;
    rc.width = 6;
    rc.layers = 2;
    rc.heads = 2;
    RefinerT<double> refiner = RefinerT<double>::make(store, "r", rc, rng);

    GraphT<double> g(false);
    TensorT<double> fv = testutil::random_tensor(Shape{9, 5}, rng);
    VarT<double> f = g.input(fv);
    VarT<double> out = refiner(g, f);
    CHECK(out.val().shape == Shape{9, 6});

    // block output projections start at zero, so the forward equals the
    // embedding branch exactly
    VarT<double> embed_only = refiner.embed(g, f);
    CHECK(testutil::max_abs_diff_t(out.val(), embed_only.val()) == doctest::Approx(0.0));
}

TEST_CASE("refiner gradient check through two layers") {
    RngStream rng(22, 0);
    ParamStoreT<double> store;
    RefinerConfig rc;
    rc.in_channels = 4;
    rc.width = 6;
    rc.layers = 2;
    rc.heads = 2;
    RefinerT<double> refiner = RefinerT<double>::make(store, "r", rc, rng);
    // move zero-init projections off zero so every path carries gradient
    for (auto& p : store.items) {
        if (p->value.numel() > 1) {
            RngStream r2(99, 1);
            r2.fill_uniform(p->value, -0.3, 0.3);
        }
    }
    TensorT<double> fv = testutil::random_tensor(Shape{4, 4}, rng);
    double err = grad_check(store.items,
                            [&](GraphT<double>& g) {
                                VarT<double> out = refiner(g, g.input(fv));
                                return mean_all(mul(out, out));
                            },
                            1e-5, 6, rng);
    CHECK(err < 1e-4);
}

TEST_CASE("position predictor shape and translation covariance") {
    RngStream rng(23, 0);
    ParamStoreT<double> store;
    PredictorConfig pc;
    pc.in_channels = 5;
    pc.width = 8;
    PositionPredictorT<double> pred = PositionPredictorT<double>::make(store, "p", pc, rng);
    // nonzero head so the output is not trivially constant
    RngStream r2(7, 7);
    r2.fill_uniform(pred.head.w->value, -0.5, 0.5);

    GraphT<double> g(false);
    VarT<double> out = pred(g, g.input(testutil::random_tensor(Shape{12, 5}, rng)));
    CHECK(out.val().shape == Shape{12, 3});

    // constant input -> constant trajectory (replicate padding)
    TensorT<double> cf(Shape{12, 5});
    for (int j = 0; j < 5; ++j) {
        for (int i = 0; i < 12; ++i) {
            cf(i, j) = 0.3 * (j + 1);
        }
    }
    VarT<double> cout_v = pred(g, g.input(cf));
    for (int i = 1; i < 12; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(cout_v.val()(i, j) == doctest::Approx(cout_v.val()(0, j)).epsilon(1e-12));
        }
    }

    // untrained head outputs the origin
    PositionPredictorT<double> fresh = PositionPredictorT<double>::make(store, "q", pc, rng);
    VarT<double> zero_out = fresh(g, g.input(testutil::random_tensor(Shape{6, 5}, rng)));
    for (double v : zero_out.val().data) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("time embedding is injective over the step range") {
    const int dim = 8;
    std::vector<TensorT<double>> embs;
    for (int t = 1; t <= 1000; ++t) {
        embs.push_back(sinusoidal_embedding<double>(t, dim));
    }
    for (int a = 0; a < 1000; ++a) {
        for (int b = a + 1; b < 1000; ++b) {
            bool same = true;
            for (int i = 0; i < dim && same; ++i) {
                same = std::abs(embs[a].data[i] - embs[b].data[i]) < 1e-9;
            }
            REQUIRE_FALSE(same);
        }
    }
}

TEST_CASE("denoiser shape contract and untrained output is zero") {
    ModelConfig cfg = toy_config();
    ModelT<double> m = make_model<double>(cfg, 77);
    const int n = 8;
    GraphT<double> g(false);
    RngStream rng(1, 1);
    VarT<double> x = g.input(testutil::random_tensor(Shape{n, cfg.denoiser.joints * 3}, rng));
    VarT<double> c = g.input(testutil::random_tensor(Shape{n, cfg.denoiser.cond_channels}, rng));
    auto res = denoise_forward(g, m.left.denoiser, &m.left.fusion[0], &m.right.fusion[0], x, 3, c,
                               Side::left,
                               std::optional<StreamFeaturesT<double>>{StreamFeaturesT<double>{
                                   g.input(TensorT<double>(Shape{n / 2, 8}, 0.25)), Side::right}});
    CHECK(res.v.val().shape == Shape{n, cfg.denoiser.joints * 3});
    CHECK(res.features.values.val().shape == Shape{n / 2, 8});
    // zero-initialized head
    for (double v : res.v.val().data) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("denoise_forward requires peer features when fusion is on") {
    ModelConfig cfg = toy_config();
    ModelT<double> m = make_model<double>(cfg, 78);
    GraphT<double> g(false);
    RngStream rng(2, 2);
    VarT<double> x = g.input(testutil::random_tensor(Shape{8, 6}, rng));
    VarT<double> c = g.input(testutil::random_tensor(Shape{8, cfg.denoiser.cond_channels}, rng));
    CHECK_THROWS_AS(denoise_forward(g, m.left.denoiser, &m.left.fusion[0], &m.right.fusion[0], x, 3, c,
                                    Side::left, std::optional<StreamFeaturesT<double>>{}),
                    std::invalid_argument);
}

TEST_CASE("fusion none output ignores the peer argument") {
    ModelConfig cfg = toy_config();
    cfg.denoiser.fusion_mode = FusionMode::none;
    cfg.finalize();
    ModelT<double> m = make_model<double>(cfg, 79);
    RngStream rng(3, 3);
    TensorT<double> xv = testutil::random_tensor(Shape{8, 6}, rng);
    TensorT<double> cv = testutil::random_tensor(Shape{8, cfg.denoiser.cond_channels}, rng);

    auto run = [&](double peer_fill) {
        GraphT<double> g(false);
        auto res = denoise_forward<double>(g, m.left.denoiser, nullptr, nullptr, g.input(xv), 5,
                                           g.input(cv), Side::left,
                                           std::optional<StreamFeaturesT<double>>{StreamFeaturesT<double>{
                                               g.input(TensorT<double>(Shape{4, 8}, peer_fill)),
                                               Side::right}});
        return res.v.val();
    };
    CHECK(run(0.0).data == run(123.0).data);
}

TEST_CASE("dual forward equals manual per-stream exchange") {
    ModelConfig cfg = toy_config();
    for (FusionMode mode : {FusionMode::hcaa, FusionMode::concat, FusionMode::cross_attention}) {
        cfg.denoiser.fusion_mode = mode;
        cfg.finalize();
        ModelT<double> m = make_model<double>(cfg, 80);
        // exercise nonzero lambda paths
        if (mode == FusionMode::hcaa) {
            RngStream lr(4, 4);
            for (auto& lam : m.left.fusion[0].lam) {
                lr.fill_uniform(lam.l1q->value, -0.2, 0.2);
                lr.fill_uniform(lam.l1k->value, -0.2, 0.2);
            }
        }
        RngStream rng(4, 4);
        TensorT<double> xl = testutil::random_tensor(Shape{8, 6}, rng);
        TensorT<double> xr = testutil::random_tensor(Shape{8, 6}, rng);
        TensorT<double> cl = testutil::random_tensor(Shape{8, cfg.denoiser.cond_channels}, rng);
        TensorT<double> cr = testutil::random_tensor(Shape{8, cfg.denoiser.cond_channels}, rng);

        GraphT<double> g(false);
        auto dual = dual_denoise_forward(g, m.left.denoiser, m.right.denoiser, m.left.fusion,
                                         m.right.fusion, g.input(xl), g.input(xr), 4, g.input(cl),
                                         g.input(cr), /*peer_stop_grad=*/true);

        GraphT<double> g2(false);
        auto fl = denoiser_features(g2, m.left.denoiser, g2.input(xl), 4, g2.input(cl), Side::left);
        auto fr = denoiser_features(g2, m.right.denoiser, g2.input(xr), 4, g2.input(cr), Side::right);
        auto vl = denoise_forward(g2, m.left.denoiser, &m.left.fusion[0], &m.right.fusion[0],
                                  g2.input(xl), 4, g2.input(cl), Side::left,
                                  std::optional<StreamFeaturesT<double>>{fr});
        auto vr = denoise_forward(g2, m.right.denoiser, &m.right.fusion[0], &m.left.fusion[0],
                                  g2.input(xr), 4, g2.input(cr), Side::right,
                                  std::optional<StreamFeaturesT<double>>{fl});

        INFO(fusion_mode_name(mode));
        CHECK(dual.first.val().data == vl.v.val().data);
        CHECK(dual.second.val().data == vr.v.val().data);
    }
}

TEST_CASE("stream isolation with fusion off") {
    ModelConfig cfg = toy_config();
    cfg.denoiser.fusion_mode = FusionMode::none;
    cfg.finalize();
    ModelT<double> m = make_model<double>(cfg, 81);
    RngStream rng(5, 5);
    TensorT<double> xl = testutil::random_tensor(Shape{8, 6}, rng);
    TensorT<double> cl = testutil::random_tensor(Shape{8, cfg.denoiser.cond_channels}, rng);
    TensorT<double> cr = testutil::random_tensor(Shape{8, cfg.denoiser.cond_channels}, rng);

    auto run = [&](const TensorT<double>& xr) {
        GraphT<double> g(false);
        auto out = dual_denoise_forward(g, m.left.denoiser, m.right.denoiser, m.left.fusion,
                                        m.right.fusion, g.input(xl), g.input(xr), 7, g.input(cl),
                                        g.input(cr), true);
        return out.first.val();
    };
    TensorT<double> xr1 = testutil::random_tensor(Shape{8, 6}, rng);
    TensorT<double> xr2 = testutil::random_tensor(Shape{8, 6}, rng);
    CHECK(run(xr1).data == run(xr2).data);
}

TEST_CASE("gradient check through one U-Net level with timestep MLP") {
    RngStream rng(26, 0);
    ParamStoreT<double> store;
    DenoiserConfig dc;
    dc.levels = 1;
    dc.dims = {6};
    dc.heads = 2;
    dc.joints = 2;
    dc.time_dim = 8;
    dc.cond_channels = 3;
    dc.fusion_mode = FusionMode::none;
    DenoiserT<double> net = DenoiserT<double>::make(store, "d", dc, rng);
    RngStream r2(6, 6);
    r2.fill_uniform(net.head.w->value, -0.3, 0.3);
    for (auto& p : store.items) {
        if (p->name.find(".att.wo") != std::string::npos && p->value.numel() > 6) {
            r2.fill_uniform(p->value, -0.3, 0.3);
        }
    }

    TensorT<double> xv = testutil::random_tensor(Shape{4, 6}, rng);
    TensorT<double> cv = testutil::random_tensor(Shape{4, 3}, rng);
    TensorT<double> tv = testutil::random_tensor(Shape{4, 6}, rng);

    double err = grad_check(store.items,
                            [&](GraphT<double>& g) {
                                auto res = denoise_forward<double>(g, net, nullptr, nullptr, g.input(xv),
                                                                   2, g.input(cv), Side::left,
                                                                   std::optional<StreamFeaturesT<double>>{});
                                return mse(res.v, g.input(tv));
                            },
                            1e-5, 5, rng);
    CHECK(err < 1e-4);
}

TEST_CASE("input perturbations stay inside the convolutional receptive field") {
    RngStream rng(27, 0);
    ParamStoreT<double> store;
    DenoiserConfig dc;
    dc.levels = 2;
    dc.dims = {6, 8};
    dc.heads = 2;
    dc.joints = 2;
    dc.time_dim = 8;
    dc.cond_channels = 3;
    dc.fusion_mode = FusionMode::none;
    DenoiserT<double> net = DenoiserT<double>::make(store, "d", dc, rng);
    RngStream r2(8, 8);
    r2.fill_uniform(net.head.w->value, -0.3, 0.3);
    // attention output projections are zero-initialized, so attention mixes
    // nothing and the receptive field is purely convolutional

    const int n = 64;
    const int radius = net.receptive_radius();
    REQUIRE(radius < n / 2);

    TensorT<double> xv = testutil::random_tensor(Shape{n, 6}, rng);
    TensorT<double> cv = testutil::random_tensor(Shape{n, 3}, rng);
    auto run = [&](const TensorT<double>& x) {
        GraphT<double> g(false);
        return denoise_forward<double>(g, net, nullptr, nullptr, g.input(x), 3, g.input(cv), Side::left,
                                       std::optional<StreamFeaturesT<double>>{})
            .v.val();
    };
    TensorT<double> base = run(xv);
    TensorT<double> xp = xv;
    const int k = 32;
    xp(k, 1) += 1.0;
    TensorT<double> pert = run(xp);
    for (int i = 0; i < n; ++i) {
        double diff = 0;
        for (int j = 0; j < 6; ++j) {
            diff = std::max(diff, std::abs(pert(i, j) - base(i, j)));
        }
        if (i < k - radius || i > k + radius) {
            CHECK(diff == 0.0);
        }
    }
}

TEST_CASE("conditioning tensor zeroes the other hand when sharing is off") {
    GraphT<double> g(false);
    RngStream rng(28, 0);
    VarT<double> refined = g.input(testutil::random_tensor(Shape{5, 4}, rng));
    TensorT<double> p_own = testutil::random_tensor(Shape{5, 3}, rng);
    TensorT<double> p_other = testutil::random_tensor(Shape{5, 3}, rng);

    VarT<double> shared = build_conditioning(g, refined, p_own, p_other, true);
    VarT<double> solo = build_conditioning(g, refined, p_own, p_other, false);
    CHECK(shared.val().shape == Shape{5, 10});
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(shared.val()(i, 7 + j) == doctest::Approx(p_other(i, j)));
            CHECK(solo.val()(i, 7 + j) == 0.0);
        }
    }
}

TEST_CASE("denoiser config validation") {
    DenoiserConfig dc;
    dc.levels = 2;
    dc.dims = {8, 8};  // not strictly increasing
    CHECK_THROWS_AS(dc.validate(), std::invalid_argument);
    dc.dims = {8, 16};
    dc.heads = 3;  // does not divide 8
    CHECK_THROWS_AS(dc.validate(), std::invalid_argument);
    dc.heads = 2;
    dc.validate();
}

TEST_CASE("forward passes are deterministic") {
    ModelConfig cfg = toy_config();
    ModelT<double> m = make_model<double>(cfg, 90);
    RngStream rng(9, 9);
    TensorT<double> xl = testutil::random_tensor(Shape{8, 6}, rng);
    TensorT<double> xr = testutil::random_tensor(Shape{8, 6}, rng);
    TensorT<double> cl = testutil::random_tensor(Shape{8, cfg.denoiser.cond_channels}, rng);
    TensorT<double> cr = testutil::random_tensor(Shape{8, cfg.denoiser.cond_channels}, rng);
    auto run = [&]() {
        GraphT<double> g(false);
        auto out = dual_denoise_forward(g, m.left.denoiser, m.right.denoiser, m.left.fusion,
                                        m.right.fusion, g.input(xl), g.input(xr), 4, g.input(cl),
                                        g.input(cr), true);
        return std::make_pair(out.first.val().data, out.second.val().data);
    };
    CHECK(run() == run());
}
