#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "s2c/autodiff.hpp"
#include "s2c/nn.hpp"
#include "s2c/rng.hpp"
#include "s2c/tensor.hpp"
#include "testutil.hpp"

using namespace s2c;

TEST_CASE("matmul identity and hand arithmetic") {
    GraphT<double> g(false);
    VarT<double> eye = g.input(TensorT<double>(Shape{2, 2}, {1, 0, 0, 1}));
    VarT<double> b = g.input(TensorT<double>(Shape{2, 2}, {3.5, -1, 2, 0.25}));
    VarT<double> prod = matmul(eye, b);
    CHECK(testutil::max_abs_diff_t(prod.val(), b.val()) == doctest::Approx(0.0));

    VarT<double> a2 = g.input(TensorT<double>(Shape{2, 2}, {1, 2, 3, 4}));
    VarT<double> b2 = g.input(TensorT<double>(Shape{2, 1}, {5, 6}));
    VarT<double> c2 = matmul(a2, b2);
    CHECK(c2.val().data[0] == doctest::Approx(17.0));
    CHECK(c2.val().data[1] == doctest::Approx(39.0));
}

TEST_CASE("matmul shape mismatch is a contract violation") {
    GraphT<double> g(false);
    VarT<double> a = g.input(TensorT<double>(Shape{2, 3}, 1.0));
    VarT<double> b = g.input(TensorT<double>(Shape{2, 2}, 1.0));
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("gradient of sum(matmul(A,B)) wrt A equals column sums of B") {
    RngStream rng(11, 0);
    ParamStoreT<double> store;
    auto a = store.add("a", testutil::random_tensor(Shape{3, 4}, rng));
    auto b = store.add("b", testutil::random_tensor(Shape{4, 2}, rng));

    GraphT<double> g(true);
    VarT<double> loss = sum_all(matmul(g.param(a), g.param(b)));
    g.backward(loss);
    g.accumulate_param_grads();

    // independent oracle: d sum(AB) / dA[i,k] = sum_j B[k,j]
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 4; ++k) {
            double expect = 0;
            for (int j = 0; j < 2; ++j) {
                expect += b->value(k, j);
            }
            CHECK(a->grad(i, k) == doctest::Approx(expect).epsilon(1e-12));
        }
    }

    // finite-difference oracle
    double err = grad_check({a, b},
                            [&](GraphT<double>& gg) { return sum_all(matmul(gg.param(a), gg.param(b))); },
                            1e-5, 64, rng);
    CHECK(err < 1e-6);
}

TEST_CASE("softmax fixed points and stability") {
    GraphT<double> g(false);
    VarT<double> u = softmax_lastdim(g.input(TensorT<double>(Shape{3}, {0, 0, 0})));
    for (double v : u.val().data) {
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }

    VarT<double> big = softmax_lastdim(g.input(TensorT<double>(Shape{2}, {1000, 0})));
    CHECK(big.val().data[0] == doctest::Approx(1.0));
    CHECK(big.val().data[1] == doctest::Approx(0.0));

    VarT<double> lg = softmax_lastdim(
        g.input(TensorT<double>(Shape{3}, {std::log(1.0), std::log(2.0), std::log(3.0)})));
    CHECK(lg.val().data[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(lg.val().data[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
    CHECK(lg.val().data[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-12));

    // rows sum to one
    RngStream rng(3, 9);
    VarT<double> r = softmax_lastdim(g.input(testutil::random_tensor(Shape{4, 7}, rng, -5, 5)));
    for (int i = 0; i < 4; ++i) {
        double s = 0;
        for (int j = 0; j < 7; ++j) {
            s += r.val()(i, j);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("grad_check on x^2 at x=3 is near exact") {
    ParamStoreT<double> store;
    auto x = store.add("x", TensorT<double>(Shape{1}, {3.0}));
    double err = grad_check({x},
                            [&](GraphT<double>& g) {
                                VarT<double> v = g.param(x);
                                return sum_all(mul(v, v));
                            },
                            1e-5, 4, RngStream(1, 1));
    CHECK(err < 1e-9);

    // analytic value itself
    GraphT<double> g(true);
    VarT<double> v = g.param(x);
    x->zero_grad();
    g.backward(sum_all(mul(v, v)));
    g.accumulate_param_grads();
    CHECK(x->grad.data[0] == doctest::Approx(6.0).epsilon(1e-12));
}

// every primitive against central finite differences, randomized shapes
TEST_CASE("primitive gradients match finite differences") {
    RngStream rng(2024, 7);
    const double tol = 1e-5;

    auto check = [&](const char* name, const std::vector<ParamPtr<double>>& params,
                     std::function<VarT<double>(GraphT<double>&)> f) {
        INFO(name);
        double err = grad_check(params, f, 1e-5, 24, rng.derived(101));
        CHECK(err < tol);
    };

    ParamStoreT<double> store;
    auto x4 = store.add("x4", testutil::random_tensor(Shape{2, 3, 2, 2}, rng));
    auto y4 = store.add("y4", testutil::random_tensor(Shape{2, 3, 2, 2}, rng));
    auto m1 = store.add("m1", testutil::random_tensor(Shape{5, 4}, rng));
    auto m2 = store.add("m2", testutil::random_tensor(Shape{4, 3}, rng));
    auto m3 = store.add("m3", testutil::random_tensor(Shape{6, 4}, rng));
    auto vec = store.add("vec", testutil::random_tensor(Shape{4}, rng));
    auto sc = store.add("sc", testutil::random_tensor(Shape{1}, rng, 0.5, 1.5));
    auto cw = store.add("cw", testutil::random_tensor(Shape{5, 3, 4}, rng));
    auto cb = store.add("cb", testutil::random_tensor(Shape{4}, rng));
    auto cx = store.add("cx", testutil::random_tensor(Shape{8, 3}, rng));
    auto lg = store.add("lg", testutil::random_tensor(Shape{4}, rng, 0.5, 1.5));
    auto lb = store.add("lb", testutil::random_tensor(Shape{4}, rng));

    check("add", {x4, y4}, [&](GraphT<double>& g) { return mean_all(add(g.param(x4), g.param(y4))); });
    check("sub", {x4, y4},
          [&](GraphT<double>& g) { return mean_all(mul(sub(g.param(x4), g.param(y4)), g.param(x4))); });
    check("mul", {x4, y4}, [&](GraphT<double>& g) { return mean_all(mul(g.param(x4), g.param(y4))); });
    check("scale", {x4}, [&](GraphT<double>& g) { return mean_all(scale(g.param(x4), -2.5)); });
    check("add_scalar", {x4},
          [&](GraphT<double>& g) { return mean_all(mul(add_scalar(g.param(x4), 0.7), g.param(x4))); });
    check("mul_scalar_var", {m1, sc},
          [&](GraphT<double>& g) { return mean_all(mul_scalar_var(g.param(m1), g.param(sc))); });
    check("exp", {x4}, [&](GraphT<double>& g) { return mean_all(exp_of(g.param(x4))); });
    check("clamp", {x4},
          [&](GraphT<double>& g) { return mean_all(mul(clamp_of(g.param(x4), -0.6, 0.6), g.param(y4))); });
    check("gelu", {x4}, [&](GraphT<double>& g) { return mean_all(gelu(g.param(x4))); });
    check("matmul", {m1, m2},
          [&](GraphT<double>& g) { return mean_all(gelu(matmul(g.param(m1), g.param(m2)))); });
    check("matmul_nt", {m1, m3},
          [&](GraphT<double>& g) { return mean_all(gelu(matmul_nt(g.param(m1), g.param(m3)))); });
    check("conv1d_s1", {cx, cw, cb}, [&](GraphT<double>& g) {
        return mean_all(gelu(conv1d(g.param(cx), g.param(cw), g.param(cb), 1)));
    });
    check("conv1d_s2", {cx, cw, cb}, [&](GraphT<double>& g) {
        return mean_all(gelu(conv1d(g.param(cx), g.param(cw), g.param(cb), 2)));
    });
    check("avgpool2", {cx}, [&](GraphT<double>& g) { return mean_all(gelu(avgpool2_rows(g.param(cx)))); });
    check("upsample2", {cx},
          [&](GraphT<double>& g) { return mean_all(gelu(upsample2_rows(g.param(cx)))); });
    check("add_rowvec", {m2, vec}, [&](GraphT<double>& g) {
        return mean_all(gelu(add_rowvec(matmul_nt(g.param(m2), g.param(m2)), g.param(vec))));
    });
    check("concat_cols", {m1, m1},
          [&](GraphT<double>& g) { return mean_all(gelu(concat_cols(g.param(m1), g.param(m1)))); });
    check("slice_cols", {m1},
          [&](GraphT<double>& g) { return mean_all(gelu(slice_cols(g.param(m1), 1, 2))); });
    check("reshape", {m1},
          [&](GraphT<double>& g) { return mean_all(gelu(reshape(g.param(m1), Shape{2, 10}))); });
    check("layer_norm", {m3, lg, lb}, [&](GraphT<double>& g) {
        return mean_all(mul(layer_norm(g.param(m3), g.param(lg), g.param(lb)), g.param(m3)));
    });
    check("softmax", {m1}, [&](GraphT<double>& g) {
        return mean_all(mul(softmax_lastdim(g.param(m1)), g.param(m1)));
    });
    check("sum_all", {x4}, [&](GraphT<double>& g) { return sum_all(g.param(x4)); });
    check("mean_all", {x4}, [&](GraphT<double>& g) { return mean_all(mul(g.param(x4), g.param(x4))); });
}

TEST_CASE("stop_grad blocks the gradient path") {
    ParamStoreT<double> store;
    auto x = store.add("x", TensorT<double>(Shape{3}, {1, 2, 3}));
    x->zero_grad();
    GraphT<double> g(true);
    VarT<double> v = g.param(x);
    VarT<double> loss = sum_all(mul(stop_grad(v), v));
    g.backward(loss);
    g.accumulate_param_grads();
    // only the non-blocked factor contributes: d/dx sum(c * x) = c = x values
    CHECK(x->grad.data[0] == doctest::Approx(1.0));
    CHECK(x->grad.data[1] == doctest::Approx(2.0));
    CHECK(x->grad.data[2] == doctest::Approx(3.0));
}

TEST_CASE("non-finite op output is a hard error") {
    GraphT<double> g(false);
    VarT<double> x = g.input(TensorT<double>(Shape{2}, {800.0, 0.0}));
    CHECK_THROWS_AS(exp_of(x), std::runtime_error);
    CHECK_THROWS_AS(g.input(TensorT<double>(Shape{1}, {std::nan("")})), std::runtime_error);
}

TEST_CASE("operations are bitwise deterministic") {
    RngStream rng(5, 5);
    TensorT<double> a = testutil::random_tensor(Shape{6, 6}, rng);
    TensorT<double> b = testutil::random_tensor(Shape{6, 6}, rng);
    auto run = [&]() {
        GraphT<double> g(false);
        return softmax_lastdim(gelu(matmul(g.input(a), g.input(b)))).val();
    };
    TensorT<double> r1 = run();
    TensorT<double> r2 = run();
    CHECK(r1.data == r2.data);
}

TEST_CASE("rng stream draws are pure functions of (seed, stream, counter)") {
    RngStream a(42, 3);
    RngStream b(42, 3);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    // replay from an explicit counter position
    RngStream c(42, 3);
    c.counter = 57;
    RngStream d(42, 3);
    for (int i = 0; i < 57; ++i) {
        (void)d.next_u64();
    }
    CHECK(c.next_u64() == d.next_u64());

    // distinct stream ids diverge
    RngStream e(42, 4);
    CHECK(RngStream(42, 3).next_u64() != e.next_u64());
}

TEST_CASE("distinct streams are uncorrelated") {
    const int n = 100000;
    RngStream a(7, 1), b(7, 2);
    double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
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
    const double cov = sab / n - ma * mb;
    const double rho = cov / std::sqrt((saa / n - ma * ma) * (sbb / n - mb * mb));
    CHECK(std::abs(rho) < 0.02);
    // and each stream is standard normal to MC accuracy
    CHECK(std::abs(ma) < 0.02);
    CHECK(std::abs(saa / n - 1.0) < 0.03);
}

TEST_CASE("derived streams do not disturb the parent") {
    RngStream parent(9, 0);
    RngStream child = parent.derived(5);
    CHECK(parent.counter == 0);
    CHECK(child.stream_id != parent.stream_id);
    RngStream parent2(9, 0);
    CHECK(parent.next_u64() == parent2.next_u64());
}

TEST_CASE("sinusoidal embedding basics") {
    TensorT<double> e0 = sinusoidal_embedding<double>(0, 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(e0.data[static_cast<std::size_t>(i)] == doctest::Approx(0.0));
        CHECK(e0.data[static_cast<std::size_t>(4 + i)] == doctest::Approx(1.0));
    }
    double norm2 = 0;
    TensorT<double> e5 = sinusoidal_embedding<double>(5, 8);
    for (double v : e5.data) {
        norm2 += v * v;
    }
    CHECK(std::sqrt(norm2) <= std::sqrt(8.0) + 1e-12);
}

TEST_CASE("batched graphs reduce identically regardless of worker count") {
    // per-item graphs merged in item order must match a serial pass bitwise
    RngStream rng(31, 2);
    ParamStoreT<double> store;
    auto w = store.add("w", testutil::random_tensor(Shape{4, 4}, rng));
    std::vector<TensorT<double>> items;
    for (int i = 0; i < 6; ++i) {
        items.push_back(testutil::random_tensor(Shape{3, 4}, rng));
    }

    auto run_pass = [&]() {
        w->zero_grad();
        std::vector<GraphT<double>> graphs;
        graphs.reserve(items.size());
        for (const auto& it : items) {
            graphs.emplace_back(true);
            GraphT<double>& g = graphs.back();
            VarT<double> loss = mean_all(gelu(matmul(g.input(it), g.param(w))));
            g.backward(loss);
        }
        for (auto& g : graphs) {
            g.accumulate_param_grads();
        }
        return w->grad.data;
    };
    auto g1 = run_pass();
    auto g2 = run_pass();
    CHECK(g1 == g2);
}
