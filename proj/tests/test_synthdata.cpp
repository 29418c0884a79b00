#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "s2c/synthdata.hpp"
#include "testutil.hpp"

using namespace s2c;

namespace {

SynthParams desk_params() {
    SynthParams p;
    p.frames = 32;
    p.joints = 6;
    p.pitches = 16;
    p.density = 0.25;
    p.coupling = 0.3;
    return p;
}

// ridge regression per-frame features -> positions; the learnability gate
// for the synthetic set
double ridge_pd(const Dataset& ds, double reg) {
    const int p = ds.params.pitches;
    const int d = p + 1;  // bias column
    std::vector<double> xtx(static_cast<std::size_t>(d) * d, 0.0);
    std::vector<double> xty(static_cast<std::size_t>(d) * 3, 0.0);
    auto feature_row = [&](const Clip& c, int t, std::vector<double>& row) {
        for (int k = 0; k < p; ++k) {
            row[static_cast<std::size_t>(k)] = c.features(t, k);
        }
        row[static_cast<std::size_t>(p)] = 1.0;
    };
    std::vector<double> row(static_cast<std::size_t>(d));
    for (int i = 0; i < ds.train_end; ++i) {
        const Clip& c = ds.items[static_cast<std::size_t>(i)];
        for (int t = 0; t < ds.params.frames; ++t) {
            feature_row(c, t, row);
            for (int a = 0; a < d; ++a) {
                for (int b = 0; b < d; ++b) {
                    xtx[static_cast<std::size_t>(a) * d + b] += row[a] * row[b];
                }
                for (int k = 0; k < 3; ++k) {
                    xty[static_cast<std::size_t>(a) * 3 + k] += row[a] * c.pos_l(t, k);
                }
            }
        }
    }
    for (int a = 0; a < d; ++a) {
        xtx[static_cast<std::size_t>(a) * d + a] += reg;
    }
    // gaussian elimination
    std::vector<double> w = xty;
    for (int col = 0; col < d; ++col) {
        int piv = col;
        for (int r = col + 1; r < d; ++r) {
            if (std::abs(xtx[static_cast<std::size_t>(r) * d + col]) >
                std::abs(xtx[static_cast<std::size_t>(piv) * d + col])) {
                piv = r;
            }
        }
        for (int k = 0; k < d; ++k) {
            std::swap(xtx[static_cast<std::size_t>(col) * d + k], xtx[static_cast<std::size_t>(piv) * d + k]);
        }
        for (int k = 0; k < 3; ++k) {
            std::swap(w[static_cast<std::size_t>(col) * 3 + k], w[static_cast<std::size_t>(piv) * 3 + k]);
        }
        const double diag = xtx[static_cast<std::size_t>(col) * d + col];
        for (int r = 0; r < d; ++r) {
            if (r == col) {
                continue;
            }
            const double f = xtx[static_cast<std::size_t>(r) * d + col] / diag;
            for (int k = col; k < d; ++k) {
                xtx[static_cast<std::size_t>(r) * d + k] -= f * xtx[static_cast<std::size_t>(col) * d + k];
            }
            for (int k = 0; k < 3; ++k) {
                w[static_cast<std::size_t>(r) * 3 + k] -= f * w[static_cast<std::size_t>(col) * 3 + k];
            }
        }
    }
    for (int r = 0; r < d; ++r) {
        for (int k = 0; k < 3; ++k) {
            w[static_cast<std::size_t>(r) * 3 + k] /= xtx[static_cast<std::size_t>(r) * d + r];
        }
    }
    // evaluate mean Euclidean error on the test split
    double err = 0;
    long frames = 0;
    for (int i = ds.val_end; i < ds.clip_count(); ++i) {
        const Clip& c = ds.items[static_cast<std::size_t>(i)];
        for (int t = 0; t < ds.params.frames; ++t) {
            feature_row(c, t, row);
            double d2 = 0;
            for (int k = 0; k < 3; ++k) {
                double pred = 0;
                for (int a = 0; a < d; ++a) {
                    pred += row[static_cast<std::size_t>(a)] * w[static_cast<std::size_t>(a) * 3 + k];
                }
                const double delta = pred - c.pos_l(t, k);
                d2 += delta * delta;
            }
            err += std::sqrt(d2);
            ++frames;
        }
    }
    return err / static_cast<double>(frames);
}

}  // namespace

TEST_CASE("gen_score determinism and event statistics") {
    SynthParams p = desk_params();
    RngStream a(1, 0), b(1, 0);
    ToyScore s1 = gen_score(a, p);
    ToyScore s2 = gen_score(b, p);
    REQUIRE(s1.events.size() == s2.events.size());
    for (std::size_t i = 0; i < s1.events.size(); ++i) {
        CHECK(s1.events[i].onset == s2.events[i].onset);
        CHECK(s1.events[i].pitch == s2.events[i].pitch);
        CHECK(s1.events[i].duration == s2.events[i].duration);
    }

    // mean event count over 1000 draws within 5% of density * N
    RngStream rng(77, 0);
    double total = 0;
    for (int i = 0; i < 1000; ++i) {
        RngStream clip = rng.derived(static_cast<std::uint64_t>(i));
        total += static_cast<double>(gen_score(clip, p).events.size());
    }
    const double mean = total / 1000.0;
    const double expect = p.density * p.frames;
    CHECK(std::abs(mean - expect) < 0.05 * expect);

    // hand pitch ranges: left lower half, right upper half
    RngStream r2(5, 0);
    for (int i = 0; i < 50; ++i) {
        RngStream clip = r2.derived(static_cast<std::uint64_t>(i));
        for (const auto& e : gen_score(clip, p).events) {
            CHECK(e.onset >= 0);
            CHECK(e.onset < p.frames);
            CHECK(e.duration >= 1);
            if (e.hand == Side::left) {
                CHECK(e.pitch < p.pitches / 2);
            } else {
                CHECK(e.pitch >= p.pitches / 2);
            }
        }
    }
}

TEST_CASE("near-zero density gives near-empty scores") {
    SynthParams p = desk_params();
    p.density = 1e-9;
    RngStream rng(3, 0);
    CHECK(gen_score(rng, p).events.size() == 0);
    p.density = 0.0;
    CHECK_THROWS_AS(gen_score(rng, p), std::invalid_argument);
}

TEST_CASE("score_to_features: kernel mass and range") {
    ToyScore empty;
    Tensor64 zero = score_to_features(empty, 8, 4);
    for (double v : zero.data) {
        CHECK(v == 0.0);
    }

    // single 1-frame event: triangular bump with unit mass on one channel
    ToyScore one;
    one.events.push_back({4, 2, Side::left, 1});
    Tensor64 f = score_to_features(one, 12, 4);
    double mass = 0;
    for (int t = 0; t < 12; ++t) {
        for (int c = 0; c < 4; ++c) {
            if (c == 2) {
                mass += f(t, c);
            } else {
                CHECK(f(t, c) == 0.0);
            }
        }
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f(4, 2) == doctest::Approx(0.5));
    CHECK(f(3, 2) == doctest::Approx(0.25));
    CHECK(f(5, 2) == doctest::Approx(0.25));

    // values stay in [0, 1] for dense scores
    SynthParams p = desk_params();
    p.density = 2.0;
    RngStream rng(9, 0);
    ToyScore dense = gen_score(rng, p);
    Tensor64 df = score_to_features(dense, p.frames, p.pitches);
    for (double v : df.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
    }
}

TEST_CASE("empty score produces rest positions and rest angles") {
    SynthParams p = desk_params();
    ToyScore empty;
    MotionPair m = score_to_motion(empty, p);
    for (int t = 0; t < p.frames; ++t) {
        CHECK(m.pos_l(t, 0) == doctest::Approx(rest_x(Side::left)).epsilon(1e-12));
        CHECK(m.pos_r(t, 0) == doctest::Approx(rest_x(Side::right)).epsilon(1e-12));
        for (int j = 0; j < p.joints; ++j) {
            // constant across frames
            CHECK(m.gest_l.data[(static_cast<std::size_t>(t) * p.joints + j) * 3] ==
                  doctest::Approx(m.gest_l.data[static_cast<std::size_t>(j) * 3]).epsilon(1e-12));
        }
    }
}

TEST_CASE("wrist settles to the filter's closed-form step response") {
    SynthParams p = desk_params();
    p.frames = 64;
    ToyScore s;
    const int onset = 8;
    const int pitch = 3;
    s.events.push_back({onset, pitch, Side::left, 40});
    MotionPair m = score_to_motion(s, p);

    const double target = pitch_to_x(pitch, p.pitches);
    const double init = rest_x(Side::left);
    const double a = kWristFilterPole;
    // closed form: y_n = target - (target-init) a^(n+1) (1 + (1-a)(n+1))
    for (int t = onset; t < onset + 40; ++t) {
        const int n = t - onset;
        const double expect =
            target - (target - init) * std::pow(a, n + 1) * (1.0 + (1.0 - a) * (n + 1));
        CHECK(m.pos_l(t, 0) == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("simultaneous events couple the two wrists") {
    SynthParams p = desk_params();
    p.frames = 64;
    ToyScore s;
    s.events.push_back({10, 2, Side::left, 3});
    s.events.push_back({10, 13, Side::right, 3});
    s.events.push_back({40, 5, Side::left, 3});
    s.events.push_back({40, 10, Side::right, 3});
    MotionPair m = score_to_motion(s, p);

    auto speed = [&](const Tensor64& pos, int t) {
        double d2 = 0;
        for (int k = 0; k < 3; ++k) {
            const double d = pos(t, k) - pos(t - 1, k);
            d2 += d * d;
        }
        return std::sqrt(d2);
    };
    std::vector<double> sl, sr;
    for (int t = 1; t < p.frames; ++t) {
        sl.push_back(speed(m.pos_l, t));
        sr.push_back(speed(m.pos_r, t));
    }
    double ml = 0, mr = 0;
    for (std::size_t i = 0; i < sl.size(); ++i) {
        ml += sl[i];
        mr += sr[i];
    }
    ml /= static_cast<double>(sl.size());
    mr /= static_cast<double>(sr.size());
    double num = 0, dl = 0, dr = 0;
    for (std::size_t i = 0; i < sl.size(); ++i) {
        num += (sl[i] - ml) * (sr[i] - mr);
        dl += (sl[i] - ml) * (sl[i] - ml);
        dr += (sr[i] - mr) * (sr[i] - mr);
    }
    const double rho = num / std::sqrt(dl * dr);
    CHECK(rho > 0.5);
}

TEST_CASE("gesture angles stay within [-pi/2, pi/2]") {
    SynthParams p = desk_params();
    p.density = 2.0;  // stress with a dense score
    RngStream rng(13, 0);
    for (int i = 0; i < 20; ++i) {
        RngStream clip = rng.derived(static_cast<std::uint64_t>(i));
        ToyScore s = gen_score(clip, p);
        MotionPair m = score_to_motion(s, p);
        for (double v : m.gest_l.data) {
            CHECK(std::abs(v) <= 1.5707963267948966);
        }
        for (double v : m.gest_r.data) {
            CHECK(std::abs(v) <= 1.5707963267948966);
        }
    }
}

TEST_CASE("shifting events shifts the motion (edges excluded)") {
    SynthParams p = desk_params();
    p.frames = 96;
    ToyScore base;
    base.events.push_back({30, 4, Side::left, 4});
    base.events.push_back({44, 6, Side::left, 2});
    const int shift = 9;
    ToyScore moved = base;
    for (auto& e : moved.events) {
        e.onset += shift;
    }
    MotionPair mb = score_to_motion(base, p);
    MotionPair mm = score_to_motion(moved, p);
    // the filter transient from the initial rest state decays below 1e-6
    // well before the first event
    for (int t = 30 + shift - 3; t + 1 < p.frames; ++t) {
        for (int k = 0; k < 3; ++k) {
            CHECK(mm.pos_l(t, k) == doctest::Approx(mb.pos_l(t - shift, k)).epsilon(1e-6));
        }
        for (int j = 0; j < p.joints * 3; ++j) {
            CHECK(mm.gest_l.data[static_cast<std::size_t>(t) * p.joints * 3 + j] ==
                  doctest::Approx(mb.gest_l.data[static_cast<std::size_t>(t - shift) * p.joints * 3 + j])
                      .epsilon(1e-9));
        }
    }
}

TEST_CASE("dataset splits, persistence round trip, byte-identical regeneration") {
    SynthParams p = desk_params();
    Dataset ds = generate_dataset(7, 100, p);
    CHECK(ds.train_end == 70);
    CHECK(ds.val_end == 80);
    CHECK(ds.split_indices("train").size() == 70);
    CHECK(ds.split_indices("val").size() == 10);
    CHECK(ds.split_indices("test").size() == 20);

    namespace fs = std::filesystem;
    const std::string dir = "/tmp/s2c_synth_ds";
    fs::remove_all(dir);
    save_dataset(ds, dir);
    Dataset back = load_dataset(dir);
    REQUIRE(back.clip_count() == ds.clip_count());
    CHECK(back.train_end == ds.train_end);
    CHECK(back.val_end == ds.val_end);
    // reload equals generate: storage is f32, source values are f64
    double worst = 0;
    for (int i = 0; i < ds.clip_count(); ++i) {
        worst = std::max(worst, testutil::max_abs_diff_t(back.items[static_cast<std::size_t>(i)].gest_l,
                                                         ds.items[static_cast<std::size_t>(i)].gest_l));
        worst = std::max(worst, testutil::max_abs_diff_t(back.items[static_cast<std::size_t>(i)].features,
                                                         ds.items[static_cast<std::size_t>(i)].features));
    }
    CHECK(worst <= 1e-7);

    // same seed -> byte-identical dataset files
    const std::string dir2 = "/tmp/s2c_synth_ds2";
    fs::remove_all(dir2);
    save_dataset(generate_dataset(7, 100, p), dir2);
    std::ifstream f1(dir + "/dataset.s2c", std::ios::binary);
    std::ifstream f2(dir2 + "/dataset.s2c", std::ios::binary);
    std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("positions are learnable from features (ridge baseline)") {
    SynthParams p = desk_params();
    Dataset ds = generate_dataset(7, 120, p);

    // constant-mean predictor baseline
    double mean[3] = {0, 0, 0};
    long count = 0;
    for (int i = 0; i < ds.train_end; ++i) {
        const Clip& c = ds.items[static_cast<std::size_t>(i)];
        for (int t = 0; t < p.frames; ++t) {
            for (int k = 0; k < 3; ++k) {
                mean[k] += c.pos_l(t, k);
            }
            ++count;
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(count);
    }
    double const_pd = 0;
    long frames = 0;
    for (int i = ds.val_end; i < ds.clip_count(); ++i) {
        const Clip& c = ds.items[static_cast<std::size_t>(i)];
        for (int t = 0; t < p.frames; ++t) {
            double d2 = 0;
            for (int k = 0; k < 3; ++k) {
                const double d = mean[k] - c.pos_l(t, k);
                d2 += d * d;
            }
            const_pd += std::sqrt(d2);
            ++frames;
        }
    }
    const_pd /= static_cast<double>(frames);

    const double ridge = ridge_pd(ds, 1e-3);
    CHECK(ridge < const_pd);
}
