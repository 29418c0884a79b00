#pragma once

// Synthetic score -> features + positions + bimanual motion oracle. Makes
// end-to-end training, the ablation grid and the metric regressions
// runnable with no external data. Everything derives deterministically from
// an RngStream, so datasets are byte-identical across runs.

#include <cstdint>
#include <string>
#include <vector>

#include "s2c/hcaa.hpp"
#include "s2c/rng.hpp"
#include "s2c/tensor.hpp"

namespace s2c {

struct ScoreEvent {
    int onset = 0;
    int pitch = 0;
    Side hand = Side::left;
    int duration = 1;
};

struct ToyScore {
    std::vector<ScoreEvent> events;
};

struct SynthParams {
    int frames = 32;
    int joints = 6;
    int pitches = 16;
    double density = 0.25;  // expected events per frame
    double coupling = 0.3;  // fraction of events mirrored on the other hand
    int overlap = 0;        // pitch overlap band between the hand ranges
};

ToyScore gen_score(RngStream& rng, const SynthParams& p);

// N x P piano-roll, 1 during events, smoothed by a (1/4, 1/2, 1/4) kernel
Tensor64 score_to_features(const ToyScore& score, int frames, int pitches);

struct MotionPair {
    Tensor64 pos_l, pos_r;    // N x 3
    Tensor64 gest_l, gest_r;  // N x J x 3
};

MotionPair score_to_motion(const ToyScore& score, const SynthParams& p);

// critically damped second-order smoother (two identical EMA poles); the
// step response from `init` to a held target has the closed form
//   y_n = target - (target - init) * a^(n+1) * (1 + (1-a) * (n+1))
std::vector<double> critically_damped_filter(const std::vector<double>& input, double a, double init);

inline constexpr double kWristFilterPole = 0.6;

double pitch_to_x(int pitch, int pitches);
double rest_x(Side hand);

struct Clip {
    Tensor32 features;        // N x P
    Tensor32 pos_l, pos_r;    // N x 3
    Tensor32 gest_l, gest_r;  // N x J x 3
};

struct Dataset {
    std::uint64_t seed = 0;
    SynthParams params;
    int train_end = 0;  // [0, train_end) train
    int val_end = 0;    // [train_end, val_end) val, rest test
    std::vector<Clip> items;

    int clip_count() const { return static_cast<int>(items.size()); }
    std::vector<int> split_indices(const std::string& split) const;
};

Clip make_clip(RngStream rng, const SynthParams& p);
Dataset generate_dataset(std::uint64_t seed, int clips, const SynthParams& p);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace s2c
