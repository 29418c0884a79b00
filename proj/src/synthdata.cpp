#include "s2c/synthdata.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "s2c/dataio.hpp"

namespace s2c {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRestY = 0.05;
constexpr double kRestZ = 0.15;
constexpr double kStrikeY = 0.04;
constexpr double kStrikeZ = 0.02;
constexpr int kStrikeWidth = 4;
constexpr double kFlexAmp = 1.1;

int poisson_draw(RngStream& rng, double lambda) {
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng.u01();
    } while (p > limit);
    return k - 1;
}

double rest_angle(int joint, int joints) {
    return 0.1 + 0.2 * static_cast<double>(joint) / std::max(1, joints);
}

}  // namespace

double pitch_to_x(int pitch, int pitches) {
    return 2.0 * (pitch + 0.5) / pitches - 1.0;
}

double rest_x(Side hand) { return hand == Side::left ? -0.5 : 0.5; }

ToyScore gen_score(RngStream& rng, const SynthParams& p) {
    if (p.density <= 0.0) {
        throw std::invalid_argument("gen_score: density must be positive");
    }
    const int half = p.pitches / 2;
    const int target = poisson_draw(rng, p.density * p.frames);
    ToyScore score;
    while (static_cast<int>(score.events.size()) < target) {
        const Side hand = rng.below(2) == 0 ? Side::left : Side::right;
        // left range [0, half+overlap), right range [half-overlap, pitches)
        const int lo = hand == Side::left ? 0 : std::max(0, half - p.overlap);
        const int hi = hand == Side::left ? std::min(p.pitches, half + p.overlap) : p.pitches;
        const int span = std::max(1, hi - lo);
        ScoreEvent e;
        e.hand = hand;
        e.pitch = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
        e.onset = static_cast<int>(rng.below(static_cast<std::uint64_t>(p.frames)));
        e.duration = 1 + static_cast<int>(rng.below(5));
        const bool pair = rng.u01() < p.coupling &&
                          static_cast<int>(score.events.size()) + 2 <= target;
        score.events.push_back(e);
        if (pair) {
            ScoreEvent partner = e;
            partner.hand = other_side(e.hand);
            partner.pitch = p.pitches - 1 - e.pitch;
            score.events.push_back(partner);
        }
    }
    return score;
}

Tensor64 score_to_features(const ToyScore& score, int frames, int pitches) {
    Tensor64 roll(Shape{frames, pitches}, 0.0);
    for (const auto& e : score.events) {
        for (int t = e.onset; t < std::min(frames, e.onset + e.duration); ++t) {
            roll(t, e.pitch) = 1.0;
        }
    }
    // 3-frame triangular kernel, unit mass
    Tensor64 out(Shape{frames, pitches}, 0.0);
    for (int t = 0; t < frames; ++t) {
        for (int c = 0; c < pitches; ++c) {
            double acc = 0.5 * roll(t, c);
            if (t > 0) {
                acc += 0.25 * roll(t - 1, c);
            }
            if (t + 1 < frames) {
                acc += 0.25 * roll(t + 1, c);
            }
            out(t, c) = acc;
        }
    }
    return out;
}

std::vector<double> critically_damped_filter(const std::vector<double>& input, double a, double init) {
    std::vector<double> out(input.size());
    double s = init, y = init;
    for (std::size_t i = 0; i < input.size(); ++i) {
        s = (1.0 - a) * input[i] + a * s;
        y = (1.0 - a) * s + a * y;
        out[i] = y;
    }
    return out;
}

MotionPair score_to_motion(const ToyScore& score, const SynthParams& p) {
    const int n = p.frames;
    const int j = p.joints;
    MotionPair out;
    out.pos_l = Tensor64(Shape{n, 3});
    out.pos_r = Tensor64(Shape{n, 3});
    out.gest_l = Tensor64(Shape{n, j, 3});
    out.gest_r = Tensor64(Shape{n, j, 3});

    for (Side hand : {Side::left, Side::right}) {
        Tensor64& pos = hand == Side::left ? out.pos_l : out.pos_r;
        Tensor64& gest = hand == Side::left ? out.gest_l : out.gest_r;

        // wrist x: hold the most recent active pitch center, smoothed by the
        // critically damped filter
        std::vector<double> target(static_cast<std::size_t>(n), rest_x(hand));
        {
            double held = rest_x(hand);
            for (int t = 0; t < n; ++t) {
                int best_onset = -1;
                for (const auto& e : score.events) {
                    if (e.hand == hand && e.onset <= t && t < e.onset + e.duration &&
                        e.onset > best_onset) {
                        best_onset = e.onset;
                        held = pitch_to_x(e.pitch, p.pitches);
                    }
                }
                target[static_cast<std::size_t>(t)] = held;
            }
        }
        const std::vector<double> x = critically_damped_filter(target, kWristFilterPole, rest_x(hand));

        // y/z: fixed half-sine key-strike arcs at onsets
        std::vector<double> arc(static_cast<std::size_t>(n), 0.0);
        for (const auto& e : score.events) {
            if (e.hand != hand) {
                continue;
            }
            for (int t = e.onset; t < std::min(n, e.onset + kStrikeWidth); ++t) {
                const double phase = static_cast<double>(t - e.onset) / kStrikeWidth;
                arc[static_cast<std::size_t>(t)] =
                    std::max(arc[static_cast<std::size_t>(t)], std::sin(kPi * phase));
            }
        }
        for (int t = 0; t < n; ++t) {
            pos(t, 0) = x[static_cast<std::size_t>(t)];
            pos(t, 1) = kRestY - kStrikeY * arc[static_cast<std::size_t>(t)];
            pos(t, 2) = kRestZ + kStrikeZ * arc[static_cast<std::size_t>(t)];
        }

        // finger flexion: raised-cosine pulse over the event's duration on the
        // (pitch mod J) channel, with a max envelope over overlapping events
        std::vector<std::vector<double>> env(static_cast<std::size_t>(j),
                                             std::vector<double>(static_cast<std::size_t>(n), 0.0));
        for (const auto& e : score.events) {
            if (e.hand != hand) {
                continue;
            }
            const int finger = e.pitch % j;
            for (int t = e.onset; t < std::min(n, e.onset + e.duration); ++t) {
                const double phase = (t - e.onset + 1.0) / (e.duration + 1.0);
                const double pulse = kFlexAmp * 0.5 * (1.0 - std::cos(2.0 * kPi * phase));
                env[static_cast<std::size_t>(finger)][static_cast<std::size_t>(t)] =
                    std::max(env[static_cast<std::size_t>(finger)][static_cast<std::size_t>(t)], pulse);
            }
        }
        for (int t = 0; t < n; ++t) {
            for (int f = 0; f < j; ++f) {
                const double flex = env[static_cast<std::size_t>(f)][static_cast<std::size_t>(t)];
                double a0 = rest_angle(f, j) + flex;
                double a1 = 0.25 * flex;
                double a2 = -0.15 * flex;
                const std::size_t base = (static_cast<std::size_t>(t) * j + f) * 3;
                gest.data[base + 0] = std::clamp(a0, -kPi / 2, kPi / 2);
                gest.data[base + 1] = std::clamp(a1, -kPi / 2, kPi / 2);
                gest.data[base + 2] = std::clamp(a2, -kPi / 2, kPi / 2);
            }
        }
    }
    return out;
}

Clip make_clip(RngStream rng, const SynthParams& p) {
    const ToyScore score = gen_score(rng, p);
    Clip c;
    c.features = tensor_cast<float>(score_to_features(score, p.frames, p.pitches));
    MotionPair m = score_to_motion(score, p);
    c.pos_l = tensor_cast<float>(m.pos_l);
    c.pos_r = tensor_cast<float>(m.pos_r);
    c.gest_l = tensor_cast<float>(m.gest_l);
    c.gest_r = tensor_cast<float>(m.gest_r);
    return c;
}

Dataset generate_dataset(std::uint64_t seed, int clips, const SynthParams& p) {
    if (clips < 1) {
        throw std::invalid_argument("generate_dataset: need at least one clip");
    }
    Dataset ds;
    ds.seed = seed;
    ds.params = p;
    ds.train_end = static_cast<int>(clips * 7 / 10);
    ds.val_end = ds.train_end + static_cast<int>(clips / 10);
    RngStream master(seed, 900);
    ds.items.reserve(static_cast<std::size_t>(clips));
    for (int i = 0; i < clips; ++i) {
        ds.items.push_back(make_clip(master.derived(static_cast<std::uint64_t>(i)), p));
    }
    return ds;
}

std::vector<int> Dataset::split_indices(const std::string& split) const {
    std::vector<int> out;
    int lo = 0, hi = clip_count();
    if (split == "train") {
        hi = train_end;
    } else if (split == "val") {
        lo = train_end;
        hi = val_end;
    } else if (split == "test") {
        lo = val_end;
    } else if (split != "all") {
        throw std::invalid_argument("unknown split: " + split);
    }
    for (int i = lo; i < hi; ++i) {
        out.push_back(i);
    }
    return out;
}

namespace {

std::string clip_prefix(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip%05d", i);
    return buf;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
    ::mkdir(dir.c_str(), 0755);
    std::vector<NamedTensor> entries;
    entries.reserve(ds.items.size() * 5);
    for (int i = 0; i < ds.clip_count(); ++i) {
        const Clip& c = ds.items[static_cast<std::size_t>(i)];
        const std::string p = clip_prefix(i);
        entries.push_back({p + ".features", c.features});
        entries.push_back({p + ".pos-l", c.pos_l});
        entries.push_back({p + ".pos-r", c.pos_r});
        entries.push_back({p + ".gest-l", c.gest_l});
        entries.push_back({p + ".gest-r", c.gest_r});
    }
    write_container(entries, dir + "/dataset.s2c");

    std::ofstream mf(dir + "/manifest.txt");
    if (!mf) {
        throw std::runtime_error("cannot write manifest in " + dir);
    }
    mf << "seed=" << ds.seed << "\n";
    mf << "clips=" << ds.clip_count() << "\n";
    mf << "frames=" << ds.params.frames << "\n";
    mf << "joints=" << ds.params.joints << "\n";
    mf << "pitches=" << ds.params.pitches << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", ds.params.density);
    mf << "density=" << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", ds.params.coupling);
    mf << "coupling=" << buf << "\n";
    mf << "overlap=" << ds.params.overlap << "\n";
    mf << "train-end=" << ds.train_end << "\n";
    mf << "val-end=" << ds.val_end << "\n";
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    std::ifstream mf(dir + "/manifest.txt");
    if (!mf) {
        throw std::runtime_error("cannot read manifest in " + dir);
    }
    int clips = 0;
    std::string line;
    while (std::getline(mf, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            continue;
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "seed") ds.seed = std::stoull(value);
        else if (key == "clips") clips = std::stoi(value);
        else if (key == "frames") ds.params.frames = std::stoi(value);
        else if (key == "joints") ds.params.joints = std::stoi(value);
        else if (key == "pitches") ds.params.pitches = std::stoi(value);
        else if (key == "density") ds.params.density = std::stod(value);
        else if (key == "coupling") ds.params.coupling = std::stod(value);
        else if (key == "overlap") ds.params.overlap = std::stoi(value);
        else if (key == "train-end") ds.train_end = std::stoi(value);
        else if (key == "val-end") ds.val_end = std::stoi(value);
        else throw std::runtime_error("unknown manifest key: " + key);
    }

    std::vector<NamedTensor> entries = read_container(dir + "/dataset.s2c");
    if (static_cast<int>(entries.size()) != clips * 5) {
        throw std::runtime_error("dataset container entry count does not match manifest");
    }
    ds.items.resize(static_cast<std::size_t>(clips));
    for (auto& e : entries) {
        const std::size_t dot = e.name.find('.');
        if (dot == std::string::npos || e.name.substr(0, 4) != "clip") {
            throw std::runtime_error("unexpected dataset entry: " + e.name);
        }
        const int idx = std::stoi(e.name.substr(4, dot - 4));
        if (idx < 0 || idx >= clips) {
            throw std::runtime_error("dataset entry out of range: " + e.name);
        }
        Clip& c = ds.items[static_cast<std::size_t>(idx)];
        const std::string field = e.name.substr(dot + 1);
        if (field == "features") c.features = std::move(e.tensor);
        else if (field == "pos-l") c.pos_l = std::move(e.tensor);
        else if (field == "pos-r") c.pos_r = std::move(e.tensor);
        else if (field == "gest-l") c.gest_l = std::move(e.tensor);
        else if (field == "gest-r") c.gest_r = std::move(e.tensor);
        else throw std::runtime_error("unexpected dataset field: " + e.name);
    }
    return ds;
}

}  // namespace s2c
