#include "s2c/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace s2c {

namespace {

enum class FieldKind { i64, u64, f64, boolean, text };

struct FieldDef {
    const char* key;
    FieldKind kind;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_f64(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_f64(const std::string& s) {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) {
        throw std::invalid_argument("bad real value: " + s);
    }
    return v;
}

std::int64_t parse_i64(const std::string& s) {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) {
        throw std::invalid_argument("bad integer value: " + s);
    }
    return v;
}

std::uint64_t parse_u64(const std::string& s) {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) {
        throw std::invalid_argument("bad unsigned value: " + s);
    }
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") {
        return true;
    }
    if (s == "false" || s == "0") {
        return false;
    }
    throw std::invalid_argument("bad boolean value: " + s);
}

#define F_I64(keyname, member)                                                      \
    FieldDef {                                                                      \
        keyname, FieldKind::i64,                                                    \
            [](const RunConfig& c) { return std::to_string(c.member); },            \
            [](RunConfig& c, const std::string& v) { c.member = parse_i64(v); }     \
    }
#define F_U64(keyname, member)                                                      \
    FieldDef {                                                                      \
        keyname, FieldKind::u64,                                                    \
            [](const RunConfig& c) { return std::to_string(c.member); },            \
            [](RunConfig& c, const std::string& v) { c.member = parse_u64(v); }     \
    }
#define F_F64(keyname, member)                                                      \
    FieldDef {                                                                      \
        keyname, FieldKind::f64, [](const RunConfig& c) { return fmt_f64(c.member); }, \
            [](RunConfig& c, const std::string& v) { c.member = parse_f64(v); }     \
    }
#define F_BOOL(keyname, member)                                                     \
    FieldDef {                                                                      \
        keyname, FieldKind::boolean,                                                \
            [](const RunConfig& c) { return c.member ? "true" : "false"; },         \
            [](RunConfig& c, const std::string& v) { c.member = parse_bool(v); }    \
    }
#define F_TEXT(keyname, member)                                                     \
    FieldDef {                                                                      \
        keyname, FieldKind::text, [](const RunConfig& c) { return c.member; },      \
            [](RunConfig& c, const std::string& v) { c.member = v; }                \
    }

const std::vector<FieldDef>& registry() {
    static const std::vector<FieldDef> fields = {
        F_U64("data-seed", data_seed),
        F_I64("clips", clips),
        F_I64("frames", frames),
        F_I64("joints", joints),
        F_I64("pitches", pitches),
        F_F64("density", density),
        F_F64("coupling", coupling),
        F_I64("refiner-layers", refiner_layers),
        F_I64("refiner-width", refiner_width),
        F_I64("refiner-heads", refiner_heads),
        F_I64("predictor-width", predictor_width),
        F_TEXT("dims", dims),
        F_I64("heads", heads),
        F_TEXT("fusion-mode", fusion_mode),
        F_BOOL("position-sharing", position_sharing),
        F_BOOL("decoupled-noise", decoupled_noise),
        F_BOOL("fuse-all-levels", fuse_all_levels),
        F_I64("time-dim", time_dim),
        F_F64("lambda-init", lambda_init),
        F_BOOL("peer-stop-grad", peer_stop_grad),
        F_I64("timesteps", timesteps),
        F_F64("beta-start", beta_start),
        F_F64("beta-final", beta_final),
        F_TEXT("stage", stage),
        F_I64("steps", steps),
        F_I64("batch-size", batch_size),
        F_F64("learning-rate", learning_rate),
        F_F64("adam-beta1", adam_beta1),
        F_F64("adam-beta2", adam_beta2),
        F_F64("adam-eps", adam_eps),
        F_U64("train-seed", train_seed),
        F_F64("grad-clip", grad_clip),
        F_U64("sample-seed-left", sample_seed_left),
        F_U64("sample-seed-right", sample_seed_right),
        F_I64("sample-clips", sample_clips),
        F_I64("gmm-components", gmm_components),
        F_U64("metric-seed", metric_seed),
        F_I64("embed-steps", embed_steps),
        F_I64("eval-clips", eval_clips),
        F_TEXT("grid", grid),
        F_I64("ablate-seeds", ablate_seeds),
    };
    return fields;
}

#undef F_I64
#undef F_U64
#undef F_F64
#undef F_BOOL
#undef F_TEXT

}  // namespace

std::vector<int> RunConfig::parse_dims() const {
    std::vector<int> out;
    std::stringstream ss(dims);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(static_cast<int>(parse_i64(item)));
    }
    if (out.empty()) {
        throw std::invalid_argument("dims must list at least one width");
    }
    return out;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.feature_channels = static_cast<int>(pitches);
    m.refiner.layers = static_cast<int>(refiner_layers);
    m.refiner.width = static_cast<int>(refiner_width);
    m.refiner.heads = static_cast<int>(refiner_heads);
    m.predictor.width = static_cast<int>(predictor_width);
    m.denoiser.dims = parse_dims();
    m.denoiser.levels = static_cast<int>(m.denoiser.dims.size());
    m.denoiser.heads = static_cast<int>(heads);
    m.denoiser.fusion_mode = fusion_mode_from_name(fusion_mode);
    m.denoiser.position_sharing = position_sharing;
    m.denoiser.decoupled_noise = decoupled_noise;
    m.denoiser.fuse_all_levels = fuse_all_levels;
    m.denoiser.time_dim = static_cast<int>(time_dim);
    m.denoiser.joints = static_cast<int>(joints);
    m.lambda_init = lambda_init;
    m.peer_stop_grad = peer_stop_grad;
    m.finalize();
    if (frames % m.denoiser.frame_multiple() != 0) {
        throw std::invalid_argument("frames must be divisible by 2^(levels-1)");
    }
    return m;
}

DiffusionSchedule RunConfig::schedule() const {
    return linear_schedule(static_cast<int>(timesteps), beta_start, beta_final);
}

std::string config_to_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : registry()) {
        out += f.key;
        out += '=';
        out += f.get(cfg);
        out += '\n';
    }
    return out;
}

RunConfig config_from_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + " has no '='");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        bool found = false;
        for (const auto& f : registry()) {
            if (key == f.key) {
                f.set(cfg, value);
                found = true;
                break;
            }
        }
        if (!found) {
            throw std::invalid_argument("unknown config key: " + key);
        }
    }
    return cfg;
}

std::uint64_t config_hash(const RunConfig& cfg) {
    std::vector<std::string> lines;
    for (const auto& f : registry()) {
        lines.push_back(std::string(f.key) + "=" + f.get(cfg));
    }
    std::sort(lines.begin(), lines.end());
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& l : lines) {
        for (char c : l) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        h ^= '\n';
        h *= 1099511628211ULL;
    }
    return h;
}

std::string config_hash_hex(const RunConfig& cfg) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
    return buf;
}

void write_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream f(path);
    if (!f) {
        throw std::runtime_error("cannot write config: " + path);
    }
    f << "# resolved run configuration (hash " << config_hash_hex(cfg) << ")\n";
    f << config_to_text(cfg);
    f.flush();
    if (!f) {
        throw std::runtime_error("short config write: " + path);
    }
}

RunConfig read_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("cannot read config: " + path);
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_text(ss.str());
}

}  // namespace s2c
