#pragma once

// Flat run configuration. Every key is kebab-case and maps 1:1 onto a CLI
// flag; the canonical text form (sorted keys) feeds a stable 64-bit hash
// that stamps every artifact a run produces.

#include <cstdint>
#include <string>
#include <vector>

#include "s2c/model.hpp"
#include "s2c/schedule.hpp"

namespace s2c {

struct RunConfig {
    // dataset
    std::uint64_t data_seed = 7;
    std::int64_t clips = 512;
    std::int64_t frames = 32;
    std::int64_t joints = 6;
    std::int64_t pitches = 16;
    double density = 0.25;   // events per frame
    double coupling = 0.3;   // fraction of events mirrored on the other hand

    // model
    std::int64_t refiner_layers = 2;
    std::int64_t refiner_width = 16;
    std::int64_t refiner_heads = 2;
    std::int64_t predictor_width = 32;
    std::string dims = "32,64";
    std::int64_t heads = 2;
    std::string fusion_mode = "hcaa";
    bool position_sharing = true;
    bool decoupled_noise = true;
    bool fuse_all_levels = false;
    std::int64_t time_dim = 32;
    double lambda_init = 0.78;
    bool peer_stop_grad = true;

    // diffusion schedule
    std::int64_t timesteps = 200;
    double beta_start = 1e-4;
    double beta_final = 0.02;

    // training
    std::string stage = "motion";
    std::int64_t steps = 1500;
    std::int64_t batch_size = 16;
    double learning_rate = 2.5e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t train_seed = 7;
    double grad_clip = 0.0;  // 0 disables clipping

    // sampling
    std::uint64_t sample_seed_left = 7;
    std::uint64_t sample_seed_right = 8;
    std::int64_t sample_clips = 0;  // 0 = whole split

    // metrics
    std::int64_t gmm_components = 8;
    std::uint64_t metric_seed = 7;
    std::int64_t embed_steps = 400;
    std::int64_t eval_clips = 0;  // 0 = whole split

    // ablation
    std::string grid = "table2";
    std::int64_t ablate_seeds = 3;

    std::vector<int> parse_dims() const;
    ModelConfig model_config() const;
    DiffusionSchedule schedule() const;
};

// canonical text form: "key=value" lines in registry order
std::string config_to_text(const RunConfig& cfg);
// strict parse; unknown keys and malformed values are errors
RunConfig config_from_text(const std::string& text);
// FNV-1a over the sorted canonical lines
std::uint64_t config_hash(const RunConfig& cfg);
std::string config_hash_hex(const RunConfig& cfg);

void write_config(const RunConfig& cfg, const std::string& path);
RunConfig read_config(const std::string& path);

}  // namespace s2c
