// Command-line workbench: dataset generation, two-stage training, sampling,
// evaluation, the ablation grid and the fast invariant suite. Flags are
// long-form kebab-case and mirror the run-config keys one to one; every
// command writes its resolved config and hash next to its outputs.
// Exit codes: 0 success, 1 check/runtime failure, 2 usage or asset error.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "s2c/config.hpp"
#include "s2c/dataio.hpp"
#include "s2c/metrics.hpp"
#include "s2c/model.hpp"
#include "s2c/sampler.hpp"
#include "s2c/synthdata.hpp"
#include "s2c/threading.hpp"
#include "s2c/trainer.hpp"
#include "s2c/verify.hpp"

namespace fs = std::filesystem;
using namespace s2c;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_exists(const std::string& path, const char* what) {
    if (!fs::exists(path)) {
        throw UsageError(std::string(what) + " not found: " + path);
    }
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

std::string clip_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip%05d", i);
    return buf;
}

std::uint64_t clip_seed(std::uint64_t base, int clip_index) {
    return RngStream::mix64(base + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(clip_index) + 1));
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) {
        throw std::runtime_error("cannot write " + path);
    }
    f << text;
}

SynthParams synth_params(const RunConfig& cfg) {
    SynthParams p;
    p.frames = static_cast<int>(cfg.frames);
    p.joints = static_cast<int>(cfg.joints);
    p.pitches = static_cast<int>(cfg.pitches);
    p.density = cfg.density;
    p.coupling = cfg.coupling;
    return p;
}

// dataset geometry always wins over command-line geometry
void adopt_dataset_geometry(RunConfig& cfg, const Dataset& ds) {
    cfg.data_seed = ds.seed;
    cfg.clips = ds.clip_count();
    cfg.frames = ds.params.frames;
    cfg.joints = ds.params.joints;
    cfg.pitches = ds.params.pitches;
    cfg.density = ds.params.density;
    cfg.coupling = ds.params.coupling;
}

// --- flag groups (names mirror run-config keys exactly) -------------------------

void add_dataset_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--data-seed", cfg.data_seed);
    cmd->add_option("--clips", cfg.clips);
    cmd->add_option("--frames", cfg.frames);
    cmd->add_option("--joints", cfg.joints);
    cmd->add_option("--pitches", cfg.pitches);
    cmd->add_option("--density", cfg.density);
    cmd->add_option("--coupling", cfg.coupling);
}

void add_model_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--refiner-layers", cfg.refiner_layers);
    cmd->add_option("--refiner-width", cfg.refiner_width);
    cmd->add_option("--refiner-heads", cfg.refiner_heads);
    cmd->add_option("--predictor-width", cfg.predictor_width);
    cmd->add_option("--dims", cfg.dims);
    cmd->add_option("--heads", cfg.heads);
    cmd->add_option("--fusion-mode", cfg.fusion_mode)
        ->check(CLI::IsMember({"none", "concat", "cross-attention", "hcaa"}));
    cmd->add_option("--position-sharing", cfg.position_sharing);
    cmd->add_option("--decoupled-noise", cfg.decoupled_noise);
    cmd->add_option("--fuse-all-levels", cfg.fuse_all_levels);
    cmd->add_option("--time-dim", cfg.time_dim);
    cmd->add_option("--lambda-init", cfg.lambda_init);
    cmd->add_option("--peer-stop-grad", cfg.peer_stop_grad);
}

void add_schedule_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--timesteps", cfg.timesteps);
    cmd->add_option("--beta-start", cfg.beta_start);
    cmd->add_option("--beta-final", cfg.beta_final);
}

void add_train_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--steps", cfg.steps);
    cmd->add_option("--batch-size", cfg.batch_size);
    cmd->add_option("--learning-rate", cfg.learning_rate);
    cmd->add_option("--adam-beta1", cfg.adam_beta1);
    cmd->add_option("--adam-beta2", cfg.adam_beta2);
    cmd->add_option("--adam-eps", cfg.adam_eps);
    cmd->add_option("--train-seed", cfg.train_seed);
    cmd->add_option("--grad-clip", cfg.grad_clip);
}

void add_sample_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--sample-seed-left", cfg.sample_seed_left);
    cmd->add_option("--sample-seed-right", cfg.sample_seed_right);
    cmd->add_option("--sample-clips", cfg.sample_clips);
}

void add_metric_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--gmm-components", cfg.gmm_components);
    cmd->add_option("--metric-seed", cfg.metric_seed);
    cmd->add_option("--embed-steps", cfg.embed_steps);
    cmd->add_option("--eval-clips", cfg.eval_clips);
}

// --- command bodies --------------------------------------------------------------

int cmd_gen_data(RunConfig cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    Dataset ds = generate_dataset(cfg.data_seed, static_cast<int>(cfg.clips), synth_params(cfg));
    save_dataset(ds, out_dir);
    write_config(cfg, out_dir + "/run-config.txt");
    std::cerr << "wrote " << ds.clip_count() << " clips to " << out_dir << " (hash "
              << config_hash_hex(cfg) << ")\n";
    return 0;
}

int cmd_train_position(RunConfig cfg, const std::string& dataset_dir, const std::string& out_dir) {
    require_exists(dataset_dir + "/manifest.txt", "dataset");
    Dataset ds = load_dataset(dataset_dir);
    adopt_dataset_geometry(cfg, ds);
    cfg.stage = "position";
    ensure_dir(out_dir);

    ModelT<float> model = make_model<float>(cfg.model_config(), cfg.train_seed);
    TrainConfig tc = train_config_from(cfg);
    const auto rows = train_position_stage(model, ds, tc);
    save_checkpoint(model, out_dir + "/predictors.s2c", /*predictors_only=*/true);
    write_text(out_dir + "/loss-position.csv", loss_rows_to_csv(rows));
    write_config(cfg, out_dir + "/run-config.txt");
    std::cerr << "stage-1 final loss " << rows.back().loss_l + rows.back().loss_r << " -> " << out_dir
              << "\n";
    return 0;
}

int cmd_train_motion(RunConfig cfg, const std::string& dataset_dir, const std::string& predictors,
                     const std::string& out_dir) {
    require_exists(dataset_dir + "/manifest.txt", "dataset");
    require_exists(predictors, "predictor checkpoint");
    Dataset ds = load_dataset(dataset_dir);
    adopt_dataset_geometry(cfg, ds);
    cfg.stage = "motion";
    ensure_dir(out_dir);

    ModelT<float> model = make_model<float>(cfg.model_config(), cfg.train_seed);
    load_checkpoint(model, predictors, /*predictors_only=*/true);
    const DiffusionSchedule sched = cfg.schedule();
    TrainConfig tc = train_config_from(cfg);
    const auto rows = train_motion_stage(model, ds, sched, tc);
    save_checkpoint(model, out_dir + "/motion.s2c", /*predictors_only=*/false);
    write_text(out_dir + "/loss-motion.csv", loss_rows_to_csv(rows));
    write_config(cfg, out_dir + "/run-config.txt");
    std::cerr << "stage-2 final loss " << rows.back().loss_l + rows.back().loss_r << " -> " << out_dir
              << "\n";
    return 0;
}

int cmd_sample(RunConfig cli_cfg, const std::string& dataset_dir, const std::string& checkpoint_dir,
               const std::string& split, const std::string& out_dir) {
    require_exists(dataset_dir + "/manifest.txt", "dataset");
    require_exists(checkpoint_dir + "/motion.s2c", "motion checkpoint");
    require_exists(checkpoint_dir + "/run-config.txt", "checkpoint config");
    Dataset ds = load_dataset(dataset_dir);

    // model and schedule come from the training run's resolved config; only
    // the sampling keys are taken from the command line
    RunConfig cfg = read_config(checkpoint_dir + "/run-config.txt");
    cfg.sample_seed_left = cli_cfg.sample_seed_left;
    cfg.sample_seed_right = cli_cfg.sample_seed_right;
    cfg.sample_clips = cli_cfg.sample_clips;
    adopt_dataset_geometry(cfg, ds);
    ensure_dir(out_dir);

    ModelT<float> model = make_model<float>(cfg.model_config(), cfg.train_seed);
    load_checkpoint(model, checkpoint_dir + "/motion.s2c", /*predictors_only=*/false);
    const DiffusionSchedule sched = cfg.schedule();

    std::vector<int> indices = ds.split_indices(split);
    if (cfg.sample_clips > 0 && static_cast<int>(indices.size()) > cfg.sample_clips) {
        indices.resize(static_cast<std::size_t>(cfg.sample_clips));
    }
    std::vector<NamedTensor> entries(indices.size() * 4);
    const int workers = worker_count(0);
    parallel_for(static_cast<int>(indices.size()), workers, [&](int k) {
        const int idx = indices[static_cast<std::size_t>(k)];
        const Clip& clip = ds.items[static_cast<std::size_t>(idx)];
        const auto t0 = std::chrono::steady_clock::now();
        MotionSample<float> sample =
            generate_motion(model, clip.features, sched, clip_seed(cfg.sample_seed_left, idx),
                            clip_seed(cfg.sample_seed_right, idx));
        // predicted wrist trajectories ride along for the PD metric
        GraphT<float> g(false);
        VarT<float> f = g.input(clip.features);
        Tensor32 pos_l = model.left.predictor(g, f).val();
        Tensor32 pos_r = model.right.predictor(g, f).val();
        const auto t1 = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        const std::string base = clip_name(idx);
        entries[static_cast<std::size_t>(k) * 4 + 0] = {base + ".gest-l", sample.theta_l};
        entries[static_cast<std::size_t>(k) * 4 + 1] = {base + ".gest-r", sample.theta_r};
        entries[static_cast<std::size_t>(k) * 4 + 2] = {base + ".pos-l", pos_l};
        entries[static_cast<std::size_t>(k) * 4 + 3] = {base + ".pos-r", pos_r};
        std::fprintf(stderr, "sampled %s in %.1f ms\n", base.c_str(), ms);
    });
    write_container(entries, out_dir + "/samples.s2c");
    write_config(cfg, out_dir + "/run-config.txt");
    std::cerr << "wrote " << indices.size() << " sampled clips to " << out_dir << "\n";
    return 0;
}

struct EvalResult {
    double fgd_l = 0, fgd_r = 0, wgd_l = 0, wgd_r = 0;
    double pd_l = 0, pd_r = 0, pd_both = 0;
    double smooth_l = 0, smooth_r = 0;
    double fid_value = 0;
};

MotionEmbedder obtain_embedder(const RunConfig& cfg, const Dataset& ds, const std::string& path) {
    if (fs::exists(path)) {
        MotionEmbedder emb = load_embedder(path);
        if (emb.trained) {
            return emb;
        }
    }
    std::vector<GesturePair> train_set;
    for (int i : ds.split_indices("train")) {
        train_set.push_back(
            {ds.items[static_cast<std::size_t>(i)].gest_l, ds.items[static_cast<std::size_t>(i)].gest_r});
    }
    MotionEmbedder emb =
        MotionEmbedder::make(2 * ds.params.joints * 3, 32, 16, cfg.metric_seed);
    train_embedder(emb, train_set, static_cast<int>(cfg.embed_steps), 2e-3, cfg.metric_seed);
    save_embedder(emb, path);
    return emb;
}

EvalResult evaluate_samples(const RunConfig& cfg, const Dataset& ds,
                            const std::vector<NamedTensor>& sample_entries,
                            const MotionEmbedder& emb) {
    std::vector<Tensor32> pred_gl, pred_gr, pred_pl, pred_pr;
    std::vector<Tensor32> gt_gl, gt_gr, gt_pl, gt_pr;
    std::vector<GesturePair> pred_pairs, gt_pairs;
    std::vector<int> indices;
    for (const auto& e : sample_entries) {
        if (e.name.size() > 9 && e.name.compare(9, std::string::npos, ".gest-l") == 0) {
            indices.push_back(std::stoi(e.name.substr(4, 5)));
        }
    }
    std::sort(indices.begin(), indices.end());
    if (cfg.eval_clips > 0 && static_cast<int>(indices.size()) > cfg.eval_clips) {
        indices.resize(static_cast<std::size_t>(cfg.eval_clips));
    }
    auto find = [&](const std::string& name) -> const Tensor32& {
        for (const auto& e : sample_entries) {
            if (e.name == name) {
                return e.tensor;
            }
        }
        throw std::runtime_error("sample container is missing " + name);
    };
    for (int idx : indices) {
        const std::string base = clip_name(idx);
        const Clip& gt = ds.items[static_cast<std::size_t>(idx)];
        pred_gl.push_back(find(base + ".gest-l"));
        pred_gr.push_back(find(base + ".gest-r"));
        pred_pl.push_back(find(base + ".pos-l"));
        pred_pr.push_back(find(base + ".pos-r"));
        gt_gl.push_back(gt.gest_l);
        gt_gr.push_back(gt.gest_r);
        gt_pl.push_back(gt.pos_l);
        gt_pr.push_back(gt.pos_r);
        pred_pairs.push_back({pred_gl.back(), pred_gr.back()});
        gt_pairs.push_back({gt.gest_l, gt.gest_r});
    }
    if (indices.empty()) {
        throw std::runtime_error("no sampled clips to evaluate");
    }
    EvalResult r;
    r.fgd_l = fgd(pred_gl, gt_gl);
    r.fgd_r = fgd(pred_gr, gt_gr);
    r.wgd_l = wgd(pred_gl, gt_gl, static_cast<int>(cfg.gmm_components), cfg.metric_seed);
    r.wgd_r = wgd(pred_gr, gt_gr, static_cast<int>(cfg.gmm_components), cfg.metric_seed);
    r.pd_l = pd_single(pred_pl, gt_pl);
    r.pd_r = pd_single(pred_pr, gt_pr);
    r.pd_both = pd(pred_pl, pred_pr, gt_pl, gt_pr);
    r.smooth_l = smoothness_set(pred_gl, gt_gl);
    r.smooth_r = smoothness_set(pred_gr, gt_gr);
    r.fid_value = fid(pred_pairs, gt_pairs, emb);
    return r;
}

std::string eval_csv(const EvalResult& r, const RunConfig& cfg) {
    std::ostringstream os;
    const std::string hash = config_hash_hex(cfg);
    os << "metric,hand,value,config_hash,seed\n";
    auto row = [&](const char* metric, const char* hand, double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        os << metric << "," << hand << "," << buf << "," << hash << "," << cfg.metric_seed << "\n";
    };
    row("fgd", "left", r.fgd_l);
    row("fgd", "right", r.fgd_r);
    row("wgd", "left", r.wgd_l);
    row("wgd", "right", r.wgd_r);
    row("pd", "left", r.pd_l);
    row("pd", "right", r.pd_r);
    row("pd", "both", r.pd_both);
    row("smoothness", "left", r.smooth_l);
    row("smoothness", "right", r.smooth_r);
    row("fid", "both", r.fid_value);
    return os.str();
}

int cmd_evaluate(RunConfig cli_cfg, const std::string& dataset_dir, const std::string& samples_dir,
                 const std::string& embedder_path, const std::string& out_dir) {
    require_exists(dataset_dir + "/manifest.txt", "dataset");
    require_exists(samples_dir + "/samples.s2c", "samples");
    Dataset ds = load_dataset(dataset_dir);

    RunConfig cfg = fs::exists(samples_dir + "/run-config.txt")
                        ? read_config(samples_dir + "/run-config.txt")
                        : cli_cfg;
    cfg.gmm_components = cli_cfg.gmm_components;
    cfg.metric_seed = cli_cfg.metric_seed;
    cfg.embed_steps = cli_cfg.embed_steps;
    cfg.eval_clips = cli_cfg.eval_clips;
    adopt_dataset_geometry(cfg, ds);
    ensure_dir(out_dir);

    const std::string emb_path = embedder_path.empty() ? dataset_dir + "/embedder.s2c" : embedder_path;
    MotionEmbedder emb = obtain_embedder(cfg, ds, emb_path);
    const std::vector<NamedTensor> entries = read_container(samples_dir + "/samples.s2c");
    const EvalResult r = evaluate_samples(cfg, ds, entries, emb);
    write_text(out_dir + "/metrics.csv", eval_csv(r, cfg));
    write_config(cfg, out_dir + "/run-config.txt");
    std::cerr << "metrics -> " << out_dir << "/metrics.csv\n";
    return 0;
}

struct AblateCell {
    bool dn = true, ps = true;
    std::string fi = "hcaa";
};

std::vector<AblateCell> parse_grid(const std::string& grid) {
    if (grid == "table2") {
        return {
            {false, true, "hcaa"}, {true, false, "none"},            {true, true, "none"},
            {true, true, "concat"}, {true, true, "cross-attention"}, {true, true, "hcaa"},
        };
    }
    if (grid == "full") {
        std::vector<AblateCell> cells;
        for (bool dn : {false, true}) {
            for (bool ps : {false, true}) {
                for (const char* fi : {"none", "concat", "cross-attention", "hcaa"}) {
                    cells.push_back({dn, ps, fi});
                }
            }
        }
        return cells;
    }
    // explicit list: "dn=1,ps=1,fi=hcaa;dn=0,ps=1,fi=none"
    std::vector<AblateCell> cells;
    std::stringstream ss(grid);
    std::string cell_text;
    while (std::getline(ss, cell_text, ';')) {
        AblateCell cell;
        std::stringstream cs(cell_text);
        std::string kv;
        while (std::getline(cs, kv, ',')) {
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos) {
                throw UsageError("bad grid cell spec: " + cell_text);
            }
            const std::string key = kv.substr(0, eq);
            const std::string value = kv.substr(eq + 1);
            if (key == "dn") {
                cell.dn = value == "1" || value == "true";
            } else if (key == "ps") {
                cell.ps = value == "1" || value == "true";
            } else if (key == "fi") {
                cell.fi = value;
            } else {
                throw UsageError("unknown grid key: " + key);
            }
        }
        cells.push_back(cell);
    }
    if (cells.empty()) {
        throw UsageError("grid spec produced no cells");
    }
    return cells;
}

int cmd_ablate(RunConfig base, const std::string& dataset_dir, const std::string& out_dir) {
    require_exists(dataset_dir + "/manifest.txt", "dataset");
    Dataset ds = load_dataset(dataset_dir);
    adopt_dataset_geometry(base, ds);
    ensure_dir(out_dir);

    const std::vector<AblateCell> cells = parse_grid(base.grid);
    const int seeds = static_cast<int>(base.ablate_seeds);
    MotionEmbedder emb = obtain_embedder(base, ds, dataset_dir + "/embedder.s2c");

    // stage 1 does not depend on any ablation axis: train once per seed
    std::vector<std::string> predictor_paths;
    for (int s = 0; s < seeds; ++s) {
        RunConfig cfg = base;
        cfg.stage = "position";
        cfg.train_seed = base.train_seed + static_cast<std::uint64_t>(s);
        const std::string dir = out_dir + "/stage1-seed" + std::to_string(cfg.train_seed);
        ensure_dir(dir);
        ModelT<float> model = make_model<float>(cfg.model_config(), cfg.train_seed);
        TrainConfig tc = train_config_from(cfg);
        const auto rows = train_position_stage(model, ds, tc);
        save_checkpoint(model, dir + "/predictors.s2c", true);
        write_text(dir + "/loss-position.csv", loss_rows_to_csv(rows));
        write_config(cfg, dir + "/run-config.txt");
        predictor_paths.push_back(dir + "/predictors.s2c");
    }

    struct CellRun {
        AblateCell cell;
        std::uint64_t seed;
        std::string status = "ok";
        std::string hash;
        EvalResult r;
    };
    std::vector<CellRun> runs(cells.size() * static_cast<std::size_t>(seeds));
    const int workers = worker_count(0);
    parallel_for(static_cast<int>(runs.size()), workers, [&](int k) {
        const int cell_idx = k / seeds;
        const int seed_idx = k % seeds;
        CellRun& out = runs[static_cast<std::size_t>(k)];
        out.cell = cells[static_cast<std::size_t>(cell_idx)];
        out.seed = base.train_seed + static_cast<std::uint64_t>(seed_idx);
        RunConfig cfg = base;
        cfg.stage = "motion";
        cfg.decoupled_noise = out.cell.dn;
        cfg.position_sharing = out.cell.ps;
        cfg.fusion_mode = out.cell.fi;
        cfg.train_seed = out.seed;
        // a cell is one train+sample+evaluate run; the grid spec is not part
        // of its identity, so its hash matches the equivalent manual run
        cfg.grid = RunConfig{}.grid;
        cfg.ablate_seeds = RunConfig{}.ablate_seeds;
        out.hash = config_hash_hex(cfg);
        const std::string dir = out_dir + "/cell-dn" + std::to_string(out.cell.dn ? 1 : 0) + "-ps" +
                                std::to_string(out.cell.ps ? 1 : 0) + "-" + out.cell.fi + "-seed" +
                                std::to_string(cfg.train_seed);
        try {
            ensure_dir(dir);
            ModelT<float> model = make_model<float>(cfg.model_config(), cfg.train_seed);
            load_checkpoint(model, predictor_paths[static_cast<std::size_t>(seed_idx)], true);
            const DiffusionSchedule sched = cfg.schedule();
            TrainConfig tc = train_config_from(cfg);
            tc.workers = 1;  // cells already fan out
            const auto rows = train_motion_stage(model, ds, sched, tc);
            write_text(dir + "/loss-motion.csv", loss_rows_to_csv(rows));
            save_checkpoint(model, dir + "/motion.s2c", false);
            write_config(cfg, dir + "/run-config.txt");

            std::vector<int> indices = ds.split_indices("test");
            if (cfg.sample_clips > 0 && static_cast<int>(indices.size()) > cfg.sample_clips) {
                indices.resize(static_cast<std::size_t>(cfg.sample_clips));
            }
            std::vector<NamedTensor> entries;
            for (int idx : indices) {
                const Clip& clip = ds.items[static_cast<std::size_t>(idx)];
                MotionSample<float> sample =
                    generate_motion(model, clip.features, sched, clip_seed(cfg.sample_seed_left, idx),
                                    clip_seed(cfg.sample_seed_right, idx));
                GraphT<float> g(false);
                VarT<float> f = g.input(clip.features);
                const std::string bn = clip_name(idx);
                entries.push_back({bn + ".gest-l", sample.theta_l});
                entries.push_back({bn + ".gest-r", sample.theta_r});
                entries.push_back({bn + ".pos-l", model.left.predictor(g, f).val()});
                entries.push_back({bn + ".pos-r", model.right.predictor(g, f).val()});
            }
            write_container(entries, dir + "/samples.s2c");
            out.r = evaluate_samples(cfg, ds, entries, emb);
            write_text(dir + "/metrics.csv", eval_csv(out.r, cfg));
        } catch (const std::exception& e) {
            out.status = std::string("failed: ") + e.what();
        }
    });

    std::ostringstream table;
    table << "dn,ps,fi,seed,fgd_right,wgd_right,pd_right,smooth_right,fgd_left,wgd_left,pd_left,"
             "smooth_left,fid,status,config_hash\n";
    for (const auto& run : runs) {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "%d,%d,%s,%llu,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%s,%s\n",
                      run.cell.dn ? 1 : 0, run.cell.ps ? 1 : 0, run.cell.fi.c_str(),
                      static_cast<unsigned long long>(run.seed), run.r.fgd_r, run.r.wgd_r, run.r.pd_r,
                      run.r.smooth_r, run.r.fgd_l, run.r.wgd_l, run.r.pd_l, run.r.smooth_l,
                      run.r.fid_value, run.status.c_str(), run.hash.c_str());
        table << buf;
    }
    write_text(out_dir + "/ablate.csv", table.str());

    // per-cell mean and spread (max - min) over seeds
    std::ostringstream summary;
    summary << "dn,ps,fi,metric,mean,spread\n";
    const char* metric_names[] = {"fgd_right", "wgd_right", "pd_right", "smooth_right", "fgd_left",
                                  "wgd_left",  "pd_left",   "smooth_left", "fid"};
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (int mi = 0; mi < 9; ++mi) {
            double mn = 1e300, mx = -1e300, acc = 0;
            int count = 0;
            for (int s = 0; s < seeds; ++s) {
                const CellRun& run = runs[c * static_cast<std::size_t>(seeds) + static_cast<std::size_t>(s)];
                if (run.status != "ok") {
                    continue;
                }
                const double vals[] = {run.r.fgd_r,  run.r.wgd_r,    run.r.pd_r,
                                       run.r.smooth_r, run.r.fgd_l,  run.r.wgd_l,
                                       run.r.pd_l,   run.r.smooth_l, run.r.fid_value};
                const double v = vals[mi];
                mn = std::min(mn, v);
                mx = std::max(mx, v);
                acc += v;
                ++count;
            }
            char buf[256];
            if (count > 0) {
                std::snprintf(buf, sizeof(buf), "%d,%d,%s,%s,%.6g,%.6g\n", cells[c].dn ? 1 : 0,
                              cells[c].ps ? 1 : 0, cells[c].fi.c_str(), metric_names[mi], acc / count,
                              mx - mn);
            } else {
                std::snprintf(buf, sizeof(buf), "%d,%d,%s,%s,nan,nan\n", cells[c].dn ? 1 : 0,
                              cells[c].ps ? 1 : 0, cells[c].fi.c_str(), metric_names[mi]);
            }
            summary << buf;
        }
    }
    write_text(out_dir + "/ablate-summary.csv", summary.str());
    write_config(base, out_dir + "/run-config.txt");

    int failed = 0;
    for (const auto& run : runs) {
        if (run.status != "ok") {
            std::cerr << "cell dn=" << run.cell.dn << " ps=" << run.cell.ps << " fi=" << run.cell.fi
                      << " seed=" << run.seed << " " << run.status << "\n";
            ++failed;
        }
    }
    std::cerr << "ablate: " << runs.size() - static_cast<std::size_t>(failed) << "/" << runs.size()
              << " cells ok -> " << out_dir << "\n";
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-stream gesture diffusion workbench"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string out_dir, dataset_dir, predictors_path, checkpoint_dir, samples_dir, embedder_path;
    std::string split = "test";

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--out", out_dir)->required();
    add_dataset_flags(gen, cfg);

    CLI::App* tpos = app.add_subcommand("train-position", "stage 1: train the position predictors");
    tpos->add_option("--dataset", dataset_dir)->required();
    tpos->add_option("--out", out_dir)->required();
    add_model_flags(tpos, cfg);
    add_schedule_flags(tpos, cfg);
    add_train_flags(tpos, cfg);

    CLI::App* tmot = app.add_subcommand("train-motion", "stage 2: train the dual-stream denoisers");
    tmot->add_option("--dataset", dataset_dir)->required();
    tmot->add_option("--predictors", predictors_path)->required();
    tmot->add_option("--out", out_dir)->required();
    add_model_flags(tmot, cfg);
    add_schedule_flags(tmot, cfg);
    add_train_flags(tmot, cfg);

    CLI::App* smp = app.add_subcommand("sample", "generate gestures with a trained checkpoint");
    smp->add_option("--dataset", dataset_dir)->required();
    smp->add_option("--checkpoint-dir", checkpoint_dir)->required();
    smp->add_option("--out", out_dir)->required();
    smp->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test", "all"}));
    add_sample_flags(smp, cfg);

    CLI::App* ev = app.add_subcommand("evaluate", "compute the metric suite on sampled gestures");
    ev->add_option("--dataset", dataset_dir)->required();
    ev->add_option("--samples", samples_dir)->required();
    ev->add_option("--out", out_dir)->required();
    ev->add_option("--embedder", embedder_path);
    add_metric_flags(ev, cfg);

    CLI::App* ab = app.add_subcommand("ablate", "train/sample/evaluate an ablation grid");
    ab->add_option("--dataset", dataset_dir)->required();
    ab->add_option("--out", out_dir)->required();
    ab->add_option("--grid", cfg.grid);
    ab->add_option("--ablate-seeds", cfg.ablate_seeds);
    add_model_flags(ab, cfg);
    add_schedule_flags(ab, cfg);
    add_train_flags(ab, cfg);
    add_sample_flags(ab, cfg);
    add_metric_flags(ab, cfg);

    CLI::App* ver = app.add_subcommand("verify", "run the fast invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_data(cfg, out_dir);
        }
        if (tpos->parsed()) {
            return cmd_train_position(cfg, dataset_dir, out_dir);
        }
        if (tmot->parsed()) {
            return cmd_train_motion(cfg, dataset_dir, predictors_path, out_dir);
        }
        if (smp->parsed()) {
            return cmd_sample(cfg, dataset_dir, checkpoint_dir, split, out_dir);
        }
        if (ev->parsed()) {
            return cmd_evaluate(cfg, dataset_dir, samples_dir, embedder_path, out_dir);
        }
        if (ab->parsed()) {
            return cmd_ablate(cfg, dataset_dir, out_dir);
        }
        if (ver->parsed()) {
            return run_verify(std::cout) == 0 ? 0 : 1;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ContainerError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind == ContainerError::Kind::io ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
