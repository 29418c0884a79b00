#include "s2c/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "s2c/dataio.hpp"
#include "s2c/threading.hpp"

namespace s2c {

TrainConfig train_config_from(const RunConfig& cfg) {
    TrainConfig t;
    t.stage = cfg.stage;
    t.steps = static_cast<int>(cfg.steps);
    t.batch_size = static_cast<int>(cfg.batch_size);
    t.learning_rate = cfg.learning_rate;
    t.adam_beta1 = cfg.adam_beta1;
    t.adam_beta2 = cfg.adam_beta2;
    t.adam_eps = cfg.adam_eps;
    t.seed = cfg.train_seed;
    t.grad_clip = cfg.grad_clip;
    t.workers = worker_count(0);
    t.validate();
    return t;
}

void adam_step(const std::vector<ParamPtr<float>>& params, AdamState& state, const TrainConfig& cfg) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p->value.shape, 0.0f);
            state.v.emplace_back(p->value.shape, 0.0f);
        }
    }
    if (state.m.size() != params.size()) {
        throw std::logic_error("adam_step: parameter group changed size");
    }
    state.step += 1;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    double clip_scale = 1.0;
    if (cfg.grad_clip > 0.0) {
        double norm2 = 0.0;
        for (const auto& p : params) {
            for (float g : p->grad.data) {
                norm2 += static_cast<double>(g) * g;
            }
        }
        const double norm = std::sqrt(norm2);
        if (norm > cfg.grad_clip) {
            clip_scale = cfg.grad_clip / norm;
        }
    }

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < p.value.data.size(); ++k) {
            const double g = static_cast<double>(p.grad.data[k]) * clip_scale;
            if (!std::isfinite(g)) {
                throw std::runtime_error("adam_step: non-finite gradient in " + p.name);
            }
            const double mk = b1 * m.data[k] + (1.0 - b1) * g;
            const double vk = b2 * v.data[k] + (1.0 - b2) * g * g;
            m.data[k] = static_cast<float>(mk);
            v.data[k] = static_cast<float>(vk);
            const double mhat = mk / bc1;
            const double vhat = vk / bc2;
            p.value.data[k] -=
                static_cast<float>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps));
        }
        p.zero_grad();
    }
}

std::string loss_rows_to_csv(const std::vector<LossRow>& rows) {
    std::ostringstream os;
    os << "step,stage,loss_l,loss_r\n";
    for (const auto& r : rows) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%lld,%s,%.10g,%.10g\n", r.step, r.stage.c_str(), r.loss_l,
                      r.loss_r);
        os << buf;
    }
    return os.str();
}

namespace {

// epoch-shuffled train indices; reproducible from the seed alone
struct BatchFeed {
    std::vector<int> order;
    std::size_t cursor = 0;
    RngStream shuffle_rng;

    BatchFeed(const Dataset& ds, std::uint64_t seed) : shuffle_rng(seed, 501) {
        order = ds.split_indices("train");
        reshuffle();
    }
    void reshuffle() {
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(shuffle_rng.below(i));
            std::swap(order[i - 1], order[j]);
        }
        cursor = 0;
    }
    std::vector<int> next(int batch) {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(batch));
        for (int k = 0; k < batch; ++k) {
            if (cursor >= order.size()) {
                reshuffle();
            }
            out.push_back(order[cursor++]);
        }
        return out;
    }
};

Tensor32 flat_gestures(const Tensor32& gest) {
    // N x J x 3 view as N x (J*3); same row-major payload
    return Tensor32(Shape{gest.shape[0], gest.shape[1] * gest.shape[2]}, gest.data);
}

}  // namespace

RngStream stage2_draw_stream(std::uint64_t seed, long long step, int item, int purpose) {
    RngStream base(seed, 7000 + static_cast<std::uint64_t>(purpose));
    return base.derived(static_cast<std::uint64_t>(step) * 100003ULL + static_cast<std::uint64_t>(item));
}

std::vector<LossRow> train_position_stage(ModelT<float>& model, const Dataset& ds,
                                          const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.stage != "position") {
        throw std::invalid_argument("train_position_stage: config stage must be 'position'");
    }
    BatchFeed feed(ds, cfg.seed);
    std::vector<ParamPtr<float>> group_l = model.predictor_params(Side::left);
    std::vector<ParamPtr<float>> group_r = model.predictor_params(Side::right);
    AdamState adam_l, adam_r;
    std::vector<LossRow> rows;
    rows.reserve(static_cast<std::size_t>(cfg.steps));

    for (int step = 0; step < cfg.steps; ++step) {
        const std::vector<int> batch = feed.next(cfg.batch_size);
        const float inv_b = 1.0f / static_cast<float>(cfg.batch_size);
        std::vector<GraphT<float>> graphs;
        graphs.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            graphs.emplace_back(true);
        }
        std::vector<double> loss_l(batch.size()), loss_r(batch.size());
        parallel_for(static_cast<int>(batch.size()), cfg.workers, [&](int i) {
            const Clip& clip = ds.items[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])];
            GraphT<float>& g = graphs[static_cast<std::size_t>(i)];
            VarT<float> f = g.input(clip.features);
            VarT<float> ll = mse(model.left.predictor(g, f), g.input(clip.pos_l));
            VarT<float> lr = mse(model.right.predictor(g, f), g.input(clip.pos_r));
            loss_l[static_cast<std::size_t>(i)] = ll.val().data[0];
            loss_r[static_cast<std::size_t>(i)] = lr.val().data[0];
            g.backward(add(ll, lr), inv_b);
        });
        for (auto& g : graphs) {
            g.accumulate_param_grads();
        }
        adam_step(group_l, adam_l, cfg);
        adam_step(group_r, adam_r, cfg);

        LossRow row;
        row.step = step;
        row.stage = "position";
        for (std::size_t i = 0; i < batch.size(); ++i) {
            row.loss_l += loss_l[i];
            row.loss_r += loss_r[i];
        }
        row.loss_l /= static_cast<double>(batch.size());
        row.loss_r /= static_cast<double>(batch.size());
        rows.push_back(row);
    }
    return rows;
}

std::vector<LossRow> train_motion_stage(ModelT<float>& model, const Dataset& ds,
                                        const DiffusionSchedule& sched, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.stage != "motion") {
        throw std::invalid_argument("train_motion_stage: config stage must be 'motion'");
    }
    const DenoiserConfig& dc = model.cfg.denoiser;
    BatchFeed feed(ds, cfg.seed);
    std::vector<ParamPtr<float>> group_l = model.motion_params(Side::left);
    std::vector<ParamPtr<float>> group_r = model.motion_params(Side::right);
    AdamState adam_l, adam_r;
    std::vector<LossRow> rows;
    rows.reserve(static_cast<std::size_t>(cfg.steps));

    // frozen predictor outputs per clip, computed once
    std::vector<Tensor32> pred_pos_l(ds.items.size()), pred_pos_r(ds.items.size());
    {
        std::vector<int> all(ds.items.size());
        for (std::size_t i = 0; i < all.size(); ++i) {
            all[i] = static_cast<int>(i);
        }
        parallel_for(static_cast<int>(all.size()), cfg.workers, [&](int i) {
            GraphT<float> g(false);
            VarT<float> f = g.input(ds.items[static_cast<std::size_t>(i)].features);
            pred_pos_l[static_cast<std::size_t>(i)] = model.left.predictor(g, f).val();
            pred_pos_r[static_cast<std::size_t>(i)] = model.right.predictor(g, f).val();
        });
    }

    for (int step = 0; step < cfg.steps; ++step) {
        const std::vector<int> batch = feed.next(cfg.batch_size);
        const float inv_b = 1.0f / static_cast<float>(cfg.batch_size);
        std::vector<GraphT<float>> graphs;
        graphs.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            graphs.emplace_back(true);
        }
        std::vector<double> loss_l(batch.size()), loss_r(batch.size());
        parallel_for(static_cast<int>(batch.size()), cfg.workers, [&](int i) {
            const int clip_idx = batch[static_cast<std::size_t>(i)];
            const Clip& clip = ds.items[static_cast<std::size_t>(clip_idx)];
            const Tensor32 x0_l = flat_gestures(clip.gest_l);
            const Tensor32 x0_r = flat_gestures(clip.gest_r);
            const Stage2DrawT<float> draw =
                stage2_draws<float>(cfg.seed, step, i, x0_l.shape, sched.timesteps, dc.decoupled_noise);

            GraphT<float>& g = graphs[static_cast<std::size_t>(i)];
            auto [ll, lr] = stage2_item_losses(g, model, sched, clip.features,
                                               pred_pos_l[static_cast<std::size_t>(clip_idx)],
                                               pred_pos_r[static_cast<std::size_t>(clip_idx)], x0_l, x0_r,
                                               draw);
            loss_l[static_cast<std::size_t>(i)] = ll.val().data[0];
            loss_r[static_cast<std::size_t>(i)] = lr.val().data[0];
            g.backward(add(ll, lr), inv_b);
        });
        for (auto& g : graphs) {
            g.accumulate_param_grads();
        }
        adam_step(group_l, adam_l, cfg);
        adam_step(group_r, adam_r, cfg);

        LossRow row;
        row.step = step;
        row.stage = "motion";
        for (std::size_t i = 0; i < batch.size(); ++i) {
            row.loss_l += loss_l[i];
            row.loss_r += loss_r[i];
        }
        row.loss_l /= static_cast<double>(batch.size());
        row.loss_r /= static_cast<double>(batch.size());
        rows.push_back(row);
    }
    return rows;
}

double zero_output_baseline(const Dataset& ds, const DiffusionSchedule& sched) {
    double second_moment = 0.0;
    long long count = 0;
    for (int i : ds.split_indices("train")) {
        const Clip& c = ds.items[static_cast<std::size_t>(i)];
        for (float v : c.gest_l.data) {
            second_moment += static_cast<double>(v) * v;
            ++count;
        }
        for (float v : c.gest_r.data) {
            second_moment += static_cast<double>(v) * v;
            ++count;
        }
    }
    second_moment /= static_cast<double>(count);
    double acc = 0.0;
    for (int t = 1; t <= sched.timesteps; ++t) {
        const double abar = sched.abar(t);
        acc += abar + (1.0 - abar) * second_moment;
    }
    return acc / sched.timesteps;
}

void save_checkpoint(const ModelT<float>& model, const std::string& path, bool predictors_only) {
    std::vector<NamedTensor> entries;
    for (const auto& p : model.params.items) {
        const bool is_pred = p->name.find(".pred.") != std::string::npos;
        if (predictors_only && !is_pred) {
            continue;
        }
        entries.push_back({p->name, p->value});
    }
    write_container(entries, path);
}

void load_checkpoint(ModelT<float>& model, const std::string& path, bool predictors_only) {
    const std::vector<NamedTensor> entries = read_container(path);
    std::size_t expected = 0;
    for (const auto& p : model.params.items) {
        const bool is_pred = p->name.find(".pred.") != std::string::npos;
        if (predictors_only && !is_pred) {
            continue;
        }
        ++expected;
    }
    if (entries.size() != expected) {
        throw std::runtime_error("checkpoint " + path + " has " + std::to_string(entries.size()) +
                                 " tensors, expected " + std::to_string(expected) +
                                 " (config mismatch?)");
    }
    for (const auto& e : entries) {
        ParamPtr<float> p = model.params.find(e.name);
        if (p == nullptr) {
            throw std::runtime_error("checkpoint tensor has no matching parameter: " + e.name);
        }
        if (p->value.shape != e.tensor.shape) {
            throw std::runtime_error("checkpoint shape mismatch for " + e.name);
        }
        p->value = e.tensor;
    }
}

}  // namespace s2c
