#include "etlab/trainer.hpp"

#include "etlab/sha256.hpp"

namespace etlab {

namespace {

constexpr uint64_t kTagPretrainSprite = 0x50524553ull;  // "PRES"
constexpr uint64_t kTagPretrainNoise = 0x5052454eull;   // "PREN"
constexpr uint64_t kTagBatch = 0x42415443ull;           // "BATC"
constexpr uint64_t kTagNoise = 0x4654464cull;           // "FTFL"
constexpr uint64_t kTagDrop = 0x44524f50ull;            // "DROP"

using Clock = std::chrono::steady_clock;

std::vector<Eigen::Map<Eigen::ArrayXf>> param_views(Model<float>& m, ParamFilter filter) {
    std::vector<Eigen::Map<Eigen::ArrayXf>> views;
    visit_params(
        m, [&](const std::string&, auto& t) { views.emplace_back(t.data(), t.size()); }, filter);
    return views;
}

/// One Adam step over the trainable set; element order and reduction order
/// are fixed, so updates are bit-reproducible.
void adam_step(Model<float>& model, Model<float>& grads, AdamState& adam, const AdamConfig& cfg,
               double lr, ParamFilter filter) {
    adam.step += 1;
    const float b1 = static_cast<float>(cfg.beta1);
    const float b2 = static_cast<float>(cfg.beta2);
    const float eps = static_cast<float>(cfg.eps);
    const float c1 = 1.0f - std::pow(b1, static_cast<float>(adam.step));
    const float c2 = 1.0f - std::pow(b2, static_cast<float>(adam.step));
    const float step_size = static_cast<float>(lr);

    auto w = param_views(model, filter);
    auto g = param_views(grads, filter);
    auto m = param_views(adam.m, filter);
    auto v = param_views(adam.v, filter);
    for (size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (1.0f - b1) * g[i];
        v[i] = b2 * v[i] + (1.0f - b2) * g[i].square();
        w[i] -= step_size * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
    }
}

/// Procedural pretraining composite: four independent sprites, rotating
/// target quadrant, scaffold-only prompt. The model learns sprite denoising
/// but never sees relational structure.
SampleTokens<float> pretrain_item(const ModelConfig& mc, uint64_t run_seed, uint64_t item_index) {
    CanvasSpec canvas;
    canvas.panel_px = mc.composite_px / 2;
    canvas.patch_px = mc.patch_px;
    const int p = canvas.panel_px;
    Image composite(2 * p, 2 * p);
    for (int q = 0; q < 4; ++q) {
        const SpriteParams sp =
            sample_sprite(mix_seed(run_seed, kTagPretrainSprite, item_index, uint64_t(q)));
        blit(composite, render_sprite(sp, canvas), (q / 2) * p, (q % 2) * p);
    }
    const int target_quadrant = static_cast<int>(item_index % 4);
    return tokenize_composite<float>(composite, mc.patch_px, target_quadrant,
                                     scaffold_prompt().token_ids);
}

}  // namespace

void TrainConfig::validate() const {
    if (stage != "pretrain" && stage != "finetune")
        throw ConfigError("stage must be 'pretrain' or 'finetune'");
    if (stage == "finetune" && !lora) throw ConfigError("finetune requires a lora config");
    if (stage == "pretrain" && lora) throw ConfigError("pretrain forbids a lora config");
    if (stage == "pretrain" && !dataset.empty())
        throw ConfigError("pretrain does not take a dataset path");
    if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (time_sampling != "uniform" && time_sampling != "logit_normal")
        throw ConfigError("time_sampling must be 'uniform' or 'logit_normal'");
    if (prompt_dropout < 0.0 || prompt_dropout > 1.0)
        throw ConfigError("prompt_dropout must be in [0,1]");
    if (model) model->validate();
    if (lora) lora->validate(model ? model->d_model : ModelConfig{}.d_model);
}

TrainConfig pretrain_defaults() {
    TrainConfig c;
    c.stage = "pretrain";
    c.iterations = 5000;
    c.model = ModelConfig{};
    return c;
}

TrainConfig finetune_defaults() {
    TrainConfig c;
    c.stage = "finetune";
    c.iterations = 2000;
    c.lora = LoRAConfig{};
    return c;
}

Json to_json(const TrainConfig& c) {
    Json j;
    j["stage"] = c.stage;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["iterations"] = c.iterations;
    if (c.lora) {
        Json l;
        l["rank"] = c.lora->rank;
        l["alpha"] = c.lora->alpha;
        l["targets"] = c.lora->targets;
        j["lora"] = l;
    }
    j["seed"] = c.seed;
    j["checkpoint_every"] = c.checkpoint_every;
    j["adam"] = Json{{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
    if (!c.dataset.empty()) j["dataset"] = c.dataset;
    if (c.model) {
        Json m;
        m["d_model"] = c.model->d_model;
        m["n_heads"] = c.model->n_heads;
        m["depth"] = c.model->depth;
        m["patch_px"] = c.model->patch_px;
        m["composite_px"] = c.model->composite_px;
        m["vocab_size"] = c.model->vocab_size;
        m["prompt_len"] = c.model->prompt_len;
        m["time_embed_dim"] = c.model->time_embed_dim;
        m["mlp_ratio"] = c.model->mlp_ratio;
        j["model"] = m;
    }
    j["time_sampling"] = c.time_sampling;
    j["prompt_dropout"] = c.prompt_dropout;
    return j;
}

TrainConfig train_config_from_json(const Json& j) {
    check_keys(j,
               {"stage", "learning_rate", "batch_size", "iterations", "lora", "seed",
                "checkpoint_every", "adam", "dataset", "model", "time_sampling", "prompt_dropout"},
               {"stage"}, "TrainConfig");
    const std::string stage = j["stage"].get<std::string>();
    TrainConfig c;
    if (stage == "pretrain") c = pretrain_defaults();
    else if (stage == "finetune") c = finetune_defaults();
    else c.stage = stage;  // rejected by validate()
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("iterations")) c.iterations = j["iterations"].get<int>();
    if (j.contains("lora")) {
        check_keys(j["lora"], {"rank", "alpha", "targets"}, {}, "TrainConfig.lora");
        LoRAConfig l;
        if (j["lora"].contains("rank")) l.rank = j["lora"]["rank"].get<int>();
        if (j["lora"].contains("alpha")) l.alpha = j["lora"]["alpha"].get<double>();
        if (j["lora"].contains("targets"))
            l.targets = j["lora"]["targets"].get<std::vector<std::string>>();
        c.lora = l;
    }
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("checkpoint_every")) c.checkpoint_every = j["checkpoint_every"].get<int>();
    if (j.contains("adam")) {
        check_keys(j["adam"], {"beta1", "beta2", "eps"}, {}, "TrainConfig.adam");
        if (j["adam"].contains("beta1")) c.adam.beta1 = j["adam"]["beta1"].get<double>();
        if (j["adam"].contains("beta2")) c.adam.beta2 = j["adam"]["beta2"].get<double>();
        if (j["adam"].contains("eps")) c.adam.eps = j["adam"]["eps"].get<double>();
    }
    if (j.contains("dataset")) c.dataset = j["dataset"].get<std::string>();
    if (j.contains("model")) {
        check_keys(j["model"],
                   {"d_model", "n_heads", "depth", "patch_px", "composite_px", "vocab_size",
                    "prompt_len", "time_embed_dim", "mlp_ratio"},
                   {}, "TrainConfig.model");
        ModelConfig m;
        const Json& jm = j["model"];
        if (jm.contains("d_model")) m.d_model = jm["d_model"].get<int>();
        if (jm.contains("n_heads")) m.n_heads = jm["n_heads"].get<int>();
        if (jm.contains("depth")) m.depth = jm["depth"].get<int>();
        if (jm.contains("patch_px")) m.patch_px = jm["patch_px"].get<int>();
        if (jm.contains("composite_px")) m.composite_px = jm["composite_px"].get<int>();
        if (jm.contains("vocab_size")) m.vocab_size = jm["vocab_size"].get<int>();
        if (jm.contains("prompt_len")) m.prompt_len = jm["prompt_len"].get<int>();
        if (jm.contains("time_embed_dim")) m.time_embed_dim = jm["time_embed_dim"].get<int>();
        if (jm.contains("mlp_ratio")) m.mlp_ratio = jm["mlp_ratio"].get<int>();
        c.model = m;
    }
    if (j.contains("time_sampling")) c.time_sampling = j["time_sampling"].get<std::string>();
    if (j.contains("prompt_dropout")) c.prompt_dropout = j["prompt_dropout"].get<double>();
    c.validate();
    return c;
}

TrainLog::TrainLog(const std::string& path, const Json& header) {
    if (!path.empty()) {
        out_.open(path, std::ios::trunc);
        if (!out_) throw IoError("cannot open train log: " + path);
        out_ << header.dump() << "\n";
    }
}

void TrainLog::append(const TrainLogRecord& rec) {
    if (!std::isfinite(rec.loss)) throw TrainingDiverged("non-finite loss in train log");
    records_.push_back(rec);
    if (out_.is_open()) {
        Json j;
        j["iter"] = rec.iter;
        j["loss"] = rec.loss;
        j["lr"] = rec.lr;
        j["wall_ms"] = rec.wall_ms;
        out_ << j.dump() << "\n";
    }
}

void TrainLog::flush() {
    if (out_.is_open()) out_.flush();
}

void train_loop(TrainState& state, const TrainConfig& cfg, const Dataset* data, TrainLog* log,
                const CheckpointFn& on_checkpoint) {
    cfg.validate();
    const bool is_finetune = cfg.stage == "finetune";
    const ParamFilter filter = is_finetune ? ParamFilter::lora_only : ParamFilter::all;
    const bool logit_t = cfg.time_sampling == "logit_normal";
    const ModelConfig& mc = state.model.cfg;

    std::vector<SampleTokens<float>> train_tokens;
    if (is_finetune) {
        if (!data || data->samples.empty()) throw EmptyDataset("finetune requires samples");
        for (const CompositeSample& s : data->samples) {
            if (!s.with_target) throw MissingTarget("finetune sample lacks a target panel");
            if (2 * s.panel_px != mc.composite_px)
                throw ConfigError("dataset panel size does not match the model");
            train_tokens.push_back(tokenize_sample<float>(s, mc.patch_px));
        }
    }

    Model<float> grads = zeros_like(state.model);
    auto grad_views = param_views(grads, filter);
    const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);

    for (int iter = state.iter; iter < cfg.iterations; ++iter) {
        const auto t0 = Clock::now();
        for (auto& gv : grad_views) gv.setZero();

        double loss_sum = 0.0;
        if (is_finetune) {
            Rng batch_rng(mix_seed(cfg.seed, kTagBatch, static_cast<uint64_t>(iter)));
            for (int b = 0; b < cfg.batch_size; ++b) {
                const size_t idx =
                    static_cast<size_t>(batch_rng.uniform_index(train_tokens.size()));
                SampleTokens<float> tokens = train_tokens[idx];
                if (cfg.prompt_dropout > 0.0) {
                    Rng drop_rng(
                        mix_seed(cfg.seed, kTagDrop, static_cast<uint64_t>(iter), uint64_t(b)));
                    if (drop_rng.uniform() < cfg.prompt_dropout)
                        tokens.prompt_ids = scaffold_prompt().token_ids;
                }
                const uint64_t noise_seed =
                    mix_seed(cfg.seed, kTagNoise, static_cast<uint64_t>(iter), uint64_t(b));
                loss_sum += cfm_loss_and_grad(state.model, tokens, noise_seed, grads,
                                              /*base_grads=*/false, inv_batch, logit_t);
            }
        } else {
            for (int b = 0; b < cfg.batch_size; ++b) {
                const uint64_t g = static_cast<uint64_t>(iter) * cfg.batch_size + uint64_t(b);
                const SampleTokens<float> tokens = pretrain_item(mc, cfg.seed, g);
                const uint64_t noise_seed = mix_seed(cfg.seed, kTagPretrainNoise, g);
                loss_sum += cfm_loss_and_grad(state.model, tokens, noise_seed, grads,
                                              /*base_grads=*/true, inv_batch, logit_t);
            }
        }

        const double loss = loss_sum / cfg.batch_size;
        if (!std::isfinite(loss)) {
            if (log) log->flush();
            throw TrainingDiverged("loss diverged at iteration " + std::to_string(iter));
        }

        adam_step(state.model, grads, state.adam, cfg.adam, cfg.learning_rate, filter);
        state.iter = iter + 1;

        if (log) {
            TrainLogRecord rec;
            rec.iter = iter;
            rec.loss = loss;
            rec.lr = cfg.learning_rate;
            rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
            log->append(rec);
        }
        if (on_checkpoint && (state.iter % cfg.checkpoint_every == 0 || state.iter == cfg.iterations))
            on_checkpoint(state);
    }
    if (log) log->flush();
}

TrainState pretrain(const TrainConfig& cfg, TrainLog* log, const CheckpointFn& on_checkpoint) {
    cfg.validate();
    if (cfg.stage != "pretrain") throw ConfigError("pretrain() requires stage=pretrain");
    TrainState st;
    st.model = init_model<float>(cfg.model.value_or(ModelConfig{}), cfg.seed);
    st.adam.m = zeros_like(st.model);
    st.adam.v = zeros_like(st.model);
    train_loop(st, cfg, nullptr, log, on_checkpoint);
    return st;
}

TrainState finetune(const TrainConfig& cfg, const Model<float>& base, const Dataset& data,
                    TrainLog* log, const CheckpointFn& on_checkpoint) {
    cfg.validate();
    if (cfg.stage != "finetune") throw ConfigError("finetune() requires stage=finetune");
    if (base.lora_cfg) throw AlreadyAdapted("base checkpoint already carries adapters");
    if (data.samples.empty()) throw EmptyDataset("finetune dataset is empty");
    TrainState st;
    st.model = base;
    attach_lora(st.model, *cfg.lora, cfg.seed);
    st.adam.m = zeros_like(st.model);
    st.adam.v = zeros_like(st.model);
    train_loop(st, cfg, &data, log, on_checkpoint);
    return st;
}

TrainState resume_state(const LoadedCheckpoint& ckpt) {
    if (!ckpt.adam) throw UsageError("checkpoint has no optimizer state to resume from");
    TrainState st;
    st.model = ckpt.model;
    st.adam = *ckpt.adam;
    st.iter = ckpt.meta.iteration;
    return st;
}

}  // namespace etlab
