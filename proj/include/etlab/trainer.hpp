#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "etlab/checkpoint.hpp"
#include "etlab/dataset.hpp"
#include "etlab/flow.hpp"
#include "etlab/jsonio.hpp"
#include "etlab/model.hpp"

namespace etlab {

struct TrainConfig {
    std::string stage;  // "pretrain" | "finetune"
    double learning_rate = 1e-4;
    int batch_size = 4;
    int iterations = 0;
    std::optional<LoRAConfig> lora;
    uint64_t seed = 0;
    int checkpoint_every = 500;
    AdamConfig adam;
    std::string dataset;                     // finetune: dataset directory
    std::optional<ModelConfig> model;        // pretrain: architecture (defaults)
    std::string time_sampling = "uniform";   // or "logit_normal"
    double prompt_dropout = 0.0;             // finetune: scaffold-only prompt probability

    void validate() const;
};

TrainConfig pretrain_defaults();
TrainConfig finetune_defaults();

Json to_json(const TrainConfig& c);
/// Strict parse: unknown keys are rejected.
TrainConfig train_config_from_json(const Json& j);

struct TrainLogRecord {
    int iter = 0;
    double loss = 0;
    double lr = 0;
    double wall_ms = 0;
};

/// Append-only training log; optionally streamed to newline-delimited JSON.
class TrainLog {
  public:
    TrainLog() = default;
    explicit TrainLog(const std::string& path, const Json& header);

    void append(const TrainLogRecord& rec);
    void flush();
    const std::vector<TrainLogRecord>& records() const { return records_; }

  private:
    std::vector<TrainLogRecord> records_;
    std::ofstream out_;
};

struct TrainState {
    Model<float> model;
    AdamState adam;
    int iter = 0;  // iterations completed
};

using CheckpointFn = std::function<void(const TrainState&)>;

/// Runs `cfg.iterations - state.iter` optimization steps. Pretraining
/// updates every tensor on procedurally generated four-panel composites
/// with a rotating target quadrant; fine-tuning updates only adapter
/// tensors on the provided dataset. Deterministic: every random draw is a
/// pure function of (cfg.seed, iteration).
void train_loop(TrainState& state, const TrainConfig& cfg, const Dataset* data, TrainLog* log,
                const CheckpointFn& on_checkpoint = {});

/// Fresh pretraining run.
TrainState pretrain(const TrainConfig& cfg, TrainLog* log = nullptr,
                    const CheckpointFn& on_checkpoint = {});

/// LoRA fine-tuning from a pretrained base. Throws AlreadyAdapted if the
/// base already carries adapters, EmptyDataset on an empty dataset.
TrainState finetune(const TrainConfig& cfg, const Model<float>& base, const Dataset& data,
                    TrainLog* log = nullptr, const CheckpointFn& on_checkpoint = {});

/// Resumes either stage from a checkpoint that carries optimizer state.
TrainState resume_state(const LoadedCheckpoint& ckpt);

}  // namespace etlab
