#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "etlab/dataset.hpp"
#include "etlab/flow.hpp"
#include "etlab/jsonio.hpp"
#include "etlab/model.hpp"

namespace etlab {

struct EvalSpec {
    std::vector<std::string> edits;  // evaluated edit subset
    int n_queries = 6;               // held-out queries per edit
    uint64_t eval_seed = 9000;
    int steps = 35;
    int panel_px = 64;

    void validate() const;
};

Json to_json(const EvalSpec& s);
EvalSpec eval_spec_from_json(const Json& j);

struct SampleRecord {
    std::string sample_id;
    std::vector<std::string> true_edits;
    std::string predicted;
    std::vector<std::string> predicted_set;  // composition probe only
    bool correct = false;
    double margin = 0;
    double mse = 0;
    double psnr = 0;  // +inf sentinel for exact matches
    double silhouette_iou = 0;
    double identity_mse = 0;
};

struct EvalReport {
    std::vector<SampleRecord> records;
    int taxonomy_size = 0;
    double chance = 0;
    bool empty = false;  // aggregates undefined (n_queries == 0)
    double accuracy = 0;
    double mean_mse = 0;
    double mean_psnr = 0;
    double mean_iou = 0;
    double mean_identity_mse = 0;
    /// Fig. 8 limitation probe: recolor_shirt accuracy, reported separately
    /// in every report; absent when no recolor queries ran.
    std::optional<double> recolor_accuracy;
    bool baseline = false;
    Json provenance;
};

Json to_json(const EvalReport& r);
std::string eval_report_csv(const EvalReport& r);

/// Per-query velocity-field factory. The sample argument is the inference
/// composite (no bottom-right content); stub providers may read its oracle
/// provenance, the model provider ignores it.
struct VelocityProvider {
    std::string name;
    std::function<std::function<MatF(const MatF&, float)>(const CompositeSample&)> make;
};

VelocityProvider model_provider(std::shared_ptr<const Model<float>> model);
/// Exact oracle velocity (z - z_oracle)/t; recovers the ground-truth panel.
VelocityProvider oracle_stub_provider(int patch_px);
/// Zero velocity: the sampler output stays at its initial noise.
VelocityProvider noise_stub_provider();

/// Ground-truth render of the composed edit applied to the query sprite.
Image oracle_target(const SpriteParams& query_params, const std::vector<std::string>& edit_names,
                    const CanvasSpec& canvas, const EditTaxonomy& taxonomy = default_taxonomy());

/// Nearest-oracle-render classification over single edits; returns the
/// argmin edit name and the (second best - best) MSE margin. Ties break
/// toward the lowest taxonomy index.
std::pair<std::string, double> classify_edit(const Image& generated,
                                             const SpriteParams& query_params,
                                             const EditTaxonomy& taxonomy,
                                             const CanvasSpec& canvas);

/// Figure-pixel mask inferred from a generated panel: anything that is not
/// exactly the (quantized) background color.
std::vector<uint8_t> generated_silhouette(const Image& generated, const Color& background);

double mask_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

/// MSE restricted to the identity-preservation region: the complement of
/// the union of the before/after figure silhouettes.
double identity_region_mse(const Image& generated, const SpriteParams& query_params,
                           const std::vector<std::string>& edit_names, const CanvasSpec& canvas,
                           const EditTaxonomy& taxonomy = default_taxonomy());

/// Held-out evaluation: for each (edit, query) builds an inference
/// composite, samples the bottom-right panel, and scores it against the
/// oracle. Eval identity seeds are derived from eval_seed; any overlap with
/// `training_seeds` raises LeakageError.
EvalReport evaluate(const VelocityProvider& provider, const EvalSpec& spec,
                    const std::set<uint64_t>& training_seeds,
                    const EditTaxonomy& taxonomy = default_taxonomy(),
                    std::vector<std::pair<CompositeSample, Image>>* sheets = nullptr);

/// evaluate() for a pretrain-stage checkpoint, flagged as the no-finetune
/// baseline. WrongStage if the model carries adapters / was fine-tuned.
EvalReport no_finetune_baseline(std::shared_ptr<const Model<float>> base_model,
                                const std::string& stage, const EvalSpec& spec,
                                const std::set<uint64_t>& training_seeds,
                                const EditTaxonomy& taxonomy = default_taxonomy());

struct EditRecall {
    std::string edit;
    int detected = 0;
    int total = 0;
    double recall = 0;
    double ci_low = 0;   // bootstrap 2.5%
    double ci_high = 0;  // bootstrap 97.5%
};

struct CompositionReport {
    std::vector<SampleRecord> records;
    std::vector<EditRecall> per_edit;
    double exact_set_accuracy = 0;
    double chance_product = 0;  // product of per-slot chance levels
    int n_candidates = 0;
    bool empty = false;
    Json provenance;
};

Json to_json(const CompositionReport& r);
std::string composition_report_csv(const CompositionReport& r);

/// Compositional probe: generation conditioned on composed-edit examples,
/// scored as set prediction. Every pair must have disjoint touched fields
/// (NotComposable otherwise). Per-edit recall gets a 200-resample bootstrap CI.
CompositionReport composition_probe(const VelocityProvider& provider,
                                    const std::vector<std::vector<std::string>>& edit_groups,
                                    const EvalSpec& spec, const std::set<uint64_t>& training_seeds,
                                    const EditTaxonomy& taxonomy = default_taxonomy());

struct AblationCell {
    int n_t = 0;
    int n_c = 0;
    uint64_t seed = 0;
    EvalReport report;
};

struct AblationConfig {
    std::vector<int> n_t_values;
    std::vector<int> n_c_values;
    std::vector<uint64_t> seeds;         // finetune seeds (one run per seed per cell)
    std::vector<std::string> edit_order; // subset prefixes come from this order
    uint64_t data_seed = 0;
    int finetune_iterations = 800;
    double learning_rate = 1e-4;
    int batch_size = 4;
    LoRAConfig lora;
    EvalSpec eval;
};

/// Dataset-scale ablation grid: per cell builds the dataset, fine-tunes
/// from the same base, and evaluates on a fixed held-out set.
std::vector<AblationCell> ablation_grid(const Model<float>& base, const AblationConfig& cfg);

std::string ablation_csv(const std::vector<AblationCell>& cells);

/// Contact sheet (query | example pair | generated | oracle) for the first
/// rows of an evaluation.
Image contact_sheet(const std::vector<std::pair<CompositeSample, Image>>& rows,
                    const CanvasSpec& canvas, int max_rows = 8);

}  // namespace etlab
