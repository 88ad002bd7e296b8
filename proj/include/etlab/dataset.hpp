#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "etlab/image.hpp"
#include "etlab/prompt.hpp"
#include "etlab/sprite.hpp"

namespace etlab {

/// One 2x2 in-context unit. Layout of `composite`:
///   [ top_source    top_target    ]     (example pair)
///   [ bottom_source bottom_target ]     (query pair; target absent for
///                                        inference requests)
/// Panels carry their SpriteParams provenance so every sample is
/// self-validating.
struct CompositeSample {
    std::string id;
    Image top_source, top_target, bottom_source;
    std::optional<Image> bottom_target;
    Image composite;

    std::vector<std::string> edit_names;
    PromptTokens prompt;
    uint64_t example_seed = 0;
    uint64_t query_seed = 0;

    SpriteParams example_params, example_edited_params;
    SpriteParams query_params, query_edited_params;

    int panel_px = 64;
    int token_grid_side = 16;           // composite token grid for canvas patch_px
    std::vector<uint8_t> quadrant_mask;  // per token, 1 = target (bottom-right)
    bool with_target = true;
};

struct DatasetSpec {
    std::vector<std::string> edits;  // taxonomy subset, ordered
    int n_c = 2;
    int panel_px = 64;
    uint64_t global_seed = 0;
    /// Extra composed-edit sample groups (n_c samples each); used to train
    /// the compositional probe.
    std::vector<std::vector<std::string>> compositions;

    int n_t() const { return static_cast<int>(edits.size()); }
    void validate() const;
};

/// The paper-scale reference configuration: all 21 edit types, two
/// composites each (42 samples).
DatasetSpec reference_dataset_spec();

struct Dataset {
    DatasetSpec spec;
    std::vector<CompositeSample> samples;
};

/// Builds one composite: both rows apply the same composed edit to two
/// different identities. with_target=false leaves the bottom-right panel
/// zero and marks the sample as an inference request.
CompositeSample make_sample(const std::vector<std::string>& edit_names, uint64_t example_seed,
                            uint64_t query_seed, const CanvasSpec& canvas, bool with_target,
                            const EditTaxonomy& taxonomy = default_taxonomy());

/// Identity seeds for a dataset entry; pure function of (global_seed,
/// group index, replica index), independent of n_c so datasets nest.
std::pair<uint64_t, uint64_t> dataset_sample_seeds(uint64_t global_seed, int group_index,
                                                   int replica_index);

Dataset build_dataset(const DatasetSpec& spec);
Dataset build_dataset(const DatasetSpec& spec, const std::string& out_dir);

Dataset load_dataset(const std::string& dir);

/// SHA-256 (hex) of the manifest.json written by build_dataset.
std::string dataset_manifest_hash(const std::string& dir);

/// All identity seeds appearing in a dataset; the evaluation leakage guard
/// checks eval seeds against this set.
std::set<uint64_t> dataset_identity_seeds(const Dataset& dataset);

/// Splits the row-major token grid into (conditional, target) index sets;
/// target indices are exactly the bottom-right quarter.
std::pair<std::vector<int>, std::vector<int>> quadrant_partition(int token_grid_side);

/// Token indices of one quadrant (0=TL, 1=TR, 2=BL, 3=BR).
std::vector<int> quadrant_indices(int token_grid_side, int quadrant);

/// Per-token bottom-right mask for a grid.
std::vector<uint8_t> bottom_right_mask(int token_grid_side);

}  // namespace etlab
