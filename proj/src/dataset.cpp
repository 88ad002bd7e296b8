#include "etlab/dataset.hpp"

#include <cstdio>
#include <filesystem>

#include "etlab/errors.hpp"
#include "etlab/jsonio.hpp"
#include "etlab/png_io.hpp"
#include "etlab/rng.hpp"
#include "etlab/sha256.hpp"

namespace etlab {

namespace fs = std::filesystem;

namespace {

constexpr int kManifestSchemaVersion = 1;

// Seed-domain tags keep identity streams for different purposes apart.
constexpr uint64_t kTagExample = 0x45584d50ull;  // "EXMP"
constexpr uint64_t kTagQuery = 0x51555259ull;    // "QURY"

std::string sample_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05d", index);
    return buf;
}

Image zero_panel(int panel_px) { return Image(panel_px, panel_px); }

void check_edit_names(const std::vector<std::string>& names, const EditTaxonomy& taxonomy) {
    for (const std::string& n : names) {
        if (n == "identity") continue;
        taxonomy.find(n);  // throws UnknownEdit
    }
}

Json sample_to_manifest_entry(const CompositeSample& s, const std::string& file,
                              const std::string& file_sha) {
    Json j;
    j["id"] = s.id;
    j["file"] = file;
    j["sha256"] = file_sha;
    j["edit_names"] = s.edit_names;
    j["example_seed"] = s.example_seed;
    j["query_seed"] = s.query_seed;
    j["with_target"] = s.with_target;
    j["prompt_ids"] = s.prompt.token_ids;
    Json params;
    params["top_source"] = to_json(s.example_params);
    params["top_target"] = to_json(s.example_edited_params);
    params["bottom_source"] = to_json(s.query_params);
    params["bottom_target"] = to_json(s.query_edited_params);
    j["params"] = params;
    return j;
}

}  // namespace

void DatasetSpec::validate() const {
    if (edits.empty()) throw ConfigError("DatasetSpec: edits must be non-empty");
    if (n_c < 1) throw ConfigError("DatasetSpec: n_c must be >= 1");
    if (panel_px <= 0 || panel_px % 16 != 0)
        throw ConfigError("DatasetSpec: panel_px must be a positive multiple of 16");
    std::set<std::string> seen;
    for (const std::string& e : edits) {
        default_taxonomy().find(e);
        if (!seen.insert(e).second) throw ConfigError("DatasetSpec: duplicate edit " + e);
    }
    for (const auto& group : compositions) {
        if (group.empty()) throw ConfigError("DatasetSpec: empty composition group");
        for (const std::string& e : group) default_taxonomy().find(e);
    }
}

DatasetSpec reference_dataset_spec() {
    DatasetSpec s;
    for (const EditOp& e : default_taxonomy().edits) s.edits.push_back(e.name);
    s.n_c = 2;
    s.panel_px = 64;
    s.global_seed = 0;
    return s;
}

CompositeSample make_sample(const std::vector<std::string>& edit_names, uint64_t example_seed,
                            uint64_t query_seed, const CanvasSpec& canvas, bool with_target,
                            const EditTaxonomy& taxonomy) {
    validate_canvas(canvas);
    if (example_seed == query_seed)
        throw IdentityCollision("example and query identity seeds must differ");
    check_edit_names(edit_names, taxonomy);

    const EditOp composed = compose_edits(edit_names, taxonomy);

    CompositeSample s;
    s.edit_names = edit_names;
    s.example_seed = example_seed;
    s.query_seed = query_seed;
    s.panel_px = canvas.panel_px;
    s.with_target = with_target;

    s.example_params = sample_sprite(example_seed);
    s.query_params = sample_sprite(query_seed);
    s.example_edited_params = apply_edit(s.example_params, composed);
    s.query_edited_params = apply_edit(s.query_params, composed);

    s.top_source = render_sprite(s.example_params, canvas);
    s.top_target = render_sprite(s.example_edited_params, canvas);
    s.bottom_source = render_sprite(s.query_params, canvas);
    if (with_target) s.bottom_target = render_sprite(s.query_edited_params, canvas);

    const int p = canvas.panel_px;
    s.composite = Image(2 * p, 2 * p);
    blit(s.composite, s.top_source, 0, 0);
    blit(s.composite, s.top_target, 0, p);
    blit(s.composite, s.bottom_source, p, 0);
    blit(s.composite, with_target ? *s.bottom_target : zero_panel(p), p, p);

    s.prompt = encode_prompt(edit_names);
    s.token_grid_side = (2 * p) / canvas.patch_px;
    s.quadrant_mask = bottom_right_mask(s.token_grid_side);
    return s;
}

std::pair<uint64_t, uint64_t> dataset_sample_seeds(uint64_t global_seed, int group_index,
                                                   int replica_index) {
    return {mix_seed(global_seed, kTagExample, static_cast<uint64_t>(group_index),
                     static_cast<uint64_t>(replica_index)),
            mix_seed(global_seed, kTagQuery, static_cast<uint64_t>(group_index),
                     static_cast<uint64_t>(replica_index))};
}

Dataset build_dataset(const DatasetSpec& spec) {
    spec.validate();
    CanvasSpec canvas;
    canvas.panel_px = spec.panel_px;

    std::vector<std::vector<std::string>> groups;
    for (const std::string& e : spec.edits) groups.push_back({e});
    for (const auto& comp : spec.compositions) groups.push_back(comp);

    Dataset ds;
    ds.spec = spec;
    int index = 0;
    for (size_t g = 0; g < groups.size(); ++g) {
        for (int c = 0; c < spec.n_c; ++c) {
            const auto [ex_seed, q_seed] =
                dataset_sample_seeds(spec.global_seed, static_cast<int>(g), c);
            CompositeSample s =
                make_sample(groups[g], ex_seed, q_seed, canvas, /*with_target=*/true);
            s.id = sample_id(index++);
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

Dataset build_dataset(const DatasetSpec& spec, const std::string& out_dir) {
    Dataset ds = build_dataset(spec);

    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "samples", ec);
    if (ec) throw IoError("cannot create dataset directory: " + out_dir);

    Json manifest;
    manifest["schema_version"] = kManifestSchemaVersion;
    manifest["spec"] = to_json(ds.spec);
    Json entries = Json::array();
    for (const CompositeSample& s : ds.samples) {
        const std::string rel = "samples/" + s.id + ".png";
        const std::vector<uint8_t> png = image_to_png(s.composite);
        write_file_bytes((fs::path(out_dir) / rel).string(), png);
        entries.push_back(sample_to_manifest_entry(s, rel, sha256_hex(png)));
    }
    manifest["samples"] = entries;

    const std::string text = manifest.dump(2) + "\n";
    write_file_bytes((fs::path(out_dir) / "manifest.json").string(),
                     std::vector<uint8_t>(text.begin(), text.end()));
    return ds;
}

Dataset load_dataset(const std::string& dir) {
    const fs::path root(dir);
    const Json manifest = parse_json_file((root / "manifest.json").string());
    if (!manifest.contains("schema_version") ||
        manifest["schema_version"].get<int>() != kManifestSchemaVersion)
        throw VersionError("dataset manifest schema version mismatch");

    Dataset ds;
    ds.spec = dataset_spec_from_json(manifest["spec"]);
    CanvasSpec canvas;
    canvas.panel_px = ds.spec.panel_px;

    for (const Json& entry : manifest["samples"]) {
        const std::string rel = entry["file"].get<std::string>();
        std::vector<uint8_t> png;
        try {
            png = read_file_bytes((root / rel).string());
        } catch (const IoError& e) {
            throw CorruptData(std::string("dataset: missing panel file: ") + rel);
        }
        if (sha256_hex(png) != entry["sha256"].get<std::string>())
            throw CorruptData("dataset: checksum mismatch for " + rel);

        const Image composite = image_from_png(png);
        const int p = ds.spec.panel_px;
        if (composite.width != 2 * p || composite.height != 2 * p)
            throw CorruptData("dataset: composite has wrong dimensions: " + rel);

        CompositeSample s;
        s.id = entry["id"].get<std::string>();
        s.edit_names = entry["edit_names"].get<std::vector<std::string>>();
        s.example_seed = entry["example_seed"].get<uint64_t>();
        s.query_seed = entry["query_seed"].get<uint64_t>();
        s.with_target = entry["with_target"].get<bool>();
        s.prompt.token_ids = entry["prompt_ids"].get<std::vector<int>>();
        s.panel_px = p;
        s.example_params = sprite_params_from_json(entry["params"]["top_source"]);
        s.example_edited_params = sprite_params_from_json(entry["params"]["top_target"]);
        s.query_params = sprite_params_from_json(entry["params"]["bottom_source"]);
        s.query_edited_params = sprite_params_from_json(entry["params"]["bottom_target"]);

        // Provenance validation: stored params must reproduce both the edit
        // chain and the stored pixels exactly.
        const EditOp composed = compose_edits(s.edit_names, default_taxonomy());
        if (apply_edit(s.example_params, composed) != s.example_edited_params ||
            apply_edit(s.query_params, composed) != s.query_edited_params)
            throw CorruptData("dataset: provenance check failed (edit chain) for " + s.id);
        if (encode_prompt(s.edit_names) != s.prompt)
            throw CorruptData("dataset: provenance check failed (prompt) for " + s.id);

        s.top_source = render_sprite(s.example_params, canvas);
        s.top_target = render_sprite(s.example_edited_params, canvas);
        s.bottom_source = render_sprite(s.query_params, canvas);
        if (s.with_target) s.bottom_target = render_sprite(s.query_edited_params, canvas);

        auto panel_equal = [&](const Image& panel, int y0, int x0) {
            for (int y = 0; y < p; ++y)
                for (int x = 0; x < p; ++x)
                    for (int c = 0; c < 3; ++c)
                        if (panel.at(y, x, c) != composite.at(y0 + y, x0 + x, c)) return false;
            return true;
        };
        const Image br = s.with_target ? *s.bottom_target : zero_panel(p);
        if (!panel_equal(s.top_source, 0, 0) || !panel_equal(s.top_target, 0, p) ||
            !panel_equal(s.bottom_source, p, 0) || !panel_equal(br, p, p))
            throw CorruptData("dataset: provenance check failed (pixels) for " + s.id);

        s.composite = composite;
        s.token_grid_side = (2 * p) / canvas.patch_px;
        s.quadrant_mask = bottom_right_mask(s.token_grid_side);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::string dataset_manifest_hash(const std::string& dir) {
    return sha256_hex(read_file_bytes((fs::path(dir) / "manifest.json").string()));
}

std::set<uint64_t> dataset_identity_seeds(const Dataset& dataset) {
    std::set<uint64_t> seeds;
    for (const CompositeSample& s : dataset.samples) {
        seeds.insert(s.example_seed);
        seeds.insert(s.query_seed);
    }
    return seeds;
}

std::pair<std::vector<int>, std::vector<int>> quadrant_partition(int token_grid_side) {
    if (token_grid_side <= 0 || token_grid_side % 2 != 0)
        throw BadGrid("token grid side must be positive and even");
    std::vector<int> cond, target;
    const int half = token_grid_side / 2;
    for (int r = 0; r < token_grid_side; ++r)
        for (int c = 0; c < token_grid_side; ++c) {
            const int idx = r * token_grid_side + c;
            if (r >= half && c >= half) target.push_back(idx);
            else cond.push_back(idx);
        }
    return {cond, target};
}

std::vector<int> quadrant_indices(int token_grid_side, int quadrant) {
    if (token_grid_side <= 0 || token_grid_side % 2 != 0)
        throw BadGrid("token grid side must be positive and even");
    if (quadrant < 0 || quadrant > 3) throw BadGrid("quadrant must be in 0..3");
    const int half = token_grid_side / 2;
    const int r0 = (quadrant / 2) * half;
    const int c0 = (quadrant % 2) * half;
    std::vector<int> out;
    out.reserve(static_cast<size_t>(half) * half);
    for (int r = r0; r < r0 + half; ++r)
        for (int c = c0; c < c0 + half; ++c) out.push_back(r * token_grid_side + c);
    return out;
}

std::vector<uint8_t> bottom_right_mask(int token_grid_side) {
    std::vector<uint8_t> mask(static_cast<size_t>(token_grid_side) * token_grid_side, 0);
    for (int idx : quadrant_indices(token_grid_side, 3)) mask[static_cast<size_t>(idx)] = 1;
    return mask;
}

}  // namespace etlab
