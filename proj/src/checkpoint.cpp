#include "etlab/checkpoint.hpp"

#include <cstring>

#include "etlab/jsonio.hpp"
#include "etlab/png_io.hpp"
#include "etlab/sha256.hpp"
#include "etlab/version.hpp"

namespace etlab {

namespace {

constexpr char kMagic[4] = {'E', 'T', 'L', 'B'};
constexpr uint32_t kFormatVersion = 1;

Json model_config_to_json(const ModelConfig& c) {
    Json j;
    j["d_model"] = c.d_model;
    j["n_heads"] = c.n_heads;
    j["depth"] = c.depth;
    j["patch_px"] = c.patch_px;
    j["composite_px"] = c.composite_px;
    j["vocab_size"] = c.vocab_size;
    j["prompt_len"] = c.prompt_len;
    j["time_embed_dim"] = c.time_embed_dim;
    j["mlp_ratio"] = c.mlp_ratio;
    return j;
}

ModelConfig model_config_from_json(const Json& j) {
    check_keys(j,
               {"d_model", "n_heads", "depth", "patch_px", "composite_px", "vocab_size",
                "prompt_len", "time_embed_dim", "mlp_ratio"},
               {}, "ModelConfig");
    ModelConfig c;
    if (j.contains("d_model")) c.d_model = j["d_model"].get<int>();
    if (j.contains("n_heads")) c.n_heads = j["n_heads"].get<int>();
    if (j.contains("depth")) c.depth = j["depth"].get<int>();
    if (j.contains("patch_px")) c.patch_px = j["patch_px"].get<int>();
    if (j.contains("composite_px")) c.composite_px = j["composite_px"].get<int>();
    if (j.contains("vocab_size")) c.vocab_size = j["vocab_size"].get<int>();
    if (j.contains("prompt_len")) c.prompt_len = j["prompt_len"].get<int>();
    if (j.contains("time_embed_dim")) c.time_embed_dim = j["time_embed_dim"].get<int>();
    if (j.contains("mlp_ratio")) c.mlp_ratio = j["mlp_ratio"].get<int>();
    c.validate();
    return c;
}

Json lora_config_to_json(const LoRAConfig& c) {
    Json j;
    j["rank"] = c.rank;
    j["alpha"] = c.alpha;
    j["targets"] = c.targets;
    return j;
}

LoRAConfig lora_config_from_json(const Json& j) {
    check_keys(j, {"rank", "alpha", "targets"}, {"rank"}, "LoRAConfig");
    LoRAConfig c;
    c.rank = j["rank"].get<int>();
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("targets")) c.targets = j["targets"].get<std::vector<std::string>>();
    return c;
}

void append_tensor(std::vector<uint8_t>& out, const std::string& name, const float* data,
                   uint64_t rows, uint64_t cols) {
    if (name.size() > 0xFFFF) throw UsageError("tensor name too long");
    out.push_back(static_cast<uint8_t>(name.size() & 0xFF));
    out.push_back(static_cast<uint8_t>(name.size() >> 8));
    out.insert(out.end(), name.begin(), name.end());
    put_u64le(out, rows);
    put_u64le(out, cols);
    for (uint64_t i = 0; i < rows * cols; ++i) put_f32le(out, data[i]);
}

struct TensorReader {
    const std::vector<uint8_t>& bytes;
    size_t pos;

    void need(size_t n) const {
        if (pos + n > bytes.size()) throw CorruptCheckpoint("checkpoint truncated");
    }
    uint32_t u32() {
        need(4);
        const uint32_t v = get_u32le(bytes.data() + pos);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        const uint64_t v = get_u64le(bytes.data() + pos);
        pos += 8;
        return v;
    }
    std::string name() {
        need(2);
        const size_t n = bytes[pos] | (size_t(bytes[pos + 1]) << 8);
        pos += 2;
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
    void floats(float* dst, uint64_t count) {
        need(count * 4);
        for (uint64_t i = 0; i < count; ++i) dst[i] = get_f32le(bytes.data() + pos + 4 * i);
        pos += count * 4;
    }
};

}  // namespace

std::vector<uint8_t> encode_checkpoint(const Model<float>& model, const CheckpointMeta& meta,
                                       const AdamState* adam) {
    Json j;
    j["model"] = model_config_to_json(meta.model_cfg);
    j["lora"] = meta.lora_cfg ? lora_config_to_json(*meta.lora_cfg) : Json(nullptr);
    j["stage"] = meta.stage;
    j["iteration"] = meta.iteration;
    j["has_adam"] = adam != nullptr;
    if (adam) {
        Json a;
        a["beta1"] = meta.adam.beta1;
        a["beta2"] = meta.adam.beta2;
        a["eps"] = meta.adam.eps;
        a["step"] = adam->step;
        j["adam"] = a;
    }
    j["tool_version"] = std::string(kToolVersion);
    const std::string meta_text = j.dump();

    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32le(out, kFormatVersion);
    put_u64le(out, meta_text.size());
    out.insert(out.end(), meta_text.begin(), meta_text.end());

    uint32_t n_tensors = 0;
    visit_params(model, [&](const std::string&, const auto&) { ++n_tensors; });
    if (adam) n_tensors *= 3;
    put_u32le(out, n_tensors);

    visit_params(model, [&](const std::string& name, const auto& t) {
        append_tensor(out, name, t.data(), static_cast<uint64_t>(t.rows()),
                      static_cast<uint64_t>(t.cols()));
    });
    if (adam) {
        visit_params(adam->m, [&](const std::string& name, const auto& t) {
            append_tensor(out, "adam.m." + name, t.data(), static_cast<uint64_t>(t.rows()),
                          static_cast<uint64_t>(t.cols()));
        });
        visit_params(adam->v, [&](const std::string& name, const auto& t) {
            append_tensor(out, "adam.v." + name, t.data(), static_cast<uint64_t>(t.rows()),
                          static_cast<uint64_t>(t.cols()));
        });
    }

    const Sha256Digest digest = sha256(out);
    out.insert(out.end(), digest.begin(), digest.end());
    return out;
}

void save_checkpoint(const std::string& path, const Model<float>& model,
                     const CheckpointMeta& meta, const AdamState* adam) {
    write_file_bytes(path, encode_checkpoint(model, meta, adam));
}

LoadedCheckpoint decode_checkpoint(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 4 + 4 + 8 + 32) throw CorruptCheckpoint("checkpoint too small");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw CorruptCheckpoint("checkpoint magic mismatch");

    // Verify the trailer before trusting any lengths.
    const size_t body_len = bytes.size() - 32;
    Sha256Digest digest = sha256(bytes.data(), body_len);
    if (std::memcmp(digest.data(), bytes.data() + body_len, 32) != 0)
        throw CorruptCheckpoint("checkpoint checksum mismatch");

    TensorReader rd{bytes, 4};
    const uint32_t version = rd.u32();
    if (version != kFormatVersion) throw VersionError("unsupported checkpoint format version");
    const uint64_t meta_len = rd.u64();
    rd.need(meta_len);
    const std::string meta_text(reinterpret_cast<const char*>(bytes.data() + rd.pos), meta_len);
    rd.pos += meta_len;

    Json j;
    try {
        j = Json::parse(meta_text);
    } catch (...) {
        throw CorruptCheckpoint("checkpoint meta is not valid JSON");
    }

    LoadedCheckpoint lc;
    lc.meta.model_cfg = model_config_from_json(j["model"]);
    if (!j["lora"].is_null()) lc.meta.lora_cfg = lora_config_from_json(j["lora"]);
    lc.meta.stage = j["stage"].get<std::string>();
    lc.meta.iteration = j["iteration"].get<int>();
    lc.meta.has_adam = j["has_adam"].get<bool>();
    if (lc.meta.has_adam) {
        lc.meta.adam.beta1 = j["adam"]["beta1"].get<double>();
        lc.meta.adam.beta2 = j["adam"]["beta2"].get<double>();
        lc.meta.adam.eps = j["adam"]["eps"].get<double>();
        lc.meta.adam_step = j["adam"]["step"].get<long>();
    }
    lc.meta.tool_version = j.value("tool_version", "");

    lc.model = init_model<float>(lc.meta.model_cfg, 0);
    if (lc.meta.lora_cfg) attach_lora(lc.model, *lc.meta.lora_cfg, 0);
    if (lc.meta.has_adam) {
        lc.adam.emplace();
        lc.adam->m = zeros_like(lc.model);
        lc.adam->v = zeros_like(lc.model);
        lc.adam->step = lc.meta.adam_step;
    }

    const uint32_t n_tensors = rd.u32();
    for (uint32_t k = 0; k < n_tensors; ++k) {
        std::string name = rd.name();
        const uint64_t rows = rd.u64();
        const uint64_t cols = rd.u64();

        Model<float>* target = &lc.model;
        if (name.starts_with("adam.m.")) {
            if (!lc.adam) throw CorruptCheckpoint("unexpected adam tensor");
            target = &lc.adam->m;
            name = name.substr(7);
        } else if (name.starts_with("adam.v.")) {
            if (!lc.adam) throw CorruptCheckpoint("unexpected adam tensor");
            target = &lc.adam->v;
            name = name.substr(7);
        }

        bool found = false;
        visit_params(*target, [&](const std::string& n, auto& t) {
            if (n != name) return;
            if (static_cast<uint64_t>(t.rows()) != rows || static_cast<uint64_t>(t.cols()) != cols)
                throw CorruptCheckpoint("tensor shape mismatch: " + name);
            rd.floats(t.data(), rows * cols);
            found = true;
        });
        if (!found) throw CorruptCheckpoint("unknown tensor in checkpoint: " + name);
    }
    if (rd.pos != body_len) throw CorruptCheckpoint("checkpoint has trailing bytes");
    return lc;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    return decode_checkpoint(read_file_bytes(path));
}

std::string base_weights_digest(const Model<float>& model) {
    std::vector<uint8_t> bytes;
    visit_params(
        model,
        [&](const std::string& name, const auto& t) {
            bytes.insert(bytes.end(), name.begin(), name.end());
            for (Eigen::Index i = 0; i < t.size(); ++i) put_f32le(bytes, t.data()[i]);
        },
        ParamFilter::base_only);
    return to_hex(sha256(bytes));
}

}  // namespace etlab
