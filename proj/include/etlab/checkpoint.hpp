#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "etlab/errors.hpp"
#include "etlab/model.hpp"

namespace etlab {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool operator==(const AdamConfig&) const = default;
};

/// Optimizer moments; tensor shapes mirror the trainable set of the model
/// they accompany.
struct AdamState {
    Model<float> m;
    Model<float> v;
    long step = 0;
};

struct CheckpointMeta {
    ModelConfig model_cfg;
    std::optional<LoRAConfig> lora_cfg;
    std::string stage;  // "pretrain" | "finetune"
    int iteration = 0;
    bool has_adam = false;
    AdamConfig adam;
    long adam_step = 0;
    std::string tool_version;
};

struct LoadedCheckpoint {
    Model<float> model;
    CheckpointMeta meta;
    std::optional<AdamState> adam;
};

/// Binary checkpoint: magic "ETLB", u32 format version, JSON meta block,
/// named float32 tensors (little-endian, fixed visit order), SHA-256
/// trailer over everything before it. Optimizer moments ride along under
/// "adam.m." / "adam.v." prefixes when present.
void save_checkpoint(const std::string& path, const Model<float>& model,
                     const CheckpointMeta& meta, const AdamState* adam = nullptr);

std::vector<uint8_t> encode_checkpoint(const Model<float>& model, const CheckpointMeta& meta,
                                       const AdamState* adam = nullptr);

LoadedCheckpoint load_checkpoint(const std::string& path);
LoadedCheckpoint decode_checkpoint(const std::vector<uint8_t>& bytes);

/// Little-endian primitives (the format is defined little-endian and decoded
/// byte-wise, so files read identically on any host).
inline void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}
inline void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
inline void put_f32le(std::vector<uint8_t>& out, float f) {
    put_u32le(out, std::bit_cast<uint32_t>(f));
}
inline uint32_t get_u32le(const uint8_t* p) {
    return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}
inline uint64_t get_u64le(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
    return v;
}
inline float get_f32le(const uint8_t* p) { return std::bit_cast<float>(get_u32le(p)); }

/// SHA-256 hex digest of the base (non-adapter) weights; the frozen-base
/// fine-tuning contract is checked against this.
std::string base_weights_digest(const Model<float>& model);

}  // namespace etlab
