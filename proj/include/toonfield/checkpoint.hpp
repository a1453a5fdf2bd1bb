#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace toonfield {

// Binary checkpoint container.
//
// Layout: 8-byte magic "TFCKPT\0\1", u32 format version, then tagged
// sections {u32 name length, name, u64 payload length, payload, u32 CRC-32}.
// Sections: "header" (step, stage, rng), "config" (JSON text), "metadata"
// (JSON text), "arrays" (named tensors), "sbm" (blend weights), "end".
// All integers are little-endian.
struct Checkpoint {
    static constexpr uint32_t kFormatVersion = 1;

    uint32_t format_version = kFormatVersion;
    int64_t step = 0;
    int64_t stage = 1;
    uint64_t rng_seed = 0;
    uint64_t rng_counter = 0;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json metadata = nlohmann::json::object();
    std::map<std::string, torch::Tensor> arrays;  // parameter id -> CPU contiguous values
    torch::Tensor sbm_raw;

    bool operator==(const Checkpoint& other) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws IntegrityError naming the offending section, or UnsupportedVersionError.
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Writes to a temporary sibling, then renames.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every parameter and buffer of `module` into `arrays` under `prefix.name`.
void store_module(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module);
// Restores a module from `prefix.name` arrays. Missing arrays raise IntegrityError,
// shape mismatches raise ConfigError.
void restore_module(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module);

}  // namespace toonfield
