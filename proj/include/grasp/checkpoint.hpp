#pragma once

#include "grasp/model.hpp"

#include <filesystem>
#include <string>

namespace grasp {

struct Checkpoint {
    ModelConfig config;
    Parameters<float> params;
    AdamState<float> optimizer;
    std::string config_hash;  // run configuration that produced it
};

/// "GSAR-CKPT", u32 version, u32-length-prefixed JSON config block, u32 tensor
/// count, then per tensor: u32 name length, name, u32 rank, u32 dims, f32 data.
/// Optimizer moments are stored as "adam.m.<name>" / "adam.v.<name>".
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws IoError on bad magic, version, truncation or inconsistent tensors.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// As load_checkpoint, but refuses a checkpoint whose vocabulary size differs.
Checkpoint load_checkpoint(const std::filesystem::path& path, int expected_vocab_size);

}  // namespace grasp
