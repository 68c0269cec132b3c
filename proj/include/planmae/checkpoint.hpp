#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "planmae/model.hpp"
#include "planmae/training.hpp"

namespace planmae {

/// Container layout (all integers little-endian):
///
///   offset 0   4 bytes   magic "PMAE"
///   offset 4   4 bytes   uint32 format version (1)
///   offset 8   8 bytes   uint64 manifest length L
///   offset 16  L bytes   UTF-8 JSON manifest
///   offset 16+L          payload: float32 tensors, concatenated in
///                        manifest order, each row-major
///
/// The manifest holds the model config, the step count, the training
/// config and seed (when saved by the trainer), and for every tensor its
/// name, shape, byte offset into the payload and byte length. Optimizer
/// moments, when present, follow the parameters as "opt.m/<name>" and
/// "opt.v/<name>".
struct Checkpoint {
    ModelConfig config;
    ModelParams<float> params;
    std::int64_t step = 0;
    std::optional<TrainConfig> train;
    std::optional<OptState> opt;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws CorruptCheckpoint on bad magic, manifest/shape mismatch, or a
/// payload whose size disagrees with the manifest; IoError if unreadable.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace planmae
