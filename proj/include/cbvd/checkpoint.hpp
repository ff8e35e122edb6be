#pragma once

// Binary checkpoint layout (little-endian):
//   "CBVD" | u32 version | u32 snapshot length | snapshot bytes (key=value text)
//   | u32 tensor count | per tensor: u32 name length, name bytes, u32 rank,
//     u32 extents[rank], f32 payload
//   | u64 FNV-1a of every preceding byte
// The snapshot carries the training config, the stage marker and the Adam
// step counters; tensors cover all network parameters followed by the Adam
// moments ("adam1.m:<param>", "adam1.v:<param>", same for adam2).

#include "cbvd/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace cbvd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws LoadError on bad magic, version mismatch, checksum mismatch or unexpected tensors.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a, used to compare checkpoints and outputs across runs.
std::uint64_t fnv1a64(const std::string& bytes);

} // namespace cbvd
