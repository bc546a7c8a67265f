#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "vlnwb/tensor.hpp"

namespace vlnwb {

// On-disk training snapshot. Little-endian throughout:
//   magic "VLNWBCKP", u32 version, u64 seed, u64 step, u64 epoch,
//   u64 config_hash, 4 x u64 RNG state, u32 tensor count, then per tensor:
//   u32 name length, UTF-8 name, u8 dtype (0 = f32, 1 = f64), u32 rank,
//   u32 dims[rank], raw payload.
// Adam moments ride along as "<name></m>" / "<name></v>" records so a resumed
// run continues the uninterrupted one bit-for-bit.
struct CheckpointMeta {
  uint64_t seed = 0;
  uint64_t step = 0;
  uint64_t epoch = 0;
  uint64_t config_hash = 0;
  std::array<uint64_t, 4> rng_state{};
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const CheckpointMeta& meta);

// Loads into a store whose parameters are already registered; shape or name
// mismatches are reported by parameter name. Restores store.step.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParamStore& store);

// Header-only peek (seed/step/hash) without touching parameters.
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace vlnwb
