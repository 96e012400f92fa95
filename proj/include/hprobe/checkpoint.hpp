#ifndef HPROBE_CHECKPOINT_HPP_
#define HPROBE_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include "hprobe/probe.hpp"

namespace hprobe {

inline constexpr char kCheckpointMagic[4] = {'T', 'P', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint64_t seed = 0;
  int layer = 0;
  // Free-form training provenance, e.g. the resolved config hash.
  std::string fingerprint;
};

struct Checkpoint {
  ProbeParams params;
  CheckpointInfo info;
};

// Layout: magic, u32 version, u64 header length, JSON header, f32 values in
// ProbeParams::flatten() order. Values are stored as f32, so round trips
// are exact for parameters already rounded with round_to_float().
void save_checkpoint(const std::filesystem::path& path, const ProbeParams& params,
                     const CheckpointInfo& info);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hprobe

#endif  // HPROBE_CHECKPOINT_HPP_
