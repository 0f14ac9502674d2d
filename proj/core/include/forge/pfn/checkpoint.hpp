#ifndef FORGE_PFN_CHECKPOINT_HPP
#define FORGE_PFN_CHECKPOINT_HPP

#include <cstdint>
#include <string>

#include "forge/pfn/config.hpp"
#include "forge/pfn/net.hpp"

namespace forge::pfn {

inline constexpr int kCheckpointVersion = 1;

// Full training state: parameters, optimizer moments and provenance. All
// tensors are f32 on disk and in memory.
struct Checkpoint {
  ModelConfig config;
  NetParams<float> params;
  NetParams<float> adam_m;
  NetParams<float> adam_v;
  std::int64_t adam_t = 0;

  std::int64_t steps_completed = 0;
  double final_loss = 0.0;
  std::string prior_digest;
  int format_version = kCheckpointVersion;

  static Checkpoint fresh(const ModelConfig& config, std::uint64_t seed);
};

}  // namespace forge::pfn

#endif  // FORGE_PFN_CHECKPOINT_HPP
