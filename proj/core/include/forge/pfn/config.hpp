#ifndef FORGE_PFN_CONFIG_HPP
#define FORGE_PFN_CONFIG_HPP

#include <cstdint>

#include "forge/errors.hpp"

namespace forge::pfn {

// Architecture and pre-training hyperparameters. Desk-scale defaults:
// trainable on one commodity core in well under the four-hour budget.
struct ModelConfig {
  int embed_dim = 64;
  int num_layers = 4;
  int num_heads = 4;
  int ff_dim = 128;
  int max_features = 16;
  int max_rows = 1024;
  double learning_rate = 3e-4;
  int batch_datasets = 8;
  int steps = 1500;  // S, per epoch
  int epochs = 1;    // E
  std::uint64_t seed = 0;

  int head_dim() const { return embed_dim / num_heads; }

  void validate() const {
    if (embed_dim <= 0 || num_layers <= 0 || num_heads <= 0 || ff_dim <= 0 ||
        max_features <= 0 || max_rows <= 1 || batch_datasets <= 0 ||
        steps <= 0 || epochs <= 0)
      throw ConfigError("model config fields must be positive");
    if (embed_dim % num_heads != 0)
      throw ConfigError("embed_dim must be divisible by num_heads");
    if (!(learning_rate >= 0.0))
      throw ConfigError("learning rate must be non-negative");
  }
};

}  // namespace forge::pfn

#endif  // FORGE_PFN_CONFIG_HPP
