#pragma once

#include <cstdint>

#include "mtgrr/graphs.hpp"

namespace mtgrr {

struct WalkEmbeddingConfig {
  int dims = 180;
  int walk_length = 20;
  int walks_per_node = 10;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 0;
};

/// DeepWalk embeddings (node2vec with p = q = 1): uniform random walks fed to
/// skip-gram with negative sampling. An isolated node walks in place, so it is
/// trained only against itself as context.
Matrix region_positional_embeddings(const Subgraph& boundary, const WalkEmbeddingConfig& cfg);

}  // namespace mtgrr
