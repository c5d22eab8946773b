#pragma once

// Spatially-aware multimodal fusion. Channel tensors are stacked token-major:
// row t * N + i of H^f is channel t of region i.

#include <span>

#include "mtgrr/nn.hpp"

namespace mtgrr::fusion {

/// Channel order: REGION, POI, TAXI, LANDUSE, ROAD, REMOTE, then street view.
inline constexpr int kFullChannelCount = 7;

struct FusionParams {
  int tokens = kFullChannelCount;
  int heads = 4;
  nn::Linear query, key, value, output;  // d -> d each
  ad::Tensor context_weight;             // W_1, d x d
  ad::Tensor score_weight;               // W_2 stored transposed, d x tokens
  ad::Tensor projection;                 // W_proj, d x d
  ad::Tensor mix_weighted;               // p_1, 1 x 1
  ad::Tensor mix_residual;               // p_2, 1 x 1

  static FusionParams init(Eigen::Index d_hid, int tokens, int heads, nn::Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

/// Per-region multi-head self-attention over the channel tokens plus a
/// residual: H^f = Attn(X) W_o + b_o + X. No information crosses regions.
ad::Tensor cross_modal_attention(std::span<const ad::Tensor> channels, const FusionParams& params);

/// C = mean of H^f over channels; O = sigmoid(C W_1) W_2^T; W_spa = softmax_rows(O).
ad::Tensor spatial_weights(const ad::Tensor& fused_tokens, const FusionParams& params);

struct FuseResult {
  ad::Tensor weighted;   // H^w, token-major
  ad::Tensor combined;   // H^c, token-major
  ad::Tensor embedding;  // N x d
};

/// H^w = (W_spa . H^f) W_proj, H^c = p_1 H^w + p_2 H^f, embedding = mean over channels.
FuseResult fuse(const ad::Tensor& fused_tokens, const ad::Tensor& weights, const FusionParams& params);

/// Stacks N x d channels into the token-major layout.
ad::Tensor stack_channels(std::span<const ad::Tensor> channels);

}  // namespace mtgrr::fusion
