#include "mtgrr/fusion.hpp"

#include <vector>

namespace mtgrr::fusion {

FusionParams FusionParams::init(Eigen::Index d_hid, int tokens, int heads, nn::Rng& rng) {
  if (heads <= 0 || d_hid % heads != 0) {
    throw Error(ErrorCode::InvalidArgument, "fusion: d_hid must be divisible by the number of heads");
  }
  FusionParams p;
  p.tokens = tokens;
  p.heads = heads;
  p.query = nn::Linear::init(d_hid, d_hid, rng);
  p.key = nn::Linear::init(d_hid, d_hid, rng);
  p.value = nn::Linear::init(d_hid, d_hid, rng);
  p.output = nn::Linear::init(d_hid, d_hid, rng);
  p.context_weight = nn::fan_in_uniform(d_hid, d_hid, d_hid, rng);
  p.score_weight = nn::fan_in_uniform(d_hid, tokens, d_hid, rng);
  p.projection = nn::fan_in_uniform(d_hid, d_hid, d_hid, rng);
  p.mix_weighted = ad::Tensor::scalar(0.5, true);
  p.mix_residual = ad::Tensor::scalar(0.5, true);
  return p;
}

void FusionParams::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  query.visit(prefix + ".query", f);
  key.visit(prefix + ".key", f);
  value.visit(prefix + ".value", f);
  output.visit(prefix + ".output", f);
  f(prefix + ".w1", context_weight);
  f(prefix + ".w2t", score_weight);
  f(prefix + ".w_proj", projection);
  f(prefix + ".p1", mix_weighted);
  f(prefix + ".p2", mix_residual);
}

ad::Tensor stack_channels(std::span<const ad::Tensor> channels) {
  for (const auto& c : channels) {
    if (c.rows() != channels[0].rows()) throw Error(ErrorCode::InvalidArgument, "channels disagree on region count");
  }
  return ad::concat_rows(channels);
}

ad::Tensor cross_modal_attention(std::span<const ad::Tensor> channels, const FusionParams& params) {
  if (static_cast<int>(channels.size()) != params.tokens) {
    throw Error(ErrorCode::ChannelCountMismatch, "expected " + std::to_string(params.tokens) + " channels, got " +
                                                     std::to_string(channels.size()));
  }
  const ad::Tensor x = stack_channels(channels);
  const ad::Tensor attended =
      ad::block_attention(params.query(x), params.key(x), params.value(x), params.tokens, params.heads);
  return ad::add(params.output(attended), x);
}

ad::Tensor spatial_weights(const ad::Tensor& fused_tokens, const FusionParams& params) {
  const ad::Tensor context = ad::mean_blocks(fused_tokens, params.tokens);
  const ad::Tensor scores = ad::matmul(ad::sigmoid(ad::matmul(context, params.context_weight)), params.score_weight);
  return ad::row_softmax(scores);
}

FuseResult fuse(const ad::Tensor& fused_tokens, const ad::Tensor& weights, const FusionParams& params) {
  const int t_count = params.tokens;
  if (weights.cols() != t_count || fused_tokens.rows() != weights.rows() * t_count) {
    throw Error(ErrorCode::InvalidArgument, "fuse: weight / token shapes disagree");
  }
  const Eigen::Index n = weights.rows();
  std::vector<ad::Tensor> scaled;
  scaled.reserve(t_count);
  for (int t = 0; t < t_count; ++t) {
    scaled.push_back(ad::scale_rows(ad::slice_rows(fused_tokens, t * n, n), ad::slice_cols(weights, t, 1)));
  }
  FuseResult r;
  r.weighted = ad::matmul(ad::concat_rows(scaled), params.projection);
  r.combined = ad::add(ad::scale_by(r.weighted, params.mix_weighted), ad::scale_by(fused_tokens, params.mix_residual));
  r.embedding = ad::mean_blocks(r.combined, t_count);
  return r;
}

}  // namespace mtgrr::fusion
