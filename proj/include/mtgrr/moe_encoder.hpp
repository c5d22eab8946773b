#pragma once

// Aggregated-modality encoder: a GAT over the heterogeneous graph, one
// private expert GNN per modality subgraph, and a softmax gate over the six
// expert outputs.

#include <array>
#include <span>
#include <vector>

#include "mtgrr/graphs.hpp"
#include "mtgrr/nn.hpp"

namespace mtgrr::moe {

using ChannelArray = std::array<ad::Tensor, kNumModalities>;

struct GatLayerParams {
  // One entry per head. Scores are LeakyReLU(h_i W . att_dst + h_j W . att_src),
  // i.e. the attention vector over [W h_i || W h_j] split in two halves.
  std::vector<ad::Tensor> weight;   // d x d
  std::vector<ad::Tensor> att_dst;  // d x 1
  std::vector<ad::Tensor> att_src;  // d x 1

  static GatLayerParams init(Eigen::Index dim, int heads, nn::Rng& rng);
  int heads() const { return static_cast<int>(weight.size()); }
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

inline constexpr double kGatLeakySlope = 0.2;

/// Per head: alpha = softmax over N(i) u {i} of the edge scores,
/// out_h = ELU(sum_j alpha_ij W h_j). Head outputs are averaged.
ad::Tensor gat_layer_forward(const MessageEdges& edges, const ad::Tensor& states, const GatLayerParams& params);
ad::Tensor gat_layer_forward(const HeteroGraph& graph, const ad::Tensor& states, const GatLayerParams& params);

struct GlobalEncoderParams {
  ad::Tensor node_embeddings;  // 6N x d_in, free parameters
  std::vector<GatLayerParams> layers;
  /// One shared FNN, or six (one per node type) when built with per_type.
  std::vector<nn::FeedForward> fnn;

  static GlobalEncoderParams init(int n_regions, Eigen::Index d_in, Eigen::Index d_hid, int layers, int heads,
                                  bool fnn_per_type, nn::Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

/// C GAT layers over the 6N-node graph, the FNN head, then one N x d_hid
/// block per modality (REGION, POI, TAXI, LANDUSE, ROAD, REMOTE).
ChannelArray global_encode(const MessageEdges& edges, int n_regions, const GlobalEncoderParams& params);
ChannelArray global_encode(const HeteroGraph& graph, const GlobalEncoderParams& params);

struct ExpertLayerParams {
  ad::Tensor node_weight;  // d x d
  ad::Tensor edge_weight;  // d x d
  ad::Tensor edge_bias;    // 1 x d
};

struct ExpertParams {
  ad::Tensor edge_init;  // 1 x d, e^(0)
  std::vector<ExpertLayerParams> layers;

  static ExpertParams init(Eigen::Index d_hid, int layers, bool random_edge_init, nn::Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

struct ExpertStep {
  ad::Tensor nodes;
  ad::Tensor edge_state;
};

/// nodes' = act(A_norm (nodes o e) W) with A_norm the self-inclusive GCN
/// normalization; e' = e E + b.
ExpertStep expert_layer_forward(const ad::SparseMatrix& norm_adj, const ad::Tensor& nodes, const ad::Tensor& edge_state,
                                const ExpertLayerParams& layer, ad::Activation act = ad::Activation::Relu);
ExpertStep expert_layer_forward(const Subgraph& graph, const ad::Tensor& nodes, const ad::Tensor& edge_state,
                                const ExpertLayerParams& layer, ad::Activation act = ad::Activation::Relu);

/// Runs every expert's layers on its own subgraph starting from the matching
/// global block.
ChannelArray expert_encode(std::span<const ad::SparseMatrix> norm_adjs, const ChannelArray& global_outputs,
                           const std::array<ExpertParams, kNumModalities>& experts,
                           ad::Activation act = ad::Activation::Relu);

struct GatingParams {
  std::array<nn::Linear, kNumModalities> projections;  // D_m -> d_hid
  nn::Linear gate;                                     // 6 d_hid -> 6

  static GatingParams init(std::span<const Eigen::Index> widths, Eigen::Index d_hid, nn::Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

/// Row-softmax over six logits computed from the concatenated projected
/// feature vectors; N x 6.
ad::Tensor gating_weights(std::span<const ad::Tensor> features, const GatingParams& params);

/// hat_m(i) = g(i, m) * tilde_m(i).
ChannelArray apply_gating(const ad::Tensor& gates, const ChannelArray& tildes);

}  // namespace mtgrr::moe
