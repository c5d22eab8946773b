#include "mtgrr/moe_encoder.hpp"

namespace mtgrr::moe {

GatLayerParams GatLayerParams::init(Eigen::Index dim, int heads, nn::Rng& rng) {
  GatLayerParams p;
  for (int h = 0; h < heads; ++h) {
    p.weight.push_back(nn::kaiming_uniform(dim, dim, dim, 1.0, rng));
    p.att_dst.push_back(nn::kaiming_uniform(dim, 1, dim, 1.0, rng));
    p.att_src.push_back(nn::kaiming_uniform(dim, 1, dim, 1.0, rng));
  }
  return p;
}

void GatLayerParams::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  for (int h = 0; h < heads(); ++h) {
    const std::string head = prefix + ".head" + std::to_string(h);
    f(head + ".weight", weight[h]);
    f(head + ".att_dst", att_dst[h]);
    f(head + ".att_src", att_src[h]);
  }
}

ad::Tensor gat_layer_forward(const MessageEdges& edges, const ad::Tensor& states, const GatLayerParams& params) {
  const int n = edges.n_nodes;
  if (states.rows() != n) throw Error(ErrorCode::InvalidArgument, "gat_layer_forward: state rows != node count");
  ad::Tensor total;
  for (int h = 0; h < params.heads(); ++h) {
    const ad::Tensor projected = ad::matmul(states, params.weight[h]);
    const ad::Tensor dst_score = ad::matmul(projected, params.att_dst[h]);
    const ad::Tensor src_score = ad::matmul(projected, params.att_src[h]);
    const ad::Tensor scores =
        ad::leaky_relu(ad::add(ad::gather_rows(dst_score, edges.dst), ad::gather_rows(src_score, edges.src)),
                       kGatLeakySlope);
    const ad::Tensor alpha = ad::segment_softmax(scores, edges.dst, n);
    const ad::Tensor messages = ad::scale_rows(ad::gather_rows(projected, edges.src), alpha);
    const ad::Tensor head_out = ad::elu(ad::scatter_add_rows(messages, edges.dst, n));
    total = total.defined() ? ad::add(total, head_out) : head_out;
  }
  return params.heads() == 1 ? total : ad::scale(total, 1.0 / params.heads());
}

ad::Tensor gat_layer_forward(const HeteroGraph& graph, const ad::Tensor& states, const GatLayerParams& params) {
  std::vector<Edge> all = graph.intra_edges;
  all.insert(all.end(), graph.cross_edges.begin(), graph.cross_edges.end());
  return gat_layer_forward(message_edges_with_self_loops(graph.n_nodes(), all), states, params);
}

GlobalEncoderParams GlobalEncoderParams::init(int n_regions, Eigen::Index d_in, Eigen::Index d_hid, int layers,
                                              int heads, bool fnn_per_type, nn::Rng& rng) {
  GlobalEncoderParams p;
  p.node_embeddings = nn::normal(static_cast<Eigen::Index>(kNumModalities) * n_regions, d_in, 1.0, rng);
  for (int c = 0; c < layers; ++c) p.layers.push_back(GatLayerParams::init(d_in, heads, rng));
  const int n_fnn = fnn_per_type ? kNumModalities : 1;
  for (int t = 0; t < n_fnn; ++t) p.fnn.push_back(nn::FeedForward::init(d_in, 2 * d_hid, d_hid, rng));
  return p;
}

void GlobalEncoderParams::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  f(prefix + ".node_embeddings", node_embeddings);
  for (std::size_t c = 0; c < layers.size(); ++c) layers[c].visit(prefix + ".gat" + std::to_string(c), f);
  for (std::size_t t = 0; t < fnn.size(); ++t) fnn[t].visit(prefix + ".fnn" + std::to_string(t), f);
}

ChannelArray global_encode(const MessageEdges& edges, int n_regions, const GlobalEncoderParams& params) {
  ad::Tensor states = params.node_embeddings;
  for (const auto& layer : params.layers) states = gat_layer_forward(edges, states, layer);
  ChannelArray out;
  if (params.fnn.size() == 1) {
    const ad::Tensor refined = params.fnn[0](states);
    for (int m = 0; m < kNumModalities; ++m) out[m] = ad::slice_rows(refined, m * n_regions, n_regions);
  } else {
    for (int m = 0; m < kNumModalities; ++m) out[m] = params.fnn[m](ad::slice_rows(states, m * n_regions, n_regions));
  }
  return out;
}

ChannelArray global_encode(const HeteroGraph& graph, const GlobalEncoderParams& params) {
  std::vector<Edge> all = graph.intra_edges;
  all.insert(all.end(), graph.cross_edges.begin(), graph.cross_edges.end());
  return global_encode(message_edges_with_self_loops(graph.n_nodes(), all), graph.n_regions, params);
}

ExpertParams ExpertParams::init(Eigen::Index d_hid, int layers, bool random_edge_init, nn::Rng& rng) {
  ExpertParams p;
  p.edge_init = random_edge_init ? nn::fan_in_uniform(1, d_hid, 1, rng) : ad::Tensor::parameter(Matrix::Ones(1, d_hid));
  for (int l = 0; l < layers; ++l) {
    ExpertLayerParams layer;
    layer.node_weight = nn::kaiming_uniform(d_hid, d_hid, d_hid, nn::kReluGain, rng);
    layer.edge_weight = nn::kaiming_uniform(d_hid, d_hid, d_hid, 1.0, rng);
    layer.edge_bias = nn::fan_in_uniform(1, d_hid, d_hid, rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void ExpertParams::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  f(prefix + ".edge_init", edge_init);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    f(base + ".node_weight", layers[l].node_weight);
    f(base + ".edge_weight", layers[l].edge_weight);
    f(base + ".edge_bias", layers[l].edge_bias);
  }
}

ExpertStep expert_layer_forward(const ad::SparseMatrix& norm_adj, const ad::Tensor& nodes, const ad::Tensor& edge_state,
                                const ExpertLayerParams& layer, ad::Activation act) {
  const ad::Tensor modulated = ad::mul_row(nodes, edge_state);
  ExpertStep step;
  step.nodes = ad::activate(ad::matmul(ad::spmm(norm_adj, modulated), layer.node_weight), act);
  step.edge_state = ad::add(ad::matmul(edge_state, layer.edge_weight), layer.edge_bias);
  return step;
}

ExpertStep expert_layer_forward(const Subgraph& graph, const ad::Tensor& nodes, const ad::Tensor& edge_state,
                                const ExpertLayerParams& layer, ad::Activation act) {
  return expert_layer_forward(normalized_adjacency(graph), nodes, edge_state, layer, act);
}

ChannelArray expert_encode(std::span<const ad::SparseMatrix> norm_adjs, const ChannelArray& global_outputs,
                           const std::array<ExpertParams, kNumModalities>& experts, ad::Activation act) {
  if (norm_adjs.size() != kNumModalities) throw Error(ErrorCode::InvalidArgument, "expert_encode needs six subgraphs");
  ChannelArray out;
  for (int m = 0; m < kNumModalities; ++m) {
    ad::Tensor nodes = global_outputs[m];
    ad::Tensor edge = experts[m].edge_init;
    for (const auto& layer : experts[m].layers) {
      auto step = expert_layer_forward(norm_adjs[m], nodes, edge, layer, act);
      nodes = std::move(step.nodes);
      edge = std::move(step.edge_state);
    }
    out[m] = nodes;
  }
  return out;
}

GatingParams GatingParams::init(std::span<const Eigen::Index> widths, Eigen::Index d_hid, nn::Rng& rng) {
  if (widths.size() != kNumModalities) throw Error(ErrorCode::InvalidArgument, "gating needs six feature widths");
  GatingParams p;
  for (int m = 0; m < kNumModalities; ++m) p.projections[m] = nn::Linear::init(widths[m], d_hid, rng);
  p.gate = nn::Linear::init(kNumModalities * d_hid, kNumModalities, rng);
  return p;
}

void GatingParams::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  for (int m = 0; m < kNumModalities; ++m) {
    projections[m].visit(prefix + ".proj_" + std::string(name_of(static_cast<Modality>(m))), f);
  }
  gate.visit(prefix + ".gate", f);
}

ad::Tensor gating_weights(std::span<const ad::Tensor> features, const GatingParams& params) {
  if (features.size() != kNumModalities) throw Error(ErrorCode::InvalidArgument, "gating needs six feature tables");
  std::vector<ad::Tensor> projected;
  projected.reserve(kNumModalities);
  for (int m = 0; m < kNumModalities; ++m) projected.push_back(params.projections[m](features[m]));
  return ad::row_softmax(params.gate(ad::concat_cols(projected)));
}

ChannelArray apply_gating(const ad::Tensor& gates, const ChannelArray& tildes) {
  if (gates.cols() != kNumModalities) throw Error(ErrorCode::InvalidArgument, "apply_gating: gates must be N x 6");
  ChannelArray out;
  for (int m = 0; m < kNumModalities; ++m) {
    if (tildes[m].rows() != gates.rows()) throw Error(ErrorCode::InvalidArgument, "apply_gating: row mismatch");
    out[m] = ad::scale_rows(tildes[m], ad::slice_cols(gates, m, 1));
  }
  return out;
}

}  // namespace mtgrr::moe
