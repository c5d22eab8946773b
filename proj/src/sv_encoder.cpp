#include "mtgrr/sv_encoder.hpp"

namespace mtgrr::sv {

namespace {

ad::Tensor inverse_counts(const std::vector<int>& counts) {
  Matrix w(static_cast<Eigen::Index>(counts.size()), 1);
  for (std::size_t i = 0; i < counts.size(); ++i) w(i, 0) = counts[i] > 0 ? 1.0 / counts[i] : 0.0;
  return ad::Tensor::constant(std::move(w));
}

std::vector<int> neighbor_counts(const DualLevelGraph& graph) {
  std::vector<int> out(graph.n_regions);
  for (int i = 0; i < graph.n_regions; ++i) out[i] = static_cast<int>(graph.region_neighbors[i].size());
  return out;
}

ad::Tensor mean_images(const DualLevelGraph& graph, const ad::Tensor& images) {
  return ad::scale_rows(ad::scatter_add_rows(images, graph.image_owner, graph.n_regions),
                        inverse_counts(graph.image_counts()));
}

}  // namespace

SvEncoderParams SvEncoderParams::init(Eigen::Index d_raw, Eigen::Index d_feat, Eigen::Index d_hid, int layers,
                                      int heads, bool with_fallback_gat, nn::Rng& rng) {
  SvEncoderParams p;
  p.input_projection = nn::Linear::init(d_raw, d_feat, rng);
  for (int l = 0; l < layers; ++l) {
    DualLayerParams layer;
    layer.image_weight = nn::kaiming_uniform(d_feat, d_feat, d_feat, nn::kReluGain, rng);
    layer.gather_weight = nn::kaiming_uniform(d_feat, d_feat, d_feat, nn::kReluGain, rng);
    layer.neighbor_weight = nn::kaiming_uniform(d_feat, d_feat, d_feat, nn::kReluGain, rng);
    p.layers.push_back(std::move(layer));
  }
  p.head = nn::FeedForward::init(d_feat, 2 * d_hid, d_hid, rng);
  if (with_fallback_gat) p.fallback_gat = moe::GatLayerParams::init(d_feat, heads, rng);
  return p;
}

void SvEncoderParams::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  input_projection.visit(prefix + ".input", f);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    f(base + ".w_sv1", layers[l].image_weight);
    f(base + ".w_sv2", layers[l].gather_weight);
    f(base + ".w_sv3", layers[l].neighbor_weight);
  }
  head.visit(prefix + ".head", f);
  if (fallback_gat) fallback_gat->visit(prefix + ".fallback_gat", f);
}

DualStates init_sv_states(const DualLevelGraph& graph, const ad::Tensor& raw_images, const SvEncoderParams& params) {
  if (raw_images.rows() != graph.n_images()) {
    throw Error(ErrorCode::InvalidArgument, "init_sv_states: image rows do not match the graph");
  }
  DualStates s;
  s.images = params.input_projection(raw_images);
  s.virtuals = mean_images(graph, s.images);
  return s;
}

DualStates dual_level_layer(const DualLevelGraph& graph, const DualStates& prev, const DualLayerParams& layer,
                            const SvOptions& options) {
  DualStates next;
  ad::Tensor image_pre = ad::matmul(ad::gather_rows(prev.virtuals, graph.image_owner), layer.image_weight);
  next.images = ad::activate(image_pre, options.activation);
  if (options.residual_image_update) next.images = ad::add(next.images, prev.images);

  ad::Tensor from_images =
      ad::scatter_add_rows(ad::matmul(prev.images, layer.gather_weight), graph.image_owner, graph.n_regions);
  ad::Tensor from_neighbors =
      ad::spmm(adjacency_matrix(graph.n_regions, graph.inter_edges), ad::matmul(prev.virtuals, layer.neighbor_weight));
  if (options.mean_aggregate) {
    from_images = ad::scale_rows(from_images, inverse_counts(graph.image_counts()));
    from_neighbors = ad::scale_rows(from_neighbors, inverse_counts(neighbor_counts(graph)));
  }
  next.virtuals = ad::activate(ad::add(from_images, from_neighbors), options.activation);
  return next;
}

ad::Tensor sv_encode(const DualLevelGraph& graph, const ad::Tensor& raw_images, const SvEncoderParams& params,
                     const SvOptions& options) {
  DualStates states = init_sv_states(graph, raw_images, params);
  for (const auto& layer : params.layers) states = dual_level_layer(graph, states, layer, options);
  return params.head(states.virtuals);
}

ad::Tensor sv_encode_virtual_only(const DualLevelGraph& graph, const ad::Tensor& raw_images,
                                  const SvEncoderParams& params) {
  if (!params.fallback_gat) throw Error(ErrorCode::InvalidArgument, "sv_encode_virtual_only needs fallback GAT params");
  const ad::Tensor virtuals = mean_images(graph, params.input_projection(raw_images));
  const MessageEdges edges = message_edges_with_self_loops(graph.n_regions, graph.inter_edges);
  return params.head(moe::gat_layer_forward(edges, virtuals, *params.fallback_gat));
}

Matrix stack_images(const UrbanDataset& ds) {
  Matrix out(static_cast<Eigen::Index>(ds.total_images()), ds.d_raw_sv);
  Eigen::Index at = 0;
  for (const auto& set : ds.sv_sets) {
    if (set.features.rows() == 0) continue;
    out.middleRows(at, set.features.rows()) = set.features;
    at += set.features.rows();
  }
  return out;
}

}  // namespace mtgrr::sv
