#pragma once

// Street-view encoder over the dual-level graph: image nodes talk only to
// their region's virtual node, virtual nodes additionally talk to adjacent
// regions' virtual nodes.

#include <utility>
#include <vector>

#include "mtgrr/graphs.hpp"
#include "mtgrr/moe_encoder.hpp"
#include "mtgrr/nn.hpp"

namespace mtgrr::sv {

struct DualLayerParams {
  ad::Tensor image_weight;     // W_sv1: virtual -> image
  ad::Tensor gather_weight;    // W_sv2: image -> virtual
  ad::Tensor neighbor_weight;  // W_sv3: virtual -> adjacent virtual
};

struct SvEncoderParams {
  nn::Linear input_projection;  // d_raw -> d_feat
  std::vector<DualLayerParams> layers;
  nn::FeedForward head;  // d_feat -> 2 d_hid -> d_hid
  /// Only present for the ablation that drops first-level nodes; a GAT over
  /// the region boundary graph replaces the dual-level layers.
  std::optional<moe::GatLayerParams> fallback_gat;

  static SvEncoderParams init(Eigen::Index d_raw, Eigen::Index d_feat, Eigen::Index d_hid, int layers, int heads,
                              bool with_fallback_gat, nn::Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

struct SvOptions {
  ad::Activation activation = ad::Activation::Relu;
  /// Divide the image and neighbor sums by their counts.
  bool mean_aggregate = false;
  /// Add the image's previous state to its update.
  bool residual_image_update = false;
};

struct DualStates {
  ad::Tensor images;   // M x d_feat
  ad::Tensor virtuals; // N x d_feat
};

/// Images are projected; each virtual node starts at the mean of its region's
/// projected images (zero for a region with no images).
DualStates init_sv_states(const DualLevelGraph& graph, const ad::Tensor& raw_images, const SvEncoderParams& params);

/// One simultaneous update of both levels from the previous states.
DualStates dual_level_layer(const DualLevelGraph& graph, const DualStates& prev, const DualLayerParams& layer,
                            const SvOptions& options = {});

/// init, all layers, then the head on the virtual nodes; N x d_hid.
ad::Tensor sv_encode(const DualLevelGraph& graph, const ad::Tensor& raw_images, const SvEncoderParams& params,
                     const SvOptions& options = {});

/// Ablation path: averaged image features per region, one GAT layer over the
/// boundary graph, then the head.
ad::Tensor sv_encode_virtual_only(const DualLevelGraph& graph, const ad::Tensor& raw_images,
                                  const SvEncoderParams& params);

/// Stacks every image feature row in first-level node order.
Matrix stack_images(const UrbanDataset& ds);

}  // namespace mtgrr::sv
