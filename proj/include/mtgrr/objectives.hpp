#pragma once

#include <span>
#include <vector>

#include "mtgrr/dataset.hpp"
#include "mtgrr/nn.hpp"

namespace mtgrr::objectives {

enum class Level { Aggregated, StreetView };
enum class Reduction { Mean, Sum };

struct TripletBatch {
  std::vector<int> anchors;
  std::vector<int> positives;
  std::vector<int> negatives;
  Level level = Level::Aggregated;
  /// Anchors dropped because they have no adjacent region or are adjacent to
  /// every other region.
  std::vector<int> skipped;

  std::size_t size() const { return anchors.size(); }
};

/// For every anchor with at least one neighbor: a uniformly drawn adjacent
/// positive and a uniformly drawn non-adjacent negative (never the anchor).
/// Throws NoValidNegative only when no anchor can form a triplet because every
/// candidate is adjacent to all other regions.
TripletBatch sample_triplets(const Adjacency& adjacency, nn::Rng& rng, int per_anchor = 1,
                             Level level = Level::Aggregated);
TripletBatch sample_triplets(const Adjacency& adjacency, std::uint64_t seed, int per_anchor = 1,
                             Level level = Level::Aggregated);

/// s(i) drawn uniformly from every region except i.
std::vector<int> sample_negative_map(int n_regions, nn::Rng& rng);

/// Average of the six aggregated-level channels.
ad::Tensor aggregated_anchor(std::span<const ad::Tensor> hats);

/// max(|a - p| - |a - n| + margin, 0) for single vectors.
double triplet_loss(const Vector& anchor, const Vector& positive, const Vector& negative, double margin);
/// Batched hinge over the rows of `embeddings`, reduced by mean or sum.
ad::Tensor triplet_loss(const ad::Tensor& embeddings, const TripletBatch& batch, double margin,
                        Reduction reduction = Reduction::Mean);

struct MatcherParams {
  nn::Linear hidden;  // 2 d_hid -> d_ff
  nn::Linear score;   // d_ff -> 1

  static MatcherParams init(Eigen::Index d_hid, Eigen::Index d_ff, nn::Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
  /// Pre-sigmoid logits of Phi([channel_i, fused_i]) for each row pair.
  ad::Tensor logits(const ad::Tensor& channel, const ad::Tensor& fused) const;
};

/// -[log Phi(m_i, H_i) + log(1 - Phi(m_i, H_s(i)))] over every region and
/// channel, averaged over (region, channel) pairs in mean form.
ad::Tensor fusion_bce_loss(std::span<const ad::Tensor> channels, const ad::Tensor& fused, const MatcherParams& matcher,
                           std::span<const int> negative_map, Reduction reduction = Reduction::Mean);

struct LossReport {
  double l_agg = 0;
  double l_sv = 0;
  double l_f = 0;
  double l_total = 0;
};

double total_loss(double l_agg, double l_sv, double l_f);
ad::Tensor total_loss(const ad::Tensor& l_agg, const ad::Tensor& l_sv, const ad::Tensor& l_f);

}  // namespace mtgrr::objectives
