#include "mtgrr/objectives.hpp"

#include <algorithm>

namespace mtgrr::objectives {

TripletBatch sample_triplets(const Adjacency& adjacency, nn::Rng& rng, int per_anchor, Level level) {
  const int n = adjacency.size();
  if (n < 3) throw Error(ErrorCode::TooFewRegions, "triplet sampling needs at least three regions");
  if (per_anchor < 1) throw Error(ErrorCode::InvalidArgument, "triplets_per_anchor must be >= 1");
  TripletBatch batch;
  batch.level = level;
  std::vector<int> non_neighbors;
  int saturated = 0;
  for (int i = 0; i < n; ++i) {
    const auto nb = adjacency.neighbors(i);
    if (nb.empty()) {
      batch.skipped.push_back(i);
      continue;
    }
    non_neighbors.clear();
    for (int j = 0; j < n; ++j) {
      if (j != i && !adjacency(i, j)) non_neighbors.push_back(j);
    }
    if (non_neighbors.empty()) {
      batch.skipped.push_back(i);
      ++saturated;
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick_pos(0, nb.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_neg(0, non_neighbors.size() - 1);
    for (int r = 0; r < per_anchor; ++r) {
      batch.anchors.push_back(i);
      batch.positives.push_back(nb[pick_pos(rng)]);
      batch.negatives.push_back(non_neighbors[pick_neg(rng)]);
    }
  }
  if (batch.anchors.empty() && saturated > 0) {
    throw Error(ErrorCode::NoValidNegative, "every region with a neighbor is adjacent to all other regions");
  }
  return batch;
}

TripletBatch sample_triplets(const Adjacency& adjacency, std::uint64_t seed, int per_anchor, Level level) {
  nn::Rng rng(seed);
  return sample_triplets(adjacency, rng, per_anchor, level);
}

std::vector<int> sample_negative_map(int n_regions, nn::Rng& rng) {
  if (n_regions < 2) throw Error(ErrorCode::TooFewRegions, "negative map needs at least two regions");
  std::vector<int> out(n_regions);
  std::uniform_int_distribution<int> pick(0, n_regions - 2);
  for (int i = 0; i < n_regions; ++i) {
    const int j = pick(rng);
    out[i] = j >= i ? j + 1 : j;
  }
  return out;
}

ad::Tensor aggregated_anchor(std::span<const ad::Tensor> hats) {
  if (hats.empty()) throw Error(ErrorCode::InvalidArgument, "aggregated_anchor: no channels");
  ad::Tensor acc = hats[0];
  for (std::size_t m = 1; m < hats.size(); ++m) acc = ad::add(acc, hats[m]);
  return ad::scale(acc, 1.0 / static_cast<double>(hats.size()));
}

double triplet_loss(const Vector& anchor, const Vector& positive, const Vector& negative, double margin) {
  return std::max((anchor - positive).norm() - (anchor - negative).norm() + margin, 0.0);
}

ad::Tensor triplet_loss(const ad::Tensor& embeddings, const TripletBatch& batch, double margin, Reduction reduction) {
  if (batch.size() == 0) return ad::Tensor::scalar(0.0);
  const ad::Tensor a = ad::gather_rows(embeddings, batch.anchors);
  const ad::Tensor d_pos = ad::row_norm(ad::sub(a, ad::gather_rows(embeddings, batch.positives)));
  const ad::Tensor d_neg = ad::row_norm(ad::sub(a, ad::gather_rows(embeddings, batch.negatives)));
  const ad::Tensor hinge = ad::relu(ad::add_scalar(ad::sub(d_pos, d_neg), margin));
  return reduction == Reduction::Mean ? ad::mean(hinge) : ad::sum(hinge);
}

MatcherParams MatcherParams::init(Eigen::Index d_hid, Eigen::Index d_ff, nn::Rng& rng) {
  MatcherParams p;
  p.hidden = nn::Linear::init(2 * d_hid, d_ff, rng);
  p.score = nn::Linear::init(d_ff, 1, rng);
  return p;
}

void MatcherParams::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  hidden.visit(prefix + ".hidden", f);
  score.visit(prefix + ".score", f);
}

ad::Tensor MatcherParams::logits(const ad::Tensor& channel, const ad::Tensor& fused) const {
  const std::array<ad::Tensor, 2> pair{channel, fused};
  return score(ad::gelu(hidden(ad::concat_cols(pair))));
}

ad::Tensor fusion_bce_loss(std::span<const ad::Tensor> channels, const ad::Tensor& fused, const MatcherParams& matcher,
                           std::span<const int> negative_map, Reduction reduction) {
  const auto n = static_cast<std::size_t>(fused.rows());
  if (negative_map.size() != n) throw Error(ErrorCode::InvalidArgument, "negative map must have one entry per region");
  for (std::size_t i = 0; i < n; ++i) {
    if (negative_map[i] == static_cast<int>(i)) {
      throw Error(ErrorCode::DegenerateNegative, "s(" + std::to_string(i) + ") == " + std::to_string(i));
    }
  }
  const ad::Tensor shuffled = ad::gather_rows(fused, negative_map);
  ad::Tensor total;
  for (const auto& channel : channels) {
    const ad::Tensor pos = ad::log_sigmoid(matcher.logits(channel, fused));
    const ad::Tensor neg = ad::log_sigmoid(ad::scale(matcher.logits(channel, shuffled), -1.0));
    const ad::Tensor term = ad::sum(ad::add(pos, neg));
    total = total.defined() ? ad::add(total, term) : term;
  }
  if (!total.defined()) return ad::Tensor::scalar(0.0);
  const double denom = reduction == Reduction::Mean ? static_cast<double>(channels.size() * n) : 1.0;
  return ad::scale(total, -1.0 / denom);
}

double total_loss(double l_agg, double l_sv, double l_f) { return l_agg + l_sv + l_f; }

ad::Tensor total_loss(const ad::Tensor& l_agg, const ad::Tensor& l_sv, const ad::Tensor& l_f) {
  return ad::add(ad::add(l_agg, l_sv), l_f);
}

}  // namespace mtgrr::objectives
