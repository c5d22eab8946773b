#include <gtest/gtest.h>

#include "mtgrr/fusion.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace mtgrr {
namespace {

using testing::random_matrix;

double max_abs(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::vector<ad::Tensor> random_channels(int n, int d, std::mt19937_64& rng, int tokens = fusion::kFullChannelCount) {
  std::vector<ad::Tensor> c;
  for (int t = 0; t < tokens; ++t) c.push_back(ad::Tensor::constant(random_matrix(n, d, rng)));
  return c;
}

oracle::FusionWeights oracle_weights(const fusion::FusionParams& p) {
  oracle::FusionWeights w;
  w.attention = {p.query.weight.value(), p.key.weight.value(),  p.value.weight.value(), p.output.weight.value(),
                 p.query.bias.value(),   p.key.bias.value(),    p.value.bias.value(),   p.output.bias.value()};
  w.w1 = p.context_weight.value();
  w.w2 = p.score_weight.value().transpose();
  w.wproj = p.projection.value();
  w.p1 = p.mix_weighted.item();
  w.p2 = p.mix_residual.item();
  return w;
}

Matrix region_tokens(const std::vector<ad::Tensor>& channels, int i) {
  Matrix x(channels.size(), channels[0].cols());
  for (std::size_t t = 0; t < channels.size(); ++t) x.row(t) = channels[t].value().row(i);
  return x;
}

TEST(CrossModalAttention, ZeroedValueAndOutputIsResidual) {
  nn::Rng rng(1);
  auto p = fusion::FusionParams::init(8, 7, 4, rng);
  p.value.weight.mutable_value().setZero();
  p.value.bias.mutable_value().setZero();
  p.output.weight.mutable_value().setZero();
  p.output.bias.mutable_value().setZero();
  const auto ch = random_channels(3, 8, rng);
  EXPECT_TRUE(fusion::cross_modal_attention(ch, p).value() == fusion::stack_channels(ch).value());
}

TEST(CrossModalAttention, WrongChannelCount) {
  nn::Rng rng(2);
  const auto p = fusion::FusionParams::init(8, 7, 4, rng);
  try {
    fusion::cross_modal_attention(random_channels(2, 8, rng, 6), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ChannelCountMismatch);
  }
}

TEST(CrossModalAttention, RegionsAreIndependent) {
  nn::Rng rng(3);
  const auto p = fusion::FusionParams::init(8, 7, 4, rng);
  auto ch = random_channels(4, 8, rng);
  const Matrix a = fusion::cross_modal_attention(ch, p).value();
  for (auto& c : ch) {
    Matrix v = c.value();
    v.row(2) *= -3.0;
    c = ad::Tensor::constant(v);
  }
  const Matrix b = fusion::cross_modal_attention(ch, p).value();
  for (int t = 0; t < 7; ++t) {
    for (int i = 0; i < 4; ++i) {
      if (i == 2) continue;
      EXPECT_TRUE(a.row(t * 4 + i) == b.row(t * 4 + i));
    }
  }
}

TEST(CrossModalAttention, MatchesDenseOracle) {
  nn::Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = fusion::FusionParams::init(8, 7, 1 << (trial % 3), rng);
    const auto ch = random_channels(1 + trial % 4, 8, rng);
    const Matrix got = fusion::cross_modal_attention(ch, p).value();
    const auto w = oracle_weights(p);
    const int n = static_cast<int>(ch[0].rows());
    for (int i = 0; i < n; ++i) {
      const Matrix ref = oracle::region_attention(region_tokens(ch, i), w.attention, p.heads);
      for (int t = 0; t < 7; ++t) EXPECT_LT((got.row(t * n + i) - ref.row(t)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(SpatialWeights, ZeroScoreWeightIsUniform) {
  nn::Rng rng(5);
  auto p = fusion::FusionParams::init(8, 7, 4, rng);
  p.score_weight.mutable_value().setZero();
  const Matrix w = fusion::spatial_weights(fusion::stack_channels(random_channels(3, 8, rng)), p).value();
  EXPECT_LT((w.array() - 1.0 / 7.0).abs().maxCoeff(), 1e-15);
}

TEST(SpatialWeights, RowsAreProbabilityVectors) {
  nn::Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = fusion::FusionParams::init(8, 7, 4, rng);
    const Matrix w = fusion::spatial_weights(fusion::stack_channels(random_channels(5, 8, rng)), p).value();
    for (int i = 0; i < 5; ++i) {
      EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-12);
      EXPECT_GT(w.row(i).minCoeff(), 0.0);
      EXPECT_LT(w.row(i).maxCoeff(), 1.0);
    }
  }
}

TEST(SpatialWeights, HandComputedTwoTokenCase) {
  // one region, d = 2, two tokens [1, 0] and [0, 3]: C = [0.5, 1.5].
  nn::Rng rng(7);
  auto p = fusion::FusionParams::init(2, 2, 1, rng);
  p.context_weight.mutable_value() = Matrix::Identity(2, 2);
  Matrix w2t(2, 2);
  w2t << 1, 0, 0, -1;  // logits = [s0, -s1]
  p.score_weight.mutable_value() = w2t;
  Matrix tok(2, 2);
  tok << 1, 0, 0, 3;
  const Matrix w = fusion::spatial_weights(ad::Tensor::constant(tok), p).value();
  const double s0 = 1.0 / (1.0 + std::exp(-0.5)), s1 = 1.0 / (1.0 + std::exp(-1.5));
  const double e0 = std::exp(s0), e1 = std::exp(-s1);
  EXPECT_NEAR(w(0, 0), e0 / (e0 + e1), 1e-15);
  EXPECT_NEAR(w(0, 1), e1 / (e0 + e1), 1e-15);
}

TEST(Fuse, ResidualOnlyMixIsChannelMean) {
  nn::Rng rng(8);
  auto p = fusion::FusionParams::init(8, 7, 4, rng);
  p.mix_weighted.mutable_value()(0, 0) = 0.0;
  p.mix_residual.mutable_value()(0, 0) = 1.0;
  const auto ch = random_channels(3, 8, rng);
  const auto hf = fusion::stack_channels(ch);
  const auto r = fusion::fuse(hf, fusion::spatial_weights(hf, p), p);
  Matrix mean = Matrix::Zero(3, 8);
  for (const auto& c : ch) mean += c.value() / 7.0;
  EXPECT_LT(max_abs(r.embedding.value(), mean), 1e-14);
}

TEST(Fuse, UniformWeightsIdentityProjection) {
  nn::Rng rng(9);
  auto p = fusion::FusionParams::init(8, 7, 4, rng);
  p.projection.mutable_value() = Matrix::Identity(8, 8);
  p.mix_weighted.mutable_value()(0, 0) = 1.0;
  p.mix_residual.mutable_value()(0, 0) = 0.0;
  const auto ch = random_channels(3, 8, rng);
  const auto hf = fusion::stack_channels(ch);
  const auto r = fusion::fuse(hf, ad::Tensor::constant(Matrix::Constant(3, 7, 1.0 / 7.0)), p);
  Matrix mean = Matrix::Zero(3, 8);
  for (const auto& c : ch) mean += c.value() / 7.0;
  EXPECT_LT(max_abs(r.embedding.value(), mean / 7.0), 1e-14);
}

TEST(Fuse, FullPipelineMatchesLoopOracle) {
  nn::Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = fusion::FusionParams::init(8, 7, 2, rng);
    p.mix_weighted.mutable_value()(0, 0) = 0.3 + 0.1 * trial;
    p.mix_residual.mutable_value()(0, 0) = 0.9 - 0.05 * trial;
    const auto ch = random_channels(3, 8, rng);
    const auto hf = fusion::cross_modal_attention(ch, p);
    const auto w = fusion::spatial_weights(hf, p);
    const auto r = fusion::fuse(hf, w, p);
    const auto ow = oracle_weights(p);
    for (int i = 0; i < 3; ++i) {
      const auto ref = oracle::region_fusion(region_tokens(ch, i), ow, p.heads);
      EXPECT_LT((w.value().row(i) - ref.weights).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((r.embedding.value().row(i) - ref.embedding).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Fuse, LinearInTokensForFixedWeights) {
  nn::Rng rng(11);
  const auto p = fusion::FusionParams::init(8, 7, 4, rng);
  const Matrix a = random_matrix(21, 8, rng), b = random_matrix(21, 8, rng);
  const auto w = ad::Tensor::constant(random_matrix(3, 7, rng).cwiseAbs());
  const double alpha = 1.7, beta = -0.4;
  const Matrix lhs = fusion::fuse(ad::Tensor::constant(alpha * a + beta * b), w, p).embedding.value();
  const Matrix rhs = alpha * fusion::fuse(ad::Tensor::constant(a), w, p).embedding.value() +
                     beta * fusion::fuse(ad::Tensor::constant(b), w, p).embedding.value();
  EXPECT_LT(max_abs(lhs, rhs), 1e-12);
}

TEST(Fuse, GradientsMatchFiniteDifferences) {
  nn::Rng rng(12);
  auto p = fusion::FusionParams::init(8, 7, 2, rng);
  const auto ch = random_channels(3, 8, rng);
  const Matrix probe = random_matrix(3, 8, rng);
  std::vector<std::pair<std::string, ad::Tensor>> named;
  p.visit("fusion", [&](const std::string& n, ad::Tensor& t) { named.emplace_back(n, t); });
  testing::expect_gradients(testing::sample_gradients(
      [&] {
        const auto hf = fusion::cross_modal_attention(ch, p);
        return ad::sum(ad::hadamard(fusion::fuse(hf, fusion::spatial_weights(hf, p), p).embedding,
                                    ad::Tensor::constant(probe)));
      },
      named, 60, 4));
}

}  // namespace
}  // namespace mtgrr
