#include <gtest/gtest.h>

#include "mtgrr/moe_encoder.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace mtgrr {
namespace {

using testing::random_matrix;
using testing::random_param;

double max_abs(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::vector<Edge> random_edges(int n, std::mt19937_64& rng, double p = 0.4) {
  std::bernoulli_distribution keep(p);
  std::vector<Edge> e;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (keep(rng)) e.emplace_back(i, j);
    }
  }
  return e;
}

Subgraph subgraph_of(int n, std::vector<Edge> edges) {
  Subgraph g;
  g.n_nodes = n;
  g.edges = std::move(edges);
  return g;
}

std::vector<oracle::GatHead> heads_of(const moe::GatLayerParams& p) {
  std::vector<oracle::GatHead> out;
  for (int h = 0; h < p.heads(); ++h) {
    out.push_back({p.weight[h].value(), p.att_dst[h].value().col(0), p.att_src[h].value().col(0)});
  }
  return out;
}

TEST(GatLayer, SingleNodeWithIdentityWeightIsElu) {
  nn::Rng rng(1);
  auto p = moe::GatLayerParams::init(3, 1, rng);
  p.weight[0].mutable_value() = Matrix::Identity(3, 3);
  p.att_dst[0].mutable_value().setZero();
  p.att_src[0].mutable_value().setZero();
  Matrix h(1, 3);
  h << -1.0, 0.0, 2.0;
  const Matrix out = moe::gat_layer_forward(message_edges_with_self_loops(1, {}), ad::Tensor::constant(h), p).value();
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(out(0, c), oracle::elu(h(0, c)));
}

TEST(GatLayer, DisconnectedNodesAreIndependent) {
  nn::Rng rng(2);
  const auto p = moe::GatLayerParams::init(4, 2, rng);
  const auto edges = message_edges_with_self_loops(2, {});
  Matrix h = random_matrix(2, 4, rng);
  const Matrix a = moe::gat_layer_forward(edges, ad::Tensor::constant(h), p).value();
  h.row(1) *= 5.0;
  const Matrix b = moe::gat_layer_forward(edges, ad::Tensor::constant(h), p).value();
  EXPECT_TRUE(a.row(0) == b.row(0));
  EXPECT_FALSE(a.row(1) == b.row(1));
}

TEST(GatLayer, PathOfThreeMatchesDenseOracle) {
  nn::Rng rng(3);
  const auto p = moe::GatLayerParams::init(5, 4, rng);
  const Matrix h = random_matrix(3, 5, rng);
  const std::vector<Edge> e = {{0, 1}, {1, 2}};
  const Matrix got = moe::gat_layer_forward(message_edges_with_self_loops(3, e), ad::Tensor::constant(h), p).value();
  EXPECT_LT(max_abs(got, oracle::gat_layer(oracle::dense_adjacency(3, e), h, heads_of(p))), 1e-12);
}

TEST(GatLayer, RandomGraphsMatchDenseOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 6;
    const auto e = random_edges(n, rng);
    const auto p = moe::GatLayerParams::init(4, 1 + trial % 3, rng);
    const Matrix h = random_matrix(n, 4, rng, 2.0);
    const Matrix got = moe::gat_layer_forward(message_edges_with_self_loops(n, e), ad::Tensor::constant(h), p).value();
    EXPECT_LT(max_abs(got, oracle::gat_layer(oracle::dense_adjacency(n, e), h, heads_of(p))), 1e-10);
  }
}

HeteroGraph small_hetero(int n, std::mt19937_64& rng) {
  std::array<Subgraph, kNumModalities> subs;
  for (int m = 0; m < kNumModalities; ++m) {
    subs[m] = subgraph_of(n, random_edges(n, rng));
    subs[m].modality = kAllModalities[m];
  }
  return assemble_hetero_graph(subs);
}

TEST(GlobalEncoder, ShapesForFourRegions) {
  std::mt19937_64 rng(5);
  const auto g = small_hetero(4, rng);
  const auto p = moe::GlobalEncoderParams::init(4, 6, 8, 2, 2, false, rng);
  const auto out = moe::global_encode(g, p);
  for (const auto& t : out) {
    EXPECT_EQ(t.rows(), 4);
    EXPECT_EQ(t.cols(), 8);
  }
}

TEST(GlobalEncoder, ZeroLayersIsFnnOfEmbeddings) {
  std::mt19937_64 rng(6);
  const auto g = small_hetero(3, rng);
  const auto p = moe::GlobalEncoderParams::init(3, 6, 8, 0, 2, false, rng);
  const Matrix refined = p.fnn[0](p.node_embeddings).value();
  const auto out = moe::global_encode(g, p);
  for (int m = 0; m < kNumModalities; ++m) EXPECT_TRUE(out[m].value() == refined.middleRows(3 * m, 3));
}

TEST(GlobalEncoder, PermutationEquivariant) {
  std::mt19937_64 rng(7);
  const int n = 5;
  std::array<Subgraph, kNumModalities> subs;
  for (int m = 0; m < kNumModalities; ++m) subs[m] = subgraph_of(n, random_edges(n, rng, 0.5));
  std::vector<int> perm = {3, 0, 4, 1, 2};  // new id of old region i
  std::array<Subgraph, kNumModalities> permuted;
  for (int m = 0; m < kNumModalities; ++m) {
    permuted[m].n_nodes = n;
    for (auto [i, j] : subs[m].edges) permuted[m].edges.emplace_back(std::min(perm[i], perm[j]), std::max(perm[i], perm[j]));
    std::sort(permuted[m].edges.begin(), permuted[m].edges.end());
  }
  auto p = moe::GlobalEncoderParams::init(n, 6, 8, 2, 2, false, rng);
  auto q = p;
  Matrix emb = p.node_embeddings.value();
  for (int m = 0; m < kNumModalities; ++m) {
    for (int i = 0; i < n; ++i) emb.row(m * n + perm[i]) = p.node_embeddings.value().row(m * n + i);
  }
  q.node_embeddings = ad::Tensor::constant(emb);
  const auto a = moe::global_encode(assemble_hetero_graph(subs), p);
  const auto b = moe::global_encode(assemble_hetero_graph(permuted), q);
  for (int m = 0; m < kNumModalities; ++m) {
    for (int i = 0; i < n; ++i) {
      EXPECT_LT((a[m].value().row(i) - b[m].value().row(perm[i])).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ExpertLayer, IsolatedNodeIdentity) {
  moe::ExpertLayerParams layer{ad::Tensor::constant(Matrix::Identity(3, 3)), ad::Tensor::constant(Matrix::Identity(3, 3)),
                               ad::Tensor::constant(Matrix::Zero(1, 3))};
  Matrix x(1, 3);
  x << -1.5, 0.25, 4.0;
  const auto step = moe::expert_layer_forward(subgraph_of(1, {}), ad::Tensor::constant(x),
                                              ad::Tensor::constant(Matrix::Ones(1, 3)), layer, ad::Activation::Identity);
  EXPECT_TRUE(step.nodes.value() == x);
}

TEST(ExpertLayer, SingleEdgeHandArithmetic) {
  moe::ExpertLayerParams layer{ad::Tensor::constant(Matrix::Identity(4, 4)), ad::Tensor::constant(2.0 * Matrix::Identity(4, 4)),
                               ad::Tensor::constant(Matrix::Zero(1, 4))};
  const auto step = moe::expert_layer_forward(subgraph_of(2, {{0, 1}}), ad::Tensor::constant(Matrix::Ones(2, 4)),
                                              ad::Tensor::constant(Matrix::Ones(1, 4)), layer, ad::Activation::Identity);
  EXPECT_LT((step.nodes.value().array() - 1.0).abs().maxCoeff(), 1e-15);
  EXPECT_TRUE(step.edge_state.value() == Matrix::Constant(1, 4, 2.0));
}

TEST(ExpertLayer, RandomGraphsMatchDenseOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 6;
    const auto e = random_edges(n, rng);
    const Matrix x = random_matrix(n, 4, rng);
    const Matrix ev = random_matrix(1, 4, rng);
    moe::ExpertLayerParams layer{random_param(4, 4, rng), random_param(4, 4, rng), random_param(1, 4, rng)};
    const auto step = moe::expert_layer_forward(subgraph_of(n, e), ad::Tensor::constant(x), ad::Tensor::constant(ev), layer);
    const auto [nodes, edge] = oracle::expert_layer(oracle::dense_adjacency(n, e), x, ev, layer.node_weight.value(),
                                                    layer.edge_weight.value(), layer.edge_bias.value());
    EXPECT_LT(max_abs(step.nodes.value(), nodes), 1e-12);
    EXPECT_LT(max_abs(step.edge_state.value(), edge), 1e-12);
  }
}

std::array<ad::SparseMatrix, kNumModalities> norm_adjs(const std::array<Subgraph, kNumModalities>& subs) {
  std::array<ad::SparseMatrix, kNumModalities> out;
  for (int m = 0; m < kNumModalities; ++m) out[m] = normalized_adjacency(subs[m]);
  return out;
}

TEST(ExpertEncode, ThreeLayersOnPathMatchUnrolledOracle) {
  std::mt19937_64 rng(9);
  const std::vector<Edge> path = {{0, 1}, {1, 2}};
  std::array<Subgraph, kNumModalities> subs;
  moe::ChannelArray inputs;
  std::array<moe::ExpertParams, kNumModalities> experts;
  for (int m = 0; m < kNumModalities; ++m) {
    subs[m] = subgraph_of(3, path);
    inputs[m] = ad::Tensor::constant(random_matrix(3, 8, rng));
    experts[m] = moe::ExpertParams::init(8, 3, true, rng);
  }
  const auto adjs = norm_adjs(subs);
  const auto out = moe::expert_encode(adjs, inputs, experts);
  const Matrix dense = oracle::dense_adjacency(3, path);
  for (int m = 0; m < kNumModalities; ++m) {
    Matrix x = inputs[m].value();
    RowVector e = experts[m].edge_init.value();
    for (const auto& l : experts[m].layers) {
      auto [nx, ne] = oracle::expert_layer(dense, x, e, l.node_weight.value(), l.edge_weight.value(), l.edge_bias.value());
      x = nx;
      e = ne;
    }
    EXPECT_LT(max_abs(out[m].value(), x), 1e-10) << m;
  }
}

TEST(ExpertEncode, ZeroLayersPassThrough) {
  std::mt19937_64 rng(10);
  std::array<Subgraph, kNumModalities> subs;
  moe::ChannelArray inputs;
  std::array<moe::ExpertParams, kNumModalities> experts;
  for (int m = 0; m < kNumModalities; ++m) {
    subs[m] = subgraph_of(3, {{0, 2}});
    inputs[m] = ad::Tensor::constant(random_matrix(3, 4, rng));
    experts[m] = moe::ExpertParams::init(4, 0, false, rng);
  }
  const auto out = moe::expert_encode(norm_adjs(subs), inputs, experts);
  for (int m = 0; m < kNumModalities; ++m) EXPECT_TRUE(out[m].value() == inputs[m].value());
}

TEST(ExpertEncode, PoiParametersAreIsolated) {
  std::mt19937_64 rng(11);
  std::array<Subgraph, kNumModalities> subs;
  moe::ChannelArray inputs;
  std::array<moe::ExpertParams, kNumModalities> experts;
  for (int m = 0; m < kNumModalities; ++m) {
    subs[m] = subgraph_of(4, random_edges(4, rng, 0.6));
    inputs[m] = ad::Tensor::constant(random_matrix(4, 6, rng));
    experts[m] = moe::ExpertParams::init(6, 2, false, rng);
  }
  const auto adjs = norm_adjs(subs);
  const auto before = moe::expert_encode(adjs, inputs, experts);
  experts[index_of(Modality::Poi)].layers[0].node_weight.mutable_value() *= 3.0;
  experts[index_of(Modality::Poi)].edge_init.mutable_value().array() += 1.0;
  const auto after = moe::expert_encode(adjs, inputs, experts);
  for (int m = 0; m < kNumModalities; ++m) {
    if (m == index_of(Modality::Poi)) {
      EXPECT_FALSE(before[m].value() == after[m].value());
    } else {
      EXPECT_TRUE(before[m].value() == after[m].value()) << m;
    }
  }

  // gradient view: the taxi channel has no dependence on POI parameters
  ad::sum(after[index_of(Modality::Taxi)]).backward();
  for (int m = 0; m < kNumModalities; ++m) {
    if (m == index_of(Modality::Taxi)) continue;
    for (auto& l : experts[m].layers) {
      const Matrix g = l.node_weight.grad();
      EXPECT_TRUE(g.size() == 0 || g.isZero(0.0)) << m;
    }
  }
}

moe::GatingParams zero_gate(Eigen::Index d_hid, std::mt19937_64& rng) {
  std::array<Eigen::Index, kNumModalities> widths = {3, 4, 5, 2, 3, 6};
  auto p = moe::GatingParams::init(widths, d_hid, rng);
  p.gate.weight.mutable_value().setZero();
  p.gate.bias.mutable_value().setZero();
  return p;
}

std::vector<ad::Tensor> gate_features(int n, std::mt19937_64& rng) {
  std::array<Eigen::Index, kNumModalities> widths = {3, 4, 5, 2, 3, 6};
  std::vector<ad::Tensor> f;
  for (auto w : widths) f.push_back(ad::Tensor::constant(random_matrix(n, w, rng)));
  return f;
}

TEST(Gating, ZeroWeightsGiveUniformRows) {
  std::mt19937_64 rng(12);
  const auto p = zero_gate(4, rng);
  const Matrix g = moe::gating_weights(gate_features(5, rng), p).value();
  EXPECT_LT((g.array() - 1.0 / 6.0).abs().maxCoeff(), 1e-15);
}

TEST(Gating, BiasOfTenOnFirstLogit) {
  std::mt19937_64 rng(13);
  auto p = zero_gate(4, rng);
  p.gate.bias.mutable_value()(0, 0) = 10.0;
  const Matrix g = moe::gating_weights(gate_features(3, rng), p).value();
  const double z = std::exp(10.0) + 5.0;
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(g(i, 0), std::exp(10.0) / z, 1e-15);
    EXPECT_NEAR(g(i, 0), 0.999773, 1e-6);
    for (int m = 1; m < 6; ++m) EXPECT_NEAR(g(i, m), 1.0 / z, 1e-15);
  }
}

TEST(Gating, RowsAreProbabilityVectors) {
  std::mt19937_64 rng(14);
  std::array<Eigen::Index, kNumModalities> widths = {3, 4, 5, 2, 3, 6};
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = moe::GatingParams::init(widths, 8, rng);
    const Matrix g = moe::gating_weights(gate_features(7, rng), p).value();
    for (int i = 0; i < g.rows(); ++i) {
      EXPECT_NEAR(g.row(i).sum(), 1.0, 1e-12);
      EXPECT_GT(g.row(i).minCoeff(), 0.0);
      EXPECT_LT(g.row(i).maxCoeff(), 1.0);
    }
  }
}

TEST(Gating, MatchesLinearThenSoftmaxOracle) {
  std::mt19937_64 rng(15);
  std::array<Eigen::Index, kNumModalities> widths = {3, 4, 5, 2, 3, 6};
  const auto p = moe::GatingParams::init(widths, 4, rng);
  const auto f = gate_features(4, rng);
  const Matrix g = moe::gating_weights(f, p).value();
  for (int i = 0; i < 4; ++i) {
    RowVector flat(6 * 4);
    for (int m = 0; m < 6; ++m) {
      flat.segment(4 * m, 4) = f[m].value().row(i) * p.projections[m].weight.value() + p.projections[m].bias.value();
    }
    RowVector logits = flat * p.gate.weight.value() + p.gate.bias.value();
    logits = (logits.array() - logits.maxCoeff()).exp();
    logits /= logits.sum();
    EXPECT_LT((g.row(i) - logits).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ApplyGating, OneHotAndUniform) {
  std::mt19937_64 rng(16);
  moe::ChannelArray tildes;
  for (auto& t : tildes) t = ad::Tensor::constant(random_matrix(2, 3, rng));
  Matrix onehot = Matrix::Zero(2, 6);
  onehot.col(0).setOnes();
  const auto hats = moe::apply_gating(ad::Tensor::constant(onehot), tildes);
  EXPECT_TRUE(hats[0].value() == tildes[0].value());
  for (int m = 1; m < 6; ++m) EXPECT_TRUE(hats[m].value().isZero(0.0));

  const auto uniform = moe::apply_gating(ad::Tensor::constant(Matrix::Constant(2, 6, 1.0 / 6.0)), tildes);
  for (int m = 0; m < 6; ++m) EXPECT_LT(max_abs(uniform[m].value(), tildes[m].value() / 6.0), 1e-15);
}

TEST(ApplyGating, NormHomogeneity) {
  std::mt19937_64 rng(17);
  moe::ChannelArray tildes;
  for (auto& t : tildes) t = ad::Tensor::constant(random_matrix(5, 4, rng));
  Matrix g = random_matrix(5, 6, rng).cwiseAbs();
  const auto hats = moe::apply_gating(ad::Tensor::constant(g), tildes);
  for (int m = 0; m < 6; ++m) {
    for (int i = 0; i < 5; ++i) {
      EXPECT_NEAR(hats[m].value().row(i).norm(), g(i, m) * tildes[m].value().row(i).norm(), 1e-12);
    }
  }
}

TEST(MoeGradients, FullEncoderMatchesFiniteDifferences) {
  std::mt19937_64 rng(18);
  const int n = 4, d = 8;
  std::array<Subgraph, kNumModalities> subs;
  for (int m = 0; m < kNumModalities; ++m) subs[m] = subgraph_of(n, random_edges(n, rng, 0.5));
  const auto hetero = assemble_hetero_graph(subs);
  const auto adjs = norm_adjs(subs);
  auto global = moe::GlobalEncoderParams::init(n, 6, d, 2, 2, false, rng);
  std::array<moe::ExpertParams, kNumModalities> experts;
  for (auto& e : experts) e = moe::ExpertParams::init(d, 2, true, rng);
  std::array<Eigen::Index, kNumModalities> widths = {3, 4, 5, 2, 3, 6};
  auto gating = moe::GatingParams::init(widths, d, rng);
  const auto feats = gate_features(n, rng);
  const Matrix probe = random_matrix(n, d, rng);

  auto loss = [&] {
    const auto g = moe::gating_weights(feats, gating);
    const auto hats = moe::apply_gating(g, moe::expert_encode(adjs, moe::global_encode(hetero, global), experts));
    ad::Tensor total = ad::Tensor::scalar(0.0);
    for (const auto& h : hats) total = ad::add(total, ad::sum(ad::hadamard(h, ad::Tensor::constant(probe))));
    return total;
  };
  std::vector<std::pair<std::string, ad::Tensor>> named;
  auto collect = [&](const std::string& name, ad::Tensor& t) { named.emplace_back(name, t); };
  global.visit("global", collect);
  for (int m = 0; m < kNumModalities; ++m) experts[m].visit("expert" + std::to_string(m), collect);
  gating.visit("gating", collect);
  testing::expect_gradients(testing::sample_gradients(loss, named, 60, 3));
}

}  // namespace
}  // namespace mtgrr
