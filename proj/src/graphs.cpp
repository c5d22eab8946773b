#include "mtgrr/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mtgrr/node2vec.hpp"
#include "text_io.hpp"

namespace mtgrr {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::vector<int>> Subgraph::neighbor_lists() const {
  std::vector<std::vector<int>> out(n_nodes);
  for (const auto& [i, j] : edges) {
    out[i].push_back(j);
    out[j].push_back(i);
  }
  return out;
}

std::vector<int> Subgraph::degrees() const {
  std::vector<int> deg(n_nodes, 0);
  for (const auto& [i, j] : edges) {
    ++deg[i];
    ++deg[j];
  }
  return deg;
}

void Subgraph::check_canonical() const {
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [i, j] = edges[e];
    if (i < 0 || j >= n_nodes || i >= j) {
      throw Error(ErrorCode::InvalidArgument, "non-canonical edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
    if (e > 0 && !(edges[e - 1] < edges[e])) throw Error(ErrorCode::InvalidArgument, "edges not sorted/unique");
  }
}

std::vector<int> HeteroGraph::degrees() const {
  std::vector<int> deg(n_nodes(), 0);
  for (const auto* list : {&intra_edges, &cross_edges}) {
    for (const auto& [i, j] : *list) {
      ++deg[i];
      ++deg[j];
    }
  }
  return deg;
}

std::vector<int> DualLevelGraph::image_counts() const {
  std::vector<int> counts(n_regions, 0);
  for (int owner : image_owner) ++counts[owner];
  return counts;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "cosine_similarity: length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

std::span<const double> row_span(const Matrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

struct ScoredPair {
  double sim;
  int i;
  int j;
};

std::vector<ScoredPair> all_pair_similarities(const Matrix& m) {
  const int n = static_cast<int>(m.rows());
  std::vector<ScoredPair> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) pairs.push_back({cosine_similarity(row_span(m, i), row_span(m, j)), i, j});
  }
  return pairs;
}

void canonicalize(std::vector<Edge>& edges) {
  for (auto& e : edges) {
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

}  // namespace

Subgraph build_similarity_subgraph(const ModalityFeatureTable& table, int k) {
  const int n = static_cast<int>(table.matrix.rows());
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "similarity subgraph needs at least two nodes");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "edge_top_k must be >= 1");
  const long long n_pairs = static_cast<long long>(n) * (n - 1) / 2;
  if (k > n_pairs) {
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds the " + std::to_string(n_pairs) + " node pairs");
  }
  const auto pairs = all_pair_similarities(table.matrix);
  std::vector<double> sims(pairs.size());
  std::transform(pairs.begin(), pairs.end(), sims.begin(), [](const ScoredPair& p) { return p.sim; });
  std::nth_element(sims.begin(), sims.begin() + (k - 1), sims.end(), std::greater<>());
  const double eps = sims[k - 1];

  Subgraph g;
  g.modality = table.modality;
  g.n_nodes = n;
  g.threshold_used = eps;
  for (const auto& p : pairs) {
    if (p.sim > eps) g.edges.emplace_back(p.i, p.j);
  }
  canonicalize(g.edges);
  g.check_canonical();
  return g;
}

Subgraph build_topk_subgraph(const ModalityFeatureTable& table, int k) {
  const int n = static_cast<int>(table.matrix.rows());
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "similarity subgraph needs at least two nodes");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "edge_top_k must be >= 1");
  const int take = std::min(k, n - 1);
  Subgraph g;
  g.modality = table.modality;
  g.n_nodes = n;
  std::vector<std::pair<double, int>> scored;
  for (int i = 0; i < n; ++i) {
    scored.clear();
    for (int j = 0; j < n; ++j) {
      if (j != i) scored.emplace_back(cosine_similarity(row_span(table.matrix, i), row_span(table.matrix, j)), j);
    }
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    for (int t = 0; t < take; ++t) g.edges.emplace_back(i, scored[t].second);
  }
  canonicalize(g.edges);
  g.check_canonical();
  return g;
}

Subgraph build_region_boundary_graph(const UrbanDataset& ds) {
  Subgraph g;
  g.modality = Modality::Region;
  g.n_nodes = ds.n_regions();
  g.edges = ds.adjacency.edges();
  g.check_canonical();
  return g;
}

HeteroGraph assemble_hetero_graph(std::span<const Subgraph> subgraphs) {
  if (subgraphs.size() != kNumModalities) {
    throw Error(ErrorCode::InvalidArgument, "expected six subgraphs, got " + std::to_string(subgraphs.size()));
  }
  const int n = subgraphs[0].n_nodes;
  for (const auto& g : subgraphs) {
    if (g.n_nodes != n) throw Error(ErrorCode::InconsistentN, "subgraphs disagree on the number of regions");
  }
  HeteroGraph h;
  h.n_regions = n;
  h.node_type.resize(static_cast<std::size_t>(kNumModalities) * n);
  for (Modality m : kAllModalities) {
    for (int i = 0; i < n; ++i) h.node_type[h.node_id(m, i)] = m;
  }
  for (std::size_t b = 0; b < subgraphs.size(); ++b) {
    const int offset = static_cast<int>(b) * n;
    for (const auto& [i, j] : subgraphs[b].edges) h.intra_edges.emplace_back(i + offset, j + offset);
  }
  for (int i = 0; i < n; ++i) {
    for (Modality m : kAggregatedModalities) h.cross_edges.emplace_back(h.node_id(Modality::Region, i), h.node_id(m, i));
  }
  return h;
}

DualLevelGraph build_dual_level_sv_graph(const UrbanDataset& ds) {
  DualLevelGraph g;
  g.n_regions = ds.n_regions();
  for (const auto& set : ds.sv_sets) {
    for (Eigen::Index r = 0; r < set.features.rows(); ++r) {
      g.intra_edges.emplace_back(static_cast<int>(g.image_owner.size()), set.region_id);
      g.image_owner.push_back(set.region_id);
    }
  }
  g.inter_edges = ds.adjacency.edges();
  g.region_neighbors.resize(g.n_regions);
  for (const auto& [i, j] : g.inter_edges) {
    g.region_neighbors[i].push_back(j);
    g.region_neighbors[j].push_back(i);
  }
  return g;
}

GraphSet build_graph_set(const UrbanDataset& ds, const GraphConfig& cfg) {
  GraphSet gs;
  const int n = ds.n_regions();
  const int n_pairs = n * (n - 1) / 2;
  gs.subgraphs[index_of(Modality::Region)] = build_region_boundary_graph(ds);
  for (Modality m : kAggregatedModalities) {
    ModalityFeatureTable table = ds.table(m);
    if (m == Modality::Taxi && cfg.normalize_taxi) {
      for (Eigen::Index r = 0; r < table.matrix.rows(); ++r) {
        const double s = table.matrix.row(r).sum();
        if (s > 0) table.matrix.row(r) /= s;
      }
    }
    gs.subgraphs[index_of(m)] = cfg.edge_mode == EdgeMode::PerNodeTopK
                                    ? build_topk_subgraph(table, cfg.edge_top_k)
                                    : build_similarity_subgraph(table, std::min(cfg.edge_top_k, n_pairs));
  }
  gs.hetero = assemble_hetero_graph(gs.subgraphs);
  gs.street_view = build_dual_level_sv_graph(ds);

  WalkEmbeddingConfig walk;
  walk.dims = cfg.pos_dims;
  walk.walk_length = cfg.walk_length;
  walk.walks_per_node = cfg.walks_per_node;
  walk.window = cfg.window;
  walk.seed = cfg.seed;
  gs.region_positions = region_positional_embeddings(gs.subgraph(Modality::Region), walk);
  return gs;
}

void write_subgraph_json(const Subgraph& g, const fs::path& path) {
  json j;
  j["n"] = g.n_nodes;
  j["edges"] = json::array();
  for (const auto& [a, b] : g.edges) j["edges"].push_back({a, b});
  j["threshold"] = g.threshold_used ? json(*g.threshold_used) : json(nullptr);
  io::write_file(path, j.dump() + "\n");
}

Subgraph read_subgraph_json(const fs::path& path, Modality modality) {
  Subgraph g;
  g.modality = modality;
  try {
    const json j = json::parse(io::read_file(path));
    g.n_nodes = j.at("n").get<int>();
    for (const auto& e : j.at("edges")) g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    if (j.contains("threshold") && !j["threshold"].is_null()) g.threshold_used = j["threshold"].get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
  try {
    g.check_canonical();
  } catch (const Error& e) {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
  return g;
}

void write_graph_set(const GraphSet& graphs, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string());
  for (Modality m : kAllModalities) write_subgraph_json(graphs.subgraph(m), dir / (std::string(name_of(m)) + ".json"));
  std::vector<std::string> header;
  for (Eigen::Index c = 0; c < graphs.region_positions.cols(); ++c) header.push_back("p" + std::to_string(c));
  io::write_table(dir / "region_positions.csv", header, graphs.region_positions);
}

GraphSet read_graph_set(const UrbanDataset& ds, const fs::path& dir) {
  GraphSet gs;
  for (Modality m : kAllModalities) {
    const fs::path p = dir / (std::string(name_of(m)) + ".json");
    if (!fs::exists(p)) throw Error(ErrorCode::MissingFile, p.string());
    gs.subgraphs[index_of(m)] = read_subgraph_json(p, m);
    if (gs.subgraphs[index_of(m)].n_nodes != ds.n_regions()) {
      throw Error(ErrorCode::InconsistentN, p.string() + " does not match the dataset's region count");
    }
  }
  const fs::path pos = dir / "region_positions.csv";
  if (!fs::exists(pos)) throw Error(ErrorCode::MissingFile, pos.string());
  gs.region_positions = io::read_table(pos, ds.n_regions()).second;
  gs.hetero = assemble_hetero_graph(gs.subgraphs);
  gs.street_view = build_dual_level_sv_graph(ds);
  return gs;
}

ad::SparseMatrix normalized_adjacency(const Subgraph& g) {
  const auto deg = g.degrees();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(g.edges.size() * 2 + g.n_nodes);
  for (int i = 0; i < g.n_nodes; ++i) trips.emplace_back(i, i, 1.0 / (deg[i] + 1.0));
  for (const auto& [i, j] : g.edges) {
    const double w = 1.0 / std::sqrt((deg[i] + 1.0) * (deg[j] + 1.0));
    trips.emplace_back(i, j, w);
    trips.emplace_back(j, i, w);
  }
  ad::SparseMatrix s(g.n_nodes, g.n_nodes);
  s.setFromTriplets(trips.begin(), trips.end());
  return s;
}

ad::SparseMatrix adjacency_matrix(int n, std::span<const Edge> edges) {
  std::vector<Eigen::Triplet<double>> trips;
  for (const auto& [i, j] : edges) {
    trips.emplace_back(i, j, 1.0);
    trips.emplace_back(j, i, 1.0);
  }
  ad::SparseMatrix s(n, n);
  s.setFromTriplets(trips.begin(), trips.end());
  return s;
}

MessageEdges message_edges_with_self_loops(int n_nodes, std::span<const Edge> edges) {
  std::vector<std::vector<int>> incoming(n_nodes);
  for (const auto& [i, j] : edges) {
    incoming[i].push_back(j);
    incoming[j].push_back(i);
  }
  MessageEdges me;
  me.n_nodes = n_nodes;
  for (int i = 0; i < n_nodes; ++i) {
    me.src.push_back(i);
    me.dst.push_back(i);
    std::sort(incoming[i].begin(), incoming[i].end());
    for (int j : incoming[i]) {
      me.src.push_back(j);
      me.dst.push_back(i);
    }
  }
  return me;
}

}  // namespace mtgrr
