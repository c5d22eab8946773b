#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mtgrr/autograd.hpp"
#include "mtgrr/dataset.hpp"

namespace mtgrr {

using Edge = std::pair<int, int>;

/// Undirected, unweighted graph over the N regions of one modality.
/// Edges are canonical: i < j, sorted, unique.
struct Subgraph {
  Modality modality = Modality::Region;
  int n_nodes = 0;
  std::vector<Edge> edges;
  /// Similarity threshold used to admit edges; nullopt for the boundary graph
  /// and for per-node top-k construction.
  std::optional<double> threshold_used;

  std::vector<std::vector<int>> neighbor_lists() const;
  std::vector<int> degrees() const;
  /// Throws InvalidArgument if edges are not canonical or out of range.
  void check_canonical() const;
};

/// 6N nodes in blocks of N ordered REGION, POI, TAXI, LANDUSE, ROAD, REMOTE.
struct HeteroGraph {
  int n_regions = 0;
  std::vector<Edge> intra_edges;  // subgraph edges offset into their block
  std::vector<Edge> cross_edges;  // (REGION_i, m_i), 5N of them
  std::vector<Modality> node_type;

  int n_nodes() const { return kNumModalities * n_regions; }
  int node_id(Modality m, int region) const { return index_of(m) * n_regions + region; }
  std::vector<int> degrees() const;
};

struct DualLevelGraph {
  int n_regions = 0;
  std::vector<int> image_owner;                    // first-level image -> region
  std::vector<std::pair<int, int>> intra_edges;    // (image, region)
  std::vector<Edge> inter_edges;                   // (region_i, region_j), i < j
  std::vector<std::vector<int>> region_neighbors;  // N_SV(i)

  int n_images() const { return static_cast<int>(image_owner.size()); }
  std::vector<int> image_counts() const;
};

enum class EdgeMode { GlobalThreshold, PerNodeTopK };

struct GraphConfig {
  int edge_top_k = 64;
  EdgeMode edge_mode = EdgeMode::GlobalThreshold;
  bool normalize_taxi = true;
  int pos_dims = 180;
  int walk_length = 20;
  int walks_per_node = 10;
  int window = 5;
  std::uint64_t seed = 0;
};

/// a.b / (|a||b|), defined as 0 when either vector is zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Global threshold: eps = k-th largest pairwise cosine (ties counted with
/// multiplicity); an edge exists iff similarity > eps.
Subgraph build_similarity_subgraph(const ModalityFeatureTable& table, int k);
/// Each node links to its k most similar nodes (k capped at N-1); union taken.
Subgraph build_topk_subgraph(const ModalityFeatureTable& table, int k);
Subgraph build_region_boundary_graph(const UrbanDataset& ds);
HeteroGraph assemble_hetero_graph(std::span<const Subgraph> subgraphs);
DualLevelGraph build_dual_level_sv_graph(const UrbanDataset& ds);

/// Everything derived from a dataset before training.
struct GraphSet {
  std::array<Subgraph, kNumModalities> subgraphs;  // indexed by index_of(Modality)
  HeteroGraph hetero;
  DualLevelGraph street_view;
  Matrix region_positions;  // N x pos_dims DeepWalk embeddings

  const Subgraph& subgraph(Modality m) const { return subgraphs[index_of(m)]; }
};

GraphSet build_graph_set(const UrbanDataset& ds, const GraphConfig& cfg);

/// graphs/<name>.json: {"n":int,"edges":[[i,j],...],"threshold":float|null}
void write_subgraph_json(const Subgraph& g, const std::filesystem::path& path);
Subgraph read_subgraph_json(const std::filesystem::path& path, Modality modality);
/// Writes the six subgraphs plus region_positions.csv into `dir`.
void write_graph_set(const GraphSet& graphs, const std::filesystem::path& dir);
/// Reads the subgraphs and positions back and rebuilds the derived graphs.
GraphSet read_graph_set(const UrbanDataset& ds, const std::filesystem::path& dir);

/// Symmetric GCN normalization D^-1/2 (A + I) D^-1/2 with self-inclusive degrees.
ad::SparseMatrix normalized_adjacency(const Subgraph& g);
/// Plain 0/1 adjacency without self loops.
ad::SparseMatrix adjacency_matrix(int n, std::span<const Edge> edges);

/// Directed message list (src -> dst) of an undirected graph with a self
/// loop on every node, grouped by destination. Used by the GAT layers.
struct MessageEdges {
  int n_nodes = 0;
  std::vector<int> src;
  std::vector<int> dst;
};
MessageEdges message_edges_with_self_loops(int n_nodes, std::span<const Edge> edges);

}  // namespace mtgrr
