#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtgrr/common.hpp"

namespace mtgrr {

struct Region {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
  /// Optional polygon; the loader ignores it, the generator fills a unit cell.
  std::vector<std::pair<double, double>> boundary;
};

struct ModalityFeatureTable {
  Modality modality = Modality::Poi;
  std::vector<std::string> columns;
  Matrix matrix;  // N x D

  Eigen::Index width() const { return matrix.cols(); }
};

struct StreetViewSet {
  int region_id = 0;
  Matrix features;  // one row per image
};

/// Symmetric boolean adjacency with a false diagonal.
class Adjacency {
 public:
  Adjacency() = default;
  explicit Adjacency(int n) : n_(n), cells_(static_cast<std::size_t>(n) * n, 0) {}

  int size() const { return n_; }
  bool operator()(int i, int j) const { return cells_[static_cast<std::size_t>(i) * n_ + j] != 0; }
  void set(int i, int j, bool value) { cells_[static_cast<std::size_t>(i) * n_ + j] = value ? 1 : 0; }
  /// Sets both (i, j) and (j, i).
  void connect(int i, int j) {
    set(i, j, true);
    set(j, i, true);
  }
  std::vector<int> neighbors(int i) const;
  /// Undirected edges (i < j), sorted.
  std::vector<std::pair<int, int>> edges() const;

  bool operator==(const Adjacency&) const = default;

 private:
  int n_ = 0;
  std::vector<unsigned char> cells_;
};

struct UrbanDataset {
  std::vector<Region> regions;
  Adjacency adjacency;
  /// Indexed by index_of(modality) - 1, i.e. POI, TAXI, LANDUSE, ROAD, REMOTE.
  std::array<ModalityFeatureTable, kNumAggregated> tables;
  std::vector<StreetViewSet> sv_sets;  // one per region, ordered by region id
  Matrix targets;                      // N x K
  std::vector<std::string> task_names;
  int d_raw_sv = 0;

  int n_regions() const { return static_cast<int>(regions.size()); }
  int k_tasks() const { return static_cast<int>(targets.cols()); }
  const ModalityFeatureTable& table(Modality m) const;
  ModalityFeatureTable& table(Modality m);
  std::size_t total_images() const;
};

enum class FindingKind {
  NonDenseIds,
  NonFiniteCentroid,
  AsymmetricAdjacency,
  SelfLoop,
  AdjacencySizeMismatch,
  MissingTable,
  RowCountMismatch,
  NegativeCount,
  NonIntegerCount,
  NonFiniteValue,
  StreetViewWidthMismatch,
  DanglingStreetView,
  TargetShapeMismatch,
};

std::string_view to_string(FindingKind kind);

struct Finding {
  FindingKind kind;
  std::string location;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const { return findings.empty(); }
  std::size_t count(FindingKind kind) const;
};

ValidationReport validate_dataset(const UrbanDataset& ds);

/// Reads a dataset directory (regions.jsonl, adjacency.csv, the five modality
/// CSVs, streetview.jsonl, targets.csv, manifest.json) and validates it.
UrbanDataset load_dataset(const std::filesystem::path& root);
/// Writes the same layout; doubles are printed in shortest round-trip form.
void write_dataset(const UrbanDataset& ds, const std::filesystem::path& root);

/// Fingerprint over every data file in a dataset directory.
std::string dataset_hash(const std::filesystem::path& root);

struct SynthSpec {
  int n_regions = 36;
  int grid_rows = 6;
  int grid_cols = 6;
  int n_poi = 24;
  int n_landuse = 10;
  int n_road = 8;
  int d_remote = 64;
  int d_raw_sv = 512;
  int latent_dim = 4;
  int images_min = 3;
  int images_max = 10;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticCity {
  UrbanDataset dataset;
  Matrix latents;  // N x latent_dim
};

/// Deterministic grid city: latent region types form smooth spatial fields,
/// every modality is a noisy function of the latents, and targets are a fixed
/// linear map of the latents plus Gaussian noise.
SyntheticCity generate_synthetic_city_with_latents(const SynthSpec& spec);
UrbanDataset generate_synthetic_city(const SynthSpec& spec);

SynthSpec synth_spec_from_json(const std::string& json_text);
std::string synth_spec_to_json(const SynthSpec& spec);

}  // namespace mtgrr
