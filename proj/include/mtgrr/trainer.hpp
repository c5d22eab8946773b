#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtgrr/dataset.hpp"
#include "mtgrr/fusion.hpp"
#include "mtgrr/graphs.hpp"
#include "mtgrr/moe_encoder.hpp"
#include "mtgrr/objectives.hpp"
#include "mtgrr/sv_encoder.hpp"

namespace mtgrr {

struct TrainConfig {
  int d_in = 180;
  int d_hid = 168;
  int d_feat = 168;
  int global_layers = 2;  // C
  int expert_layers = 3;  // L
  int sv_layers = 1;      // Z
  int edge_top_k = 64;
  double margin = 2.0;
  double lr = 1e-4;
  int epochs = 300;
  int heads = 4;
  std::uint64_t seed = 0;

  // ablations
  bool no_moe = false;
  bool no_dlgnn = false;
  bool no_sv = false;
  bool no_samf = false;
  bool no_l_sv = false;
  bool no_l_f = false;

  // variants for choices the model description leaves open
  EdgeMode edge_mode = EdgeMode::GlobalThreshold;
  bool normalize_taxi = true;
  bool fnn_per_type = false;
  bool freeze_node_init = false;
  bool random_edge_init = false;
  bool mean_aggregate = false;
  bool residual_image_update = false;
  objectives::Reduction loss_reduction = objectives::Reduction::Mean;
  int triplets_per_anchor = 1;
  bool resample_each_epoch = true;

  // positional embeddings for the region channel
  int pos_dims = 0;  // 0 means d_in
  int walk_length = 20;
  int walks_per_node = 10;
  int window = 5;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  /// Throws InvalidArgument on nonsensical values.
  void validate() const;
  /// Applies implied settings (dropping street view drops its loss). Returns
  /// true if anything changed.
  bool resolve();
  GraphConfig graph_config() const;
  int channel_count() const { return no_sv ? kNumModalities : fusion::kFullChannelCount; }
  /// Fields that determine parameter shapes.
  std::string shape_signature() const;
};

/// Applies every key present in `json_text` over `base`; unknown keys throw.
TrainConfig train_config_from_json(const std::string& json_text, TrainConfig base = {});
std::string train_config_to_json(const TrainConfig& cfg);
std::string config_hash(const TrainConfig& cfg);
/// Named ablation variant ("full", "no_moe", ...) applied to a config.
TrainConfig with_variant(TrainConfig cfg, const std::string& variant);
const std::vector<std::string>& ablation_variants();

/// Constant tensors derived from a dataset and its graphs.
struct ModelInputs {
  int n_regions = 0;
  GraphSet graphs;
  Adjacency adjacency;
  MessageEdges hetero_edges;
  std::array<ad::SparseMatrix, kNumModalities> expert_adjacency;
  /// Gating inputs in modality order; count tables are log1p-scaled.
  std::array<ad::Tensor, kNumModalities> gating_features;
  ad::Tensor sv_images;  // M x d_raw
  int d_raw_sv = 0;

  std::array<Eigen::Index, kNumModalities> gating_widths() const;
};

ModelInputs prepare_inputs(const UrbanDataset& ds, GraphSet graphs);
ModelInputs prepare_inputs(const UrbanDataset& ds, const TrainConfig& cfg);

struct MoeParams {
  std::array<moe::ExpertParams, kNumModalities> experts;
  moe::GatingParams gating;
};

struct AdamState {
  long step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

struct ModelState {
  TrainConfig config;
  int n_regions = 0;
  int d_raw_sv = 0;
  std::array<Eigen::Index, kNumModalities> gating_widths{};

  moe::GlobalEncoderParams global;
  std::optional<MoeParams> moe;             // absent under no_moe
  std::optional<sv::SvEncoderParams> sv;    // absent under no_sv
  fusion::FusionParams fusion;
  objectives::MatcherParams matcher;
  AdamState adam;

  /// Fresh, seeded parameters shaped for `inputs`.
  static ModelState init(const ModelInputs& inputs, const TrainConfig& cfg);
  /// Parameters shaped from explicit dimensions, values from `rng`.
  static ModelState shaped(int n_regions, int d_raw_sv, const std::array<Eigen::Index, kNumModalities>& widths,
                           const TrainConfig& cfg, nn::Rng& rng);

  void visit(const nn::ParamVisitor& f);
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters();
  /// Deep copy; the clone shares no parameter storage with this state.
  ModelState clone() const;
  bool all_finite();
};

struct ForwardResult {
  std::vector<ad::Tensor> channels;  // 6 gated aggregated channels, then street view if enabled
  ad::Tensor street_view;            // N x d_hid, undefined under no_sv
  ad::Tensor gates;                  // N x 6, undefined under no_moe
  ad::Tensor fused_tokens;           // H^f, token-major
  ad::Tensor spatial;                // W_spa, undefined under no_samf
  ad::Tensor embedding;              // N x d_hid
};

ForwardResult forward(const ModelInputs& inputs, const ModelState& state);

struct EpochSamples {
  objectives::TripletBatch aggregated;
  objectives::TripletBatch street_view;
  std::vector<int> negative_map;
};

EpochSamples draw_epoch_samples(const Adjacency& adjacency, int triplets_per_anchor, nn::Rng& rng);

struct LossTerms {
  ad::Tensor agg;
  ad::Tensor sv;
  ad::Tensor f;
  ad::Tensor total;

  objectives::LossReport report() const;
};

LossTerms compute_losses(const ForwardResult& fr, const ModelState& state, const EpochSamples& samples);

struct EpochRecord {
  int epoch = 0;
  objectives::LossReport losses;
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  ModelState state;
  TrainHistory history;
};

/// Called once per epoch with the forward pass the step was taken from.
using EpochObserver = std::function<void(int epoch, const ForwardResult&, const objectives::LossReport&)>;

/// Full-batch Adam on the joint objective, one step per epoch.
TrainResult train(const ModelInputs& inputs, TrainConfig cfg, const EpochObserver& observer = {});
/// Continues training an existing state for cfg.epochs more epochs.
TrainHistory train_state(const ModelInputs& inputs, ModelState& state, const EpochObserver& observer = {});

struct EmbeddingTable {
  Matrix embedding;                          // N x d_hid
  std::vector<std::string> channel_names;
  std::vector<Matrix> channels;              // each N x d_hid
};

EmbeddingTable embed(const ModelState& state, const ModelInputs& inputs);

/// embeddings.csv: header region,e0..e{d-1}; values in round-trip form.
void write_embeddings_csv(const Matrix& embedding, const std::filesystem::path& path);
Matrix read_embeddings_csv(const std::filesystem::path& path);
/// <stem>.bin holds little-endian float32 blocks; <stem>.json indexes them.
void write_channel_bundle(const EmbeddingTable& table, const std::filesystem::path& bin_path);

void write_train_log(const TrainHistory& history, const std::filesystem::path& path);

/// Writes <path> (parameter blocks) and <path with .json> (manifest).
void save_checkpoint(ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);
/// As above, and throws VersionMismatch if the shapes differ from `expected`.
ModelState load_checkpoint(const std::filesystem::path& path, const TrainConfig& expected);

}  // namespace mtgrr
