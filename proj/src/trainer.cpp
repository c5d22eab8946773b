#include "mtgrr/trainer.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "text_io.hpp"

namespace mtgrr {

namespace fs = std::filesystem;
using nlohmann::json;

// -- configuration ---------------------------------------------------------

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, "config: " + msg); };
  if (d_in <= 0 || d_hid <= 0 || d_feat <= 0) fail("dimensions must be positive");
  if (global_layers < 0 || expert_layers < 0 || sv_layers < 0) fail("layer counts must be >= 0");
  if (epochs < 1) fail("epochs must be >= 1");
  if (heads < 1) fail("heads must be >= 1");
  if (d_hid % heads != 0) fail("d_hid must be divisible by heads");
  if (edge_top_k < 1) fail("edge_top_k must be >= 1");
  if (!(margin >= 0)) fail("gamma must be >= 0");
  if (!(lr >= 0) || !std::isfinite(lr)) fail("lr must be a finite nonnegative number");
  if (triplets_per_anchor < 1) fail("triplets_per_anchor must be >= 1");
  if (pos_dims < 0) fail("pos_dims must be >= 0");
  if (walk_length < 1 || walks_per_node < 1 || window < 1) fail("walk parameters must be positive");
}

bool TrainConfig::resolve() {
  if (no_sv && !no_l_sv) {
    no_l_sv = true;
    return true;
  }
  return false;
}

GraphConfig TrainConfig::graph_config() const {
  GraphConfig g;
  g.edge_top_k = edge_top_k;
  g.edge_mode = edge_mode;
  g.normalize_taxi = normalize_taxi;
  g.pos_dims = pos_dims > 0 ? pos_dims : d_in;
  g.walk_length = walk_length;
  g.walks_per_node = walks_per_node;
  g.window = window;
  g.seed = seed;
  return g;
}

std::string TrainConfig::shape_signature() const {
  std::ostringstream ss;
  ss << "d_in=" << d_in << " d_hid=" << d_hid << " d_feat=" << d_feat << " C=" << global_layers
     << " L=" << expert_layers << " Z=" << sv_layers << " heads=" << heads << " no_moe=" << no_moe
     << " no_sv=" << no_sv << " no_dlgnn=" << no_dlgnn << " fnn_per_type=" << fnn_per_type;
  return ss.str();
}

namespace {

json config_json(const TrainConfig& c) {
  return json{{"d_in", c.d_in},
              {"d_hid", c.d_hid},
              {"d_feat", c.d_feat},
              {"C", c.global_layers},
              {"L", c.expert_layers},
              {"Z", c.sv_layers},
              {"edge_top_k", c.edge_top_k},
              {"gamma", c.margin},
              {"lr", c.lr},
              {"epochs", c.epochs},
              {"heads", c.heads},
              {"seed", c.seed},
              {"no_moe", c.no_moe},
              {"no_dlgnn", c.no_dlgnn},
              {"no_sv", c.no_sv},
              {"no_samf", c.no_samf},
              {"no_l_sv", c.no_l_sv},
              {"no_l_f", c.no_l_f},
              {"edge_mode", c.edge_mode == EdgeMode::PerNodeTopK ? "per_node_topk" : "global"},
              {"normalize_taxi", c.normalize_taxi},
              {"fnn_per_type", c.fnn_per_type},
              {"freeze_node_init", c.freeze_node_init},
              {"random_edge_init", c.random_edge_init},
              {"mean_aggregate", c.mean_aggregate},
              {"residual_image_update", c.residual_image_update},
              {"loss_reduction", c.loss_reduction == objectives::Reduction::Sum ? "sum" : "mean"},
              {"triplets_per_anchor", c.triplets_per_anchor},
              {"resample_each_epoch", c.resample_each_epoch},
              {"pos_dims", c.pos_dims},
              {"walk_length", c.walk_length},
              {"walks_per_node", c.walks_per_node},
              {"window", c.window},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps}};
}

void apply_config_json(TrainConfig& c, const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
  const json known = config_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
  }
  try {
    c.d_in = j.value("d_in", c.d_in);
    c.d_hid = j.value("d_hid", c.d_hid);
    c.d_feat = j.value("d_feat", c.d_feat);
    c.global_layers = j.value("C", c.global_layers);
    c.expert_layers = j.value("L", c.expert_layers);
    c.sv_layers = j.value("Z", c.sv_layers);
    c.edge_top_k = j.value("edge_top_k", c.edge_top_k);
    c.margin = j.value("gamma", c.margin);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.heads = j.value("heads", c.heads);
    c.seed = j.value("seed", c.seed);
    c.no_moe = j.value("no_moe", c.no_moe);
    c.no_dlgnn = j.value("no_dlgnn", c.no_dlgnn);
    c.no_sv = j.value("no_sv", c.no_sv);
    c.no_samf = j.value("no_samf", c.no_samf);
    c.no_l_sv = j.value("no_l_sv", c.no_l_sv);
    c.no_l_f = j.value("no_l_f", c.no_l_f);
    if (j.contains("edge_mode")) {
      const auto mode = j["edge_mode"].get<std::string>();
      if (mode == "global") {
        c.edge_mode = EdgeMode::GlobalThreshold;
      } else if (mode == "per_node_topk") {
        c.edge_mode = EdgeMode::PerNodeTopK;
      } else {
        throw Error(ErrorCode::InvalidArgument, "edge_mode must be 'global' or 'per_node_topk'");
      }
    }
    c.normalize_taxi = j.value("normalize_taxi", c.normalize_taxi);
    c.fnn_per_type = j.value("fnn_per_type", c.fnn_per_type);
    c.freeze_node_init = j.value("freeze_node_init", c.freeze_node_init);
    c.random_edge_init = j.value("random_edge_init", c.random_edge_init);
    c.mean_aggregate = j.value("mean_aggregate", c.mean_aggregate);
    c.residual_image_update = j.value("residual_image_update", c.residual_image_update);
    if (j.contains("loss_reduction")) {
      const auto red = j["loss_reduction"].get<std::string>();
      if (red != "mean" && red != "sum") throw Error(ErrorCode::InvalidArgument, "loss_reduction must be mean or sum");
      c.loss_reduction = red == "sum" ? objectives::Reduction::Sum : objectives::Reduction::Mean;
    }
    c.triplets_per_anchor = j.value("triplets_per_anchor", c.triplets_per_anchor);
    c.resample_each_epoch = j.value("resample_each_epoch", c.resample_each_epoch);
    c.pos_dims = j.value("pos_dims", c.pos_dims);
    c.walk_length = j.value("walk_length", c.walk_length);
    c.walks_per_node = j.value("walks_per_node", c.walks_per_node);
    c.window = j.value("window", c.window);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
}

}  // namespace

TrainConfig train_config_from_json(const std::string& json_text, TrainConfig base) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  apply_config_json(base, j);
  base.validate();
  return base;
}

std::string train_config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

std::string config_hash(const TrainConfig& cfg) { return hex64(fnv1a(config_json(cfg).dump())); }

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> kVariants = {"no_moe", "no_dlgnn", "no_sv", "no_samf", "no_l_sv", "no_l_f"};
  return kVariants;
}

TrainConfig with_variant(TrainConfig cfg, const std::string& variant) {
  if (variant == "full") {
  } else if (variant == "no_moe") {
    cfg.no_moe = true;
  } else if (variant == "no_dlgnn") {
    cfg.no_dlgnn = true;
  } else if (variant == "no_sv") {
    cfg.no_sv = true;
  } else if (variant == "no_samf") {
    cfg.no_samf = true;
  } else if (variant == "no_l_sv") {
    cfg.no_l_sv = true;
  } else if (variant == "no_l_f") {
    cfg.no_l_f = true;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown ablation variant '" + variant + "'");
  }
  cfg.resolve();
  return cfg;
}

// -- inputs ------------------------------------------------------------------

std::array<Eigen::Index, kNumModalities> ModelInputs::gating_widths() const {
  std::array<Eigen::Index, kNumModalities> w{};
  for (int m = 0; m < kNumModalities; ++m) w[m] = gating_features[m].cols();
  return w;
}

ModelInputs prepare_inputs(const UrbanDataset& ds, GraphSet graphs) {
  ModelInputs in;
  in.n_regions = ds.n_regions();
  in.adjacency = ds.adjacency;
  in.d_raw_sv = ds.d_raw_sv;
  std::vector<Edge> all = graphs.hetero.intra_edges;
  all.insert(all.end(), graphs.hetero.cross_edges.begin(), graphs.hetero.cross_edges.end());
  in.hetero_edges = message_edges_with_self_loops(graphs.hetero.n_nodes(), all);
  for (Modality m : kAllModalities) in.expert_adjacency[index_of(m)] = normalized_adjacency(graphs.subgraph(m));

  in.gating_features[index_of(Modality::Region)] = ad::Tensor::constant(graphs.region_positions);
  for (Modality m : kAggregatedModalities) {
    Matrix f = ds.table(m).matrix;
    if (is_count_modality(m)) f = f.array().log1p().matrix();
    in.gating_features[index_of(m)] = ad::Tensor::constant(std::move(f));
  }
  in.sv_images = ad::Tensor::constant(sv::stack_images(ds));
  in.graphs = std::move(graphs);
  return in;
}

ModelInputs prepare_inputs(const UrbanDataset& ds, const TrainConfig& cfg) {
  return prepare_inputs(ds, build_graph_set(ds, cfg.graph_config()));
}

// -- model state ---------------------------------------------------------------

ModelState ModelState::shaped(int n_regions, int d_raw_sv, const std::array<Eigen::Index, kNumModalities>& widths,
                              const TrainConfig& cfg, nn::Rng& rng) {
  ModelState s;
  s.config = cfg;
  s.config.resolve();
  s.config.validate();
  s.n_regions = n_regions;
  s.d_raw_sv = d_raw_sv;
  s.gating_widths = widths;
  const TrainConfig& c = s.config;
  s.global = moe::GlobalEncoderParams::init(n_regions, c.d_in, c.d_hid, c.global_layers, c.heads, c.fnn_per_type, rng);
  if (!c.no_moe) {
    MoeParams m;
    for (int e = 0; e < kNumModalities; ++e) {
      m.experts[e] = moe::ExpertParams::init(c.d_hid, c.expert_layers, c.random_edge_init, rng);
    }
    m.gating = moe::GatingParams::init(widths, c.d_hid, rng);
    s.moe = std::move(m);
  }
  if (!c.no_sv) s.sv = sv::SvEncoderParams::init(d_raw_sv, c.d_feat, c.d_hid, c.sv_layers, c.heads, c.no_dlgnn, rng);
  s.fusion = fusion::FusionParams::init(c.d_hid, c.channel_count(), c.heads, rng);
  s.matcher = objectives::MatcherParams::init(c.d_hid, c.d_hid, rng);
  return s;
}

ModelState ModelState::init(const ModelInputs& inputs, const TrainConfig& cfg) {
  nn::Rng rng(cfg.seed);
  return shaped(inputs.n_regions, inputs.d_raw_sv, inputs.gating_widths(), cfg, rng);
}

void ModelState::visit(const nn::ParamVisitor& f) {
  global.visit("global", f);
  if (moe) {
    for (int m = 0; m < kNumModalities; ++m) {
      moe->experts[m].visit("expert_" + std::string(name_of(static_cast<Modality>(m))), f);
    }
    moe->gating.visit("gating", f);
  }
  if (sv) sv->visit("sv", f);
  fusion.visit("fusion", f);
  matcher.visit("matcher", f);
}

std::vector<std::pair<std::string, ad::Tensor>> ModelState::named_parameters() {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  visit([&](const std::string& name, ad::Tensor& t) { out.emplace_back(name, t); });
  return out;
}

ModelState ModelState::clone() const {
  ModelState copy = *this;
  copy.visit([](const std::string&, ad::Tensor& t) { t = t.detached_copy(); });
  return copy;
}

bool ModelState::all_finite() {
  bool ok = true;
  visit([&](const std::string&, ad::Tensor& t) { ok = ok && t.value().allFinite(); });
  return ok;
}

// -- forward / losses ------------------------------------------------------------

ForwardResult forward(const ModelInputs& inputs, const ModelState& state) {
  const TrainConfig& c = state.config;
  ForwardResult fr;
  const moe::ChannelArray global = moe::global_encode(inputs.hetero_edges, inputs.n_regions, state.global);
  moe::ChannelArray hats;
  if (c.no_moe) {
    hats = global;
  } else {
    const moe::ChannelArray tildes = moe::expert_encode(inputs.expert_adjacency, global, state.moe->experts);
    fr.gates = moe::gating_weights(inputs.gating_features, state.moe->gating);
    hats = moe::apply_gating(fr.gates, tildes);
  }
  fr.channels.assign(hats.begin(), hats.end());

  if (!c.no_sv) {
    if (c.no_dlgnn) {
      fr.street_view = sv::sv_encode_virtual_only(inputs.graphs.street_view, inputs.sv_images, *state.sv);
    } else {
      sv::SvOptions opts;
      opts.mean_aggregate = c.mean_aggregate;
      opts.residual_image_update = c.residual_image_update;
      fr.street_view = sv::sv_encode(inputs.graphs.street_view, inputs.sv_images, *state.sv, opts);
    }
    fr.channels.push_back(fr.street_view);
  }

  fr.fused_tokens = fusion::cross_modal_attention(fr.channels, state.fusion);
  if (c.no_samf) {
    fr.embedding = ad::mean_blocks(fr.fused_tokens, state.fusion.tokens);
  } else {
    fr.spatial = fusion::spatial_weights(fr.fused_tokens, state.fusion);
    fr.embedding = fusion::fuse(fr.fused_tokens, fr.spatial, state.fusion).embedding;
  }
  return fr;
}

EpochSamples draw_epoch_samples(const Adjacency& adjacency, int triplets_per_anchor, nn::Rng& rng) {
  EpochSamples s;
  s.aggregated = objectives::sample_triplets(adjacency, rng, triplets_per_anchor, objectives::Level::Aggregated);
  s.street_view = objectives::sample_triplets(adjacency, rng, triplets_per_anchor, objectives::Level::StreetView);
  s.negative_map = objectives::sample_negative_map(adjacency.size(), rng);
  return s;
}

objectives::LossReport LossTerms::report() const {
  return {agg.item(), sv.item(), f.item(), total.item()};
}

LossTerms compute_losses(const ForwardResult& fr, const ModelState& state, const EpochSamples& samples) {
  const TrainConfig& c = state.config;
  LossTerms t;
  const std::span<const ad::Tensor> aggregated(fr.channels.data(), kNumModalities);
  t.agg = objectives::triplet_loss(objectives::aggregated_anchor(aggregated), samples.aggregated, c.margin,
                                   c.loss_reduction);
  t.sv = (!c.no_sv && !c.no_l_sv)
             ? objectives::triplet_loss(fr.street_view, samples.street_view, c.margin, c.loss_reduction)
             : ad::Tensor::scalar(0.0);
  t.f = !c.no_l_f ? objectives::fusion_bce_loss(fr.channels, fr.embedding, state.matcher, samples.negative_map,
                                                c.loss_reduction)
                  : ad::Tensor::scalar(0.0);
  t.total = objectives::total_loss(t.agg, t.sv, t.f);
  return t;
}

// -- training ------------------------------------------------------------------

TrainHistory train_state(const ModelInputs& inputs, ModelState& state, const EpochObserver& observer) {
  const TrainConfig& c = state.config;
  auto params = state.named_parameters();
  if (state.adam.first_moment.size() != params.size()) {
    state.adam.step = 0;
    state.adam.first_moment.clear();
    state.adam.second_moment.clear();
    for (auto& [name, p] : params) {
      state.adam.first_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
      state.adam.second_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  std::vector<bool> trainable(params.size(), true);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (c.freeze_node_init && params[k].first == "global.node_embeddings") trainable[k] = false;
  }

  // Samples depend only on (seed, optimizer step) so a resumed run draws
  // exactly what an uninterrupted one would.
  auto samples_for_step = [&](long step) {
    std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32), 0x5a4d5052u,
                      static_cast<std::uint32_t>(step)};
    nn::Rng sampler(seq);
    return draw_epoch_samples(inputs.adjacency, c.triplets_per_anchor, sampler);
  };
  TrainHistory history;
  EpochSamples samples;
  for (int epoch = 1; epoch <= c.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (c.resample_each_epoch) {
      samples = samples_for_step(state.adam.step);
    } else if (epoch == 1) {
      samples = samples_for_step(0);
    }
    const ForwardResult fr = forward(inputs, state);
    const LossTerms losses = compute_losses(fr, state, samples);
    const auto report = losses.report();
    if (!std::isfinite(report.l_total)) {
      std::ostringstream msg;
      msg << "non-finite loss at epoch " << epoch << " (l_agg=" << report.l_agg << ", l_sv=" << report.l_sv
          << ", l_f=" << report.l_f << ")";
      throw Error(ErrorCode::NaNLoss, msg.str());
    }
    if (observer) observer(epoch, fr, report);

    for (auto& [name, p] : params) p.zero_grad();
    losses.total.backward();

    ++state.adam.step;
    const double t = static_cast<double>(state.adam.step);
    const double bc1 = 1.0 - std::pow(c.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(c.adam_beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (!trainable[k]) continue;
      auto& p = params[k].second;
      const Matrix g = p.grad();
      Matrix& m = state.adam.first_moment[k];
      Matrix& v = state.adam.second_moment[k];
      m = c.adam_beta1 * m + (1.0 - c.adam_beta1) * g;
      v = c.adam_beta2 * v + (1.0 - c.adam_beta2) * g.cwiseProduct(g);
      p.mutable_value().array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.adam_eps);
    }
    for (auto& [name, p] : params) {
      if (!p.value().allFinite()) {
        throw Error(ErrorCode::NaNLoss, "parameter '" + name + "' became non-finite at epoch " + std::to_string(epoch));
      }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back({epoch, report, secs});
  }
  for (auto& [name, p] : params) p.zero_grad();
  return history;
}

TrainResult train(const ModelInputs& inputs, TrainConfig cfg, const EpochObserver& observer) {
  cfg.resolve();
  cfg.validate();
  TrainResult r{ModelState::init(inputs, cfg), {}};
  r.history = train_state(inputs, r.state, observer);
  return r;
}

// -- embeddings ----------------------------------------------------------------

EmbeddingTable embed(const ModelState& state, const ModelInputs& inputs) {
  const ForwardResult fr = forward(inputs, state);
  EmbeddingTable t;
  t.embedding = fr.embedding.value();
  for (std::size_t c = 0; c < fr.channels.size(); ++c) {
    t.channel_names.emplace_back(c < kNumModalities ? std::string(name_of(static_cast<Modality>(c))) : "streetview");
    t.channels.push_back(fr.channels[c].value());
  }
  return t;
}

void write_embeddings_csv(const Matrix& embedding, const fs::path& path) {
  std::string out = "region";
  for (Eigen::Index c = 0; c < embedding.cols(); ++c) out += ",e" + std::to_string(c);
  out += '\n';
  for (Eigen::Index r = 0; r < embedding.rows(); ++r) {
    out += std::to_string(r);
    for (Eigen::Index c = 0; c < embedding.cols(); ++c) out += "," + io::format_double(embedding(r, c));
    out += '\n';
  }
  io::write_file(path, out);
}

Matrix read_embeddings_csv(const fs::path& path) {
  const auto rows = io::read_csv(path);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "region") {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": expected header 'region,e0,...'");
  }
  const auto width = static_cast<Eigen::Index>(rows[0].size()) - 1;
  Matrix m(static_cast<Eigen::Index>(rows.size()) - 1, width);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != width + 1) {
      throw Error(ErrorCode::SchemaMismatch, path.string() + " row " + std::to_string(r + 1));
    }
    const auto region = static_cast<std::size_t>(io::parse_double(rows[r][0], path.string()));
    if (region != r - 1) throw Error(ErrorCode::SchemaMismatch, path.string() + ": rows must be ordered by region id");
    for (Eigen::Index c = 0; c < width; ++c) m(r - 1, c) = io::parse_double(rows[r][c + 1], path.string());
  }
  return m;
}

namespace {

template <class T>
void append_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(bytes, sizeof(T));
}

double read_le_double(const char* p) {
  char bytes[sizeof(double)];
  std::memcpy(bytes, p, sizeof(double));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(double));
  double v;
  std::memcpy(&v, bytes, sizeof(double));
  return v;
}

fs::path manifest_path_for(const fs::path& bin) {
  fs::path p = bin;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void write_channel_bundle(const EmbeddingTable& table, const fs::path& bin_path) {
  std::string bin;
  json index;
  index["dtype"] = "float32-le";
  index["blocks"] = json::array();
  auto add_block = [&](const std::string& name, const Matrix& m) {
    index["blocks"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", bin.size()}});
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) append_le(bin, static_cast<float>(m(r, c)));
    }
  };
  add_block("embedding", table.embedding);
  for (std::size_t c = 0; c < table.channels.size(); ++c) add_block(table.channel_names[c], table.channels[c]);
  io::write_file(bin_path, bin);
  io::write_file(manifest_path_for(bin_path), index.dump(2) + "\n");
}

void write_train_log(const TrainHistory& history, const fs::path& path) {
  std::string out = "epoch,l_agg,l_sv,l_f,l_total\n";
  for (const auto& e : history.epochs) {
    out += std::to_string(e.epoch) + "," + io::format_double(e.losses.l_agg) + "," + io::format_double(e.losses.l_sv) +
           "," + io::format_double(e.losses.l_f) + "," + io::format_double(e.losses.l_total) + "\n";
  }
  io::write_file(path, out);
}

// -- checkpoints ---------------------------------------------------------------

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(ModelState& state, const fs::path& path) {
  std::string bin;
  json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["dtype"] = "float64-le";
  manifest["config"] = config_json(state.config);
  manifest["config_hash"] = config_hash(state.config);
  manifest["shape_signature"] = state.config.shape_signature();
  manifest["n_regions"] = state.n_regions;
  manifest["d_raw_sv"] = state.d_raw_sv;
  manifest["gating_widths"] = state.gating_widths;
  manifest["adam_step"] = state.adam.step;
  manifest["params"] = json::array();

  auto params = state.named_parameters();
  const bool with_moments = state.adam.first_moment.size() == params.size();
  manifest["has_moments"] = with_moments;
  auto add_block = [&](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) append_le(bin, m.data()[i]);
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [name, p] = params[k];
    manifest["params"].push_back({{"name", name}, {"shape", {p.rows(), p.cols()}}, {"offset", bin.size()}});
    add_block(p.value());
    if (with_moments) {
      add_block(state.adam.first_moment[k]);
      add_block(state.adam.second_moment[k]);
    }
  }
  manifest["total_bytes"] = bin.size();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_file(path, bin);
  io::write_file(manifest_path_for(path), manifest.dump(2) + "\n");
}

ModelState load_checkpoint(const fs::path& path) {
  const fs::path manifest_path = manifest_path_for(path);
  if (!fs::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
  if (!fs::exists(manifest_path)) throw Error(ErrorCode::MissingFile, manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(io::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("version") || manifest["version"] != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported checkpoint version in " + manifest_path.string());
  }
  const std::string bin = io::read_file(path);
  try {
    if (manifest.at("total_bytes").get<std::size_t>() != bin.size()) {
      throw Error(ErrorCode::CorruptFile, path.string() + " has " + std::to_string(bin.size()) + " bytes, manifest expects " +
                                              std::to_string(manifest.at("total_bytes").get<std::size_t>()));
    }
    TrainConfig cfg;
    apply_config_json(cfg, manifest.at("config"));
    std::array<Eigen::Index, kNumModalities> widths{};
    const auto w = manifest.at("gating_widths").get<std::vector<Eigen::Index>>();
    if (w.size() != kNumModalities) throw Error(ErrorCode::CorruptFile, "gating_widths must have six entries");
    std::copy(w.begin(), w.end(), widths.begin());
    nn::Rng rng(cfg.seed);
    ModelState state =
        ModelState::shaped(manifest.at("n_regions").get<int>(), manifest.at("d_raw_sv").get<int>(), widths, cfg, rng);

    std::map<std::string, const json*> by_name;
    for (const auto& p : manifest.at("params")) by_name[p.at("name").get<std::string>()] = &p;
    const bool with_moments = manifest.value("has_moments", false);
    auto params = state.named_parameters();
    if (by_name.size() != params.size()) throw Error(ErrorCode::CorruptFile, "parameter list does not match the config");
    auto read_block = [&](std::size_t offset, Matrix& m) {
      const std::size_t bytes = static_cast<std::size_t>(m.size()) * sizeof(double);
      if (offset + bytes > bin.size()) throw Error(ErrorCode::CorruptFile, "parameter block past end of file");
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = read_le_double(bin.data() + offset + i * sizeof(double));
      return offset + bytes;
    };
    for (auto& [name, p] : params) {
      const auto it = by_name.find(name);
      if (it == by_name.end()) throw Error(ErrorCode::CorruptFile, "missing parameter '" + name + "'");
      const auto shape = it->second->at("shape").get<std::vector<Eigen::Index>>();
      if (shape.size() != 2 || shape[0] != p.rows() || shape[1] != p.cols()) {
        throw Error(ErrorCode::CorruptFile, "shape mismatch for '" + name + "'");
      }
      std::size_t offset = read_block(it->second->at("offset").get<std::size_t>(), p.mutable_value());
      if (with_moments) {
        Matrix m(p.rows(), p.cols());
        Matrix v(p.rows(), p.cols());
        offset = read_block(offset, m);
        read_block(offset, v);
        state.adam.first_moment.push_back(std::move(m));
        state.adam.second_moment.push_back(std::move(v));
      }
    }
    state.adam.step = manifest.value("adam_step", 0L);
    return state;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, manifest_path.string() + ": " + e.what());
  }
}

ModelState load_checkpoint(const fs::path& path, const TrainConfig& expected) {
  ModelState state = load_checkpoint(path);
  TrainConfig resolved = expected;
  resolved.resolve();
  if (state.config.shape_signature() != resolved.shape_signature()) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint was trained with [" + state.config.shape_signature() +
                                                "] but the requested model is [" + resolved.shape_signature() + "]");
  }
  return state;
}

}  // namespace mtgrr
