#include "mtgrr/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mtgrr/dataset.hpp"
#include "mtgrr/downstream.hpp"
#include "mtgrr/graphs.hpp"
#include "mtgrr/trainer.hpp"
#include "text_io.hpp"

namespace mtgrr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("MTGRR_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (end == raw || *end != '\0') throw Error(ErrorCode::InvalidArgument, "MTGRR_SEED must be a nonnegative integer");
  return static_cast<std::uint64_t>(v);
}

/// One run_manifest.json per output directory.
class Manifest {
 public:
  Manifest(std::string command, fs::path out_dir) : command_(std::move(command)), out_dir_(std::move(out_dir)) {
    body_["command"] = command_;
    body_["started_at"] = utc_now();
  }
  void set(const std::string& key, json value) { body_[key] = std::move(value); }
  void artifact(const fs::path& p) { artifacts_.push_back(fs::relative(p, out_dir_).generic_string()); }
  void write() {
    body_["artifacts"] = artifacts_;
    body_["finished_at"] = utc_now();
    io::write_file(out_dir_ / "run_manifest.json", body_.dump(2) + "\n");
  }

 private:
  std::string command_;
  fs::path out_dir_;
  json body_;
  std::vector<std::string> artifacts_;
};

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + p.string() + ": " + ec.message());
}

/// Flags that override config keys; unset flags leave the config alone.
struct ConfigFlags {
  std::string config = "default";
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> d_hid;
  std::optional<int> d_in;
  std::optional<int> heads;
  std::optional<int> edge_top_k;
  std::optional<double> gamma;

  void add_to(CLI::App* app, bool with_config) {
    if (with_config) app->add_option("--config", config, "JSON config file, or 'default'");
    app->add_option("--seed", seed, "Seed; overrides the config and MTGRR_SEED");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--d-hid", d_hid, "Hidden width");
    app->add_option("--d-in", d_in, "Node embedding width");
    app->add_option("--heads", heads, "Attention heads");
    app->add_option("--edge-top-k", edge_top_k, "Edges kept per similarity subgraph");
    app->add_option("--gamma", gamma, "Triplet margin");
  }

  TrainConfig resolve() const {
    TrainConfig base;
    if (auto s = env_seed()) base.seed = *s;
    TrainConfig cfg = config == "default" ? base : train_config_from_json(io::read_file(config), base);
    if (seed) cfg.seed = *seed;
    if (epochs) cfg.epochs = *epochs;
    if (lr) cfg.lr = *lr;
    if (d_hid) cfg.d_hid = *d_hid;
    if (d_in) cfg.d_in = *d_in;
    if (heads) cfg.heads = *heads;
    if (edge_top_k) cfg.edge_top_k = *edge_top_k;
    if (gamma) cfg.margin = *gamma;
    cfg.resolve();
    cfg.validate();
    return cfg;
  }
};

json config_echo(const TrainConfig& cfg) { return json::parse(train_config_to_json(cfg)); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// -- subcommands ---------------------------------------------------------------

struct GenDataArgs {
  std::string spec = "default";
  fs::path out;
  std::optional<std::uint64_t> seed;
};

void run_gen_data(const GenDataArgs& a) {
  SynthSpec spec;
  if (auto s = env_seed()) spec.seed = *s;
  if (a.spec != "default") {
    const std::uint64_t fallback = spec.seed;
    json j = json::parse(io::read_file(a.spec), nullptr, false);
    spec = synth_spec_from_json(io::read_file(a.spec));
    if (j.is_object() && !j.contains("seed")) spec.seed = fallback;
  }
  if (a.seed) spec.seed = *a.seed;
  make_dir(a.out);
  Manifest m("gen-data", a.out);
  write_dataset(generate_synthetic_city(spec), a.out);
  m.set("spec", json::parse(synth_spec_to_json(spec)));
  m.set("seed", spec.seed);
  m.set("dataset_hash", dataset_hash(a.out));
  for (const auto& e : fs::directory_iterator(a.out)) {
    if (e.path().filename() != "run_manifest.json") m.artifact(e.path());
  }
  m.write();
}

struct BuildGraphsArgs {
  fs::path data;
  fs::path out;
  ConfigFlags flags;
};

void run_build_graphs(const BuildGraphsArgs& a) {
  const TrainConfig cfg = a.flags.resolve();
  const UrbanDataset ds = load_dataset(a.data);
  make_dir(a.out);
  Manifest m("build-graphs", a.out);
  write_graph_set(build_graph_set(ds, cfg.graph_config()), a.out);
  m.set("config", config_echo(cfg));
  m.set("config_hash", config_hash(cfg));
  m.set("dataset_hash", dataset_hash(a.data));
  m.set("seed", cfg.seed);
  for (const auto& e : fs::directory_iterator(a.out)) {
    if (e.path().filename() != "run_manifest.json") m.artifact(e.path());
  }
  m.write();
}

ModelInputs load_inputs(const UrbanDataset& ds, const std::optional<fs::path>& graphs, const TrainConfig& cfg) {
  return graphs ? prepare_inputs(ds, read_graph_set(ds, *graphs)) : prepare_inputs(ds, cfg);
}

struct TrainArgs {
  fs::path data;
  std::optional<fs::path> graphs;
  fs::path out;
  ConfigFlags flags;
  bool quiet = false;
};

void run_train(const TrainArgs& a) {
  const TrainConfig cfg = a.flags.resolve();
  const UrbanDataset ds = load_dataset(a.data);
  const ModelInputs inputs = load_inputs(ds, a.graphs, cfg);
  make_dir(a.out);
  Manifest m("train", a.out);
  auto observer = [&](int epoch, const ForwardResult&, const objectives::LossReport& r) {
    if (!a.quiet && (epoch == 1 || epoch % 10 == 0 || epoch == cfg.epochs)) {
      std::cerr << "epoch " << epoch << " l_total " << r.l_total << " (agg " << r.l_agg << ", sv " << r.l_sv << ", f "
                << r.l_f << ")\n";
    }
  };
  TrainResult result = train(inputs, cfg, observer);
  const fs::path ckpt = a.out / "checkpoint.bin";
  save_checkpoint(result.state, ckpt);
  write_train_log(result.history, a.out / "train_log.csv");
  const EmbeddingTable table = embed(result.state, inputs);
  write_embeddings_csv(table.embedding, a.out / "embeddings.csv");
  write_channel_bundle(table, a.out / "channels.bin");
  m.set("config", config_echo(cfg));
  m.set("config_hash", config_hash(cfg));
  m.set("dataset_hash", dataset_hash(a.data));
  m.set("seed", cfg.seed);
  for (const char* f : {"checkpoint.bin", "checkpoint.json", "train_log.csv", "embeddings.csv", "channels.bin", "channels.json"}) {
    m.artifact(a.out / f);
  }
  m.write();
}

struct EmbedArgs {
  fs::path ckpt;
  fs::path data;
  std::optional<fs::path> graphs;
  fs::path out;
};

void run_embed(const EmbedArgs& a) {
  const ModelState state = load_checkpoint(a.ckpt);
  const UrbanDataset ds = load_dataset(a.data);
  if (ds.n_regions() != state.n_regions) {
    throw Error(ErrorCode::InconsistentN, "checkpoint was trained on " + std::to_string(state.n_regions) +
                                              " regions, dataset has " + std::to_string(ds.n_regions()));
  }
  const ModelInputs inputs = load_inputs(ds, a.graphs, state.config);
  const fs::path dir = a.out.has_parent_path() ? a.out.parent_path() : fs::path(".");
  make_dir(dir);
  Manifest m("embed", dir);
  write_embeddings_csv(embed(state, inputs).embedding, a.out);
  m.set("config", config_echo(state.config));
  m.set("config_hash", config_hash(state.config));
  m.set("dataset_hash", dataset_hash(a.data));
  m.set("seed", state.config.seed);
  m.set("checkpoint", fs::absolute(a.ckpt).string());
  m.artifact(a.out);
  m.write();
}

struct EvaluateArgs {
  fs::path embeddings;
  fs::path data;
  fs::path out;
  int folds = 5;
  double lambda = 1.0;
  bool split = false;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> train_log;
  std::string label = "MTGRR";
};

void run_evaluate(const EvaluateArgs& a) {
  const UrbanDataset ds = load_dataset(a.data);
  const Matrix emb = read_embeddings_csv(a.embeddings);
  downstream::CvConfig cv;
  cv.folds = a.folds;
  cv.lambda = a.lambda;
  cv.split = a.split;
  cv.seed = a.seed ? *a.seed : env_seed().value_or(0);
  const auto report = downstream::cross_validate(emb, ds.targets, ds.task_names, cv);
  std::optional<TrainHistory> history;
  if (a.train_log) {
    history = downstream::read_train_log(*a.train_log);
  } else if (fs::exists(a.embeddings.parent_path() / "train_log.csv")) {
    history = downstream::read_train_log(a.embeddings.parent_path() / "train_log.csv");
  }
  make_dir(a.out);
  Manifest m("evaluate", a.out);
  for (const auto& p : downstream::emit_report(report, history ? &*history : nullptr, a.out, a.label)) m.artifact(p);
  m.set("config", report.config);
  m.set("config_hash", hex64(fnv1a(report.config.dump())));
  m.set("dataset_hash", dataset_hash(a.data));
  m.set("seed", cv.seed);
  m.write();
  std::cout << downstream::metrics_markdown({{a.label, &report}});
}

struct ExperimentArgs {
  fs::path data;
  std::optional<fs::path> graphs;
  fs::path out;
  ConfigFlags flags;
  int folds = 5;
  double lambda = 1.0;
  int seeds = 1;
};

/// Trains one config per seed and averages the per-task CV metrics.
downstream::MetricsReport train_and_score(const UrbanDataset& ds, const std::optional<fs::path>& graphs,
                                          const TrainConfig& cfg, const ExperimentArgs& a) {
  downstream::MetricsReport avg;
  for (int s = 0; s < a.seeds; ++s) {
    TrainConfig run = cfg;
    run.seed = cfg.seed + static_cast<std::uint64_t>(s);
    const ModelInputs inputs = load_inputs(ds, graphs, run);
    const TrainResult result = train(inputs, run);
    downstream::CvConfig cv;
    cv.folds = a.folds;
    cv.lambda = a.lambda;
    cv.seed = run.seed;
    const auto rep = downstream::cross_validate(embed(result.state, inputs).embedding, ds.targets, ds.task_names, cv);
    if (s == 0) {
      avg = rep;
      for (auto& t : avg.tasks) t.folds.clear();
    } else {
      for (std::size_t k = 0; k < avg.tasks.size(); ++k) {
        avg.tasks[k].mae.mean += rep.tasks[k].mae.mean;
        avg.tasks[k].rmse.mean += rep.tasks[k].rmse.mean;
        avg.tasks[k].r2.mean += rep.tasks[k].r2.mean;
      }
    }
  }
  for (auto& t : avg.tasks) {
    t.mae.mean /= a.seeds;
    t.rmse.mean /= a.seeds;
    t.r2.mean /= a.seeds;
  }
  avg.config = config_echo(cfg);
  avg.config["seeds"] = a.seeds;
  return avg;
}

std::string variant_label(const std::string& v) {
  static const std::map<std::string, std::string> labels = {
      {"full", "MTGRR (full)"},  {"no_moe", "w/o MoE-GNN"}, {"no_dlgnn", "w/o DL-GNN"}, {"no_sv", "w/o street view"},
      {"no_samf", "w/o SAMF"},   {"no_l_sv", "w/o L_sv"},   {"no_l_f", "w/o L_f"}};
  const auto it = labels.find(v);
  return it == labels.end() ? v : it->second;
}

void run_ablate(const ExperimentArgs& a, const std::string& variants_csv) {
  const TrainConfig base = a.flags.resolve();
  const UrbanDataset ds = load_dataset(a.data);
  std::vector<std::string> variants = split_list(variants_csv);
  for (const auto& v : variants) with_variant(base, v);  // rejects unknown names before any training
  variants.push_back("full");
  make_dir(a.out);
  Manifest m("ablate", a.out);

  std::vector<downstream::MetricsReport> reports;
  for (const auto& v : variants) {
    std::cerr << "ablate: " << v << "\n";
    reports.push_back(train_and_score(ds, a.graphs, with_variant(base, v), a));
  }
  std::vector<std::pair<std::string, const downstream::MetricsReport*>> rows;
  json out = json::array();
  for (std::size_t i = 0; i < variants.size(); ++i) {
    rows.emplace_back(variant_label(variants[i]), &reports[i]);
    json entry = downstream::metrics_to_json(reports[i]);
    entry["variant"] = variants[i];
    entry["mean_r2"] = reports[i].mean_r2();
    out.push_back(entry);
  }
  const std::string table = downstream::metrics_markdown(rows);
  io::write_file(a.out / "ablation.md", table);
  io::write_file(a.out / "ablation.json", out.dump(2) + "\n");
  m.artifact(a.out / "ablation.md");
  m.artifact(a.out / "ablation.json");
  m.set("config", config_echo(base));
  m.set("config_hash", config_hash(base));
  m.set("dataset_hash", dataset_hash(a.data));
  m.set("seed", base.seed);
  m.write();
  std::cout << table;
}

json parse_scalar(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  json j = json::parse(s, nullptr, false);
  if (!j.is_discarded() && j.is_number()) return j;
  return s;
}

void run_sweep(const ExperimentArgs& a, const std::string& param, const std::string& values_csv) {
  const TrainConfig base = a.flags.resolve();
  const UrbanDataset ds = load_dataset(a.data);
  const auto values = split_list(values_csv);
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "--values is empty");
  std::vector<TrainConfig> configs;
  for (const auto& v : values) {
    json patch = json::object();
    patch[param] = parse_scalar(v);
    configs.push_back(train_config_from_json(patch.dump(), base));
  }
  make_dir(a.out);
  Manifest m("sweep", a.out);
  std::string csv = "value";
  for (const auto& t : ds.task_names) csv += ",r2_" + t + ",mae_" + t + ",rmse_" + t;
  csv += ",mean_r2\n";
  json out = json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::cerr << "sweep: " << param << " = " << values[i] << "\n";
    const auto rep = train_and_score(ds, a.graphs, configs[i], a);
    csv += values[i];
    for (const auto& t : rep.tasks) {
      csv += "," + io::format_double(t.r2.mean) + "," + io::format_double(t.mae.mean) + "," + io::format_double(t.rmse.mean);
    }
    csv += "," + io::format_double(rep.mean_r2()) + "\n";
    json entry = downstream::metrics_to_json(rep);
    entry["value"] = parse_scalar(values[i]);
    out.push_back(entry);
  }
  io::write_file(a.out / "sweep.csv", csv);
  io::write_file(a.out / "sweep.json", json{{"param", param}, {"runs", out}}.dump(2) + "\n");
  m.artifact(a.out / "sweep.csv");
  m.artifact(a.out / "sweep.json");
  m.set("config", config_echo(base));
  m.set("config_hash", config_hash(base));
  m.set("dataset_hash", dataset_hash(a.data));
  m.set("seed", base.seed);
  m.set("param", param);
  m.write();
  std::cout << csv;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Multimodal urban region representation toolkit", args.empty() ? "mtgrr" : args[0]};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic city dataset");
  gen_cmd->add_option("--spec", gen.spec, "Synthetic spec JSON, or 'default'");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Seed; overrides the spec and MTGRR_SEED");

  BuildGraphsArgs bg;
  auto* bg_cmd = app.add_subcommand("build-graphs", "Build modality subgraphs and positional embeddings");
  bg_cmd->add_option("--data", bg.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  bg_cmd->add_option("--out", bg.out, "Output graph directory")->required();
  bg.flags.add_to(bg_cmd, true);

  TrainArgs tr;
  std::string tr_graphs;
  auto* tr_cmd = app.add_subcommand("train", "Train the model and export embeddings");
  tr_cmd->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr_cmd->add_option("--graphs", tr_graphs, "Graph directory from build-graphs")->check(CLI::ExistingDirectory);
  tr_cmd->add_option("--out", tr.out, "Output directory")->required();
  tr_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress");
  tr.flags.add_to(tr_cmd, true);

  EmbedArgs em;
  std::string em_graphs;
  auto* em_cmd = app.add_subcommand("embed", "Export region embeddings from a checkpoint");
  em_cmd->add_option("--ckpt", em.ckpt, "checkpoint.bin")->required()->check(CLI::ExistingFile);
  em_cmd->add_option("--data", em.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  em_cmd->add_option("--graphs", em_graphs, "Graph directory from build-graphs")->check(CLI::ExistingDirectory);
  em_cmd->add_option("--out", em.out, "Output embeddings.csv")->required();

  EvaluateArgs ev;
  std::string ev_log;
  auto* ev_cmd = app.add_subcommand("evaluate", "Ridge regression evaluation of embeddings");
  ev_cmd->add_option("--embeddings", ev.embeddings, "embeddings.csv")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev_cmd->add_option("--out", ev.out, "Report directory")->required();
  ev_cmd->add_option("--folds", ev.folds, "Cross-validation folds")->check(CLI::Range(2, 1000000));
  ev_cmd->add_option("--lambda", ev.lambda, "Ridge penalty on standardized features")->check(CLI::PositiveNumber);
  ev_cmd->add_flag("--split", ev.split, "Single 60/20/20 split instead of k-fold");
  ev_cmd->add_option("--seed", ev.seed, "Fold shuffle seed");
  ev_cmd->add_option("--train-log", ev_log, "train_log.csv for losses.csv")->check(CLI::ExistingFile);
  ev_cmd->add_option("--label", ev.label, "Row label in metrics.md");

  ExperimentArgs ab;
  std::string ab_graphs;
  std::string variants = "no_moe,no_dlgnn,no_sv,no_samf,no_l_sv,no_l_f";
  auto* ab_cmd = app.add_subcommand("ablate", "Train each ablation variant and compare");
  ab_cmd->add_option("--data", ab.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ab_cmd->add_option("--graphs", ab_graphs, "Graph directory from build-graphs")->check(CLI::ExistingDirectory);
  ab_cmd->add_option("--out", ab.out, "Output directory")->required();
  ab_cmd->add_option("--variants", variants, "Comma-separated variant names");
  ab_cmd->add_option("--folds", ab.folds, "Cross-validation folds")->check(CLI::Range(2, 1000000));
  ab_cmd->add_option("--lambda", ab.lambda, "Ridge penalty")->check(CLI::PositiveNumber);
  ab_cmd->add_option("--seeds", ab.seeds, "Seeds averaged per variant")->check(CLI::Range(1, 1000));
  ab.flags.add_to(ab_cmd, true);

  ExperimentArgs sw;
  std::string sw_graphs;
  std::string param;
  std::string values;
  auto* sw_cmd = app.add_subcommand("sweep", "Train over values of one config key");
  sw_cmd->add_option("--data", sw.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  sw_cmd->add_option("--graphs", sw_graphs, "Graph directory from build-graphs")->check(CLI::ExistingDirectory);
  sw_cmd->add_option("--out", sw.out, "Output directory")->required();
  sw_cmd->add_option("--param", param, "Config key, e.g. d_hid")->required();
  sw_cmd->add_option("--values", values, "Comma-separated values")->required();
  sw_cmd->add_option("--folds", sw.folds, "Cross-validation folds")->check(CLI::Range(2, 1000000));
  sw_cmd->add_option("--lambda", sw.lambda, "Ridge penalty")->check(CLI::PositiveNumber);
  sw_cmd->add_option("--seeds", sw.seeds, "Seeds averaged per value")->check(CLI::Range(1, 1000));
  sw.flags.add_to(sw_cmd, true);

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    const auto sub = app.get_subcommands();
    std::cout << (sub.empty() ? app.help() : sub.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto sub = app.get_subcommands();
    std::cerr << "error: " << e.what() << "\n\n" << (sub.empty() ? app.help() : sub.front()->help());
    return kExitUsage;
  }

  auto opt_path = [](const std::string& s) { return s.empty() ? std::optional<fs::path>() : fs::path(s); };
  try {
    if (gen_cmd->parsed()) {
      run_gen_data(gen);
    } else if (bg_cmd->parsed()) {
      run_build_graphs(bg);
    } else if (tr_cmd->parsed()) {
      tr.graphs = opt_path(tr_graphs);
      run_train(tr);
    } else if (em_cmd->parsed()) {
      em.graphs = opt_path(em_graphs);
      run_embed(em);
    } else if (ev_cmd->parsed()) {
      ev.train_log = opt_path(ev_log);
      run_evaluate(ev);
    } else if (ab_cmd->parsed()) {
      ab.graphs = opt_path(ab_graphs);
      run_ablate(ab, variants);
    } else if (sw_cmd->parsed()) {
      sw.graphs = opt_path(sw_graphs);
      run_sweep(sw, param, values);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args);
}

}  // namespace mtgrr::cli
