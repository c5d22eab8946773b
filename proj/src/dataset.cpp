#include "mtgrr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "text_io.hpp"

namespace mtgrr {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<int> Adjacency::neighbors(int i) const {
  std::vector<int> out;
  for (int j = 0; j < n_; ++j) {
    if (j != i && (*this)(i, j)) out.push_back(j);
  }
  return out;
}

std::vector<std::pair<int, int>> Adjacency::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n_; ++i) {
    for (int j = i + 1; j < n_; ++j) {
      if ((*this)(i, j)) out.emplace_back(i, j);
    }
  }
  return out;
}

const ModalityFeatureTable& UrbanDataset::table(Modality m) const {
  if (m == Modality::Region) throw Error(ErrorCode::InvalidArgument, "the region table is derived, not stored");
  return tables[index_of(m) - 1];
}

ModalityFeatureTable& UrbanDataset::table(Modality m) {
  if (m == Modality::Region) throw Error(ErrorCode::InvalidArgument, "the region table is derived, not stored");
  return tables[index_of(m) - 1];
}

std::size_t UrbanDataset::total_images() const {
  std::size_t total = 0;
  for (const auto& s : sv_sets) total += static_cast<std::size_t>(s.features.rows());
  return total;
}

std::string_view to_string(FindingKind kind) {
  switch (kind) {
    case FindingKind::NonDenseIds: return "NonDenseIds";
    case FindingKind::NonFiniteCentroid: return "NonFiniteCentroid";
    case FindingKind::AsymmetricAdjacency: return "AsymmetricAdjacency";
    case FindingKind::SelfLoop: return "SelfLoop";
    case FindingKind::AdjacencySizeMismatch: return "AdjacencySizeMismatch";
    case FindingKind::MissingTable: return "MissingTable";
    case FindingKind::RowCountMismatch: return "RowCountMismatch";
    case FindingKind::NegativeCount: return "NegativeCount";
    case FindingKind::NonIntegerCount: return "NonIntegerCount";
    case FindingKind::NonFiniteValue: return "NonFiniteValue";
    case FindingKind::StreetViewWidthMismatch: return "StreetViewWidthMismatch";
    case FindingKind::DanglingStreetView: return "DanglingStreetView";
    case FindingKind::TargetShapeMismatch: return "TargetShapeMismatch";
  }
  return "Unknown";
}

std::size_t ValidationReport::count(FindingKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(findings.begin(), findings.end(), [kind](const Finding& f) { return f.kind == kind; }));
}

ValidationReport validate_dataset(const UrbanDataset& ds) {
  ValidationReport report;
  auto add = [&](FindingKind k, std::string loc) { report.findings.push_back({k, std::move(loc)}); };
  const int n = ds.n_regions();

  for (int i = 0; i < n; ++i) {
    const auto& r = ds.regions[i];
    if (r.id != i) add(FindingKind::NonDenseIds, "regions[" + std::to_string(i) + "].id=" + std::to_string(r.id));
    if (!std::isfinite(r.x) || !std::isfinite(r.y)) add(FindingKind::NonFiniteCentroid, "region " + std::to_string(i));
  }

  if (ds.adjacency.size() != n) {
    add(FindingKind::AdjacencySizeMismatch, "adjacency is " + std::to_string(ds.adjacency.size()) + ", expected " +
                                                std::to_string(n));
  } else {
    for (int i = 0; i < n; ++i) {
      if (ds.adjacency(i, i)) add(FindingKind::SelfLoop, "adjacency(" + std::to_string(i) + "," + std::to_string(i) + ")");
      for (int j = i + 1; j < n; ++j) {
        if (ds.adjacency(i, j) != ds.adjacency(j, i)) {
          add(FindingKind::AsymmetricAdjacency, "adjacency(" + std::to_string(i) + "," + std::to_string(j) + ")");
        }
      }
    }
  }

  for (Modality m : kAggregatedModalities) {
    const auto& t = ds.table(m);
    const std::string name(name_of(m));
    if (t.modality != m || t.matrix.size() == 0) {
      add(FindingKind::MissingTable, name);
      continue;
    }
    if (t.matrix.rows() != n) {
      add(FindingKind::RowCountMismatch, name + " has " + std::to_string(t.matrix.rows()) + " rows");
    }
    for (Eigen::Index r = 0; r < t.matrix.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.matrix.cols(); ++c) {
        const double v = t.matrix(r, c);
        const std::string loc = name + "[" + std::to_string(r) + "," + std::to_string(c) + "]";
        if (!std::isfinite(v)) {
          add(FindingKind::NonFiniteValue, loc);
        } else if (is_count_modality(m)) {
          if (v < 0) add(FindingKind::NegativeCount, loc);
          if (v != std::floor(v)) add(FindingKind::NonIntegerCount, loc);
        }
      }
    }
  }

  for (std::size_t s = 0; s < ds.sv_sets.size(); ++s) {
    const auto& set = ds.sv_sets[s];
    const std::string loc = "streetview set " + std::to_string(s);
    if (set.region_id < 0 || set.region_id >= n) add(FindingKind::DanglingStreetView, loc);
    if (set.features.rows() > 0 && set.features.cols() != ds.d_raw_sv) {
      add(FindingKind::StreetViewWidthMismatch, loc + " width " + std::to_string(set.features.cols()));
    }
    if (!set.features.allFinite()) add(FindingKind::NonFiniteValue, loc);
  }

  if (ds.targets.rows() != n || static_cast<std::size_t>(ds.targets.cols()) != ds.task_names.size()) {
    add(FindingKind::TargetShapeMismatch, "targets " + std::to_string(ds.targets.rows()) + "x" +
                                              std::to_string(ds.targets.cols()));
  }
  if (!ds.targets.allFinite()) add(FindingKind::NonFiniteValue, "targets");
  return report;
}

namespace {

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw Error(ErrorCode::MissingFile, p.string());
}

void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw Error(ErrorCode::NonFiniteValue, what);
}

}  // namespace

UrbanDataset load_dataset(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.json";
  require_file(manifest_path);
  for (const char* f : {"regions.jsonl", "adjacency.csv", "streetview.jsonl", "targets.csv"}) require_file(root / f);
  for (Modality m : kAggregatedModalities) require_file(root / (std::string(name_of(m)) + ".csv"));

  json manifest;
  try {
    manifest = json::parse(io::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, "manifest.json: " + std::string(e.what()));
  }
  if (!manifest.contains("version") || manifest["version"] != 1) {
    throw Error(ErrorCode::SchemaMismatch, "manifest.json: unsupported version");
  }
  const int n = manifest.at("n_regions").get<int>();
  const int k = manifest.at("k_tasks").get<int>();

  UrbanDataset ds;
  ds.d_raw_sv = manifest.at("d_raw_sv").get<int>();

  // regions
  {
    std::istringstream in(io::read_file(root / "regions.jsonl"));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (io::is_blank(line)) continue;
      try {
        const json j = json::parse(line);
        Region r;
        r.id = j.at("id").get<int>();
        const auto& c = j.at("centroid");
        if (!c.is_array() || c.size() != 2) throw Error(ErrorCode::SchemaMismatch, "centroid must be [x,y]");
        r.x = c[0].get<double>();
        r.y = c[1].get<double>();
        ds.regions.push_back(std::move(r));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, "regions.jsonl line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    std::sort(ds.regions.begin(), ds.regions.end(), [](const Region& a, const Region& b) { return a.id < b.id; });
    if (static_cast<int>(ds.regions.size()) != n) {
      throw Error(ErrorCode::SchemaMismatch, "regions.jsonl has " + std::to_string(ds.regions.size()) +
                                                 " regions, manifest says " + std::to_string(n));
    }
    for (int i = 0; i < n; ++i) {
      if (ds.regions[i].id != i) throw Error(ErrorCode::SchemaMismatch, "region ids must be dense 0..N-1");
      if (!std::isfinite(ds.regions[i].x) || !std::isfinite(ds.regions[i].y)) {
        throw Error(ErrorCode::NonFiniteValue, "centroid of region " + std::to_string(i));
      }
    }
  }

  // adjacency
  ds.adjacency = Adjacency(n);
  {
    const auto rows = io::read_csv(root / "adjacency.csv");
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (r == 0 && !row.empty() && !io::looks_numeric(row[0])) continue;  // optional header
      if (row.size() != 2) throw Error(ErrorCode::SchemaMismatch, "adjacency.csv row " + std::to_string(r + 1));
      const int i = static_cast<int>(io::parse_double(row[0], "adjacency.csv"));
      const int j = static_cast<int>(io::parse_double(row[1], "adjacency.csv"));
      if (i < 0 || j < 0 || i >= n || j >= n) {
        throw Error(ErrorCode::DanglingReference, "adjacency.csv edge " + std::to_string(i) + "," + std::to_string(j));
      }
      if (i == j) throw Error(ErrorCode::SchemaMismatch, "adjacency.csv self-loop at " + std::to_string(i));
      ds.adjacency.connect(i, j);
    }
  }

  for (Modality m : kAggregatedModalities) {
    const std::string file = std::string(name_of(m)) + ".csv";
    auto table = io::read_table(root / file, n);
    require_finite(table.second, file);
    auto& t = ds.table(m);
    t.modality = m;
    t.columns = std::move(table.first);
    t.matrix = std::move(table.second);
    if (is_count_modality(m)) {
      for (Eigen::Index idx = 0; idx < t.matrix.size(); ++idx) {
        const double v = t.matrix.data()[idx];
        if (v < 0 || v != std::floor(v)) throw Error(ErrorCode::SchemaMismatch, file + " must hold nonnegative integer counts");
      }
    }
  }

  // street view
  {
    std::vector<std::vector<std::vector<double>>> per_region(n);
    std::istringstream in(io::read_file(root / "streetview.jsonl"));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (io::is_blank(line)) continue;
      int region = 0;
      std::vector<double> feat;
      try {
        const json j = json::parse(line);
        region = j.at("region").get<int>();
        feat = j.at("feat").get<std::vector<double>>();
      } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, "streetview.jsonl line " + std::to_string(line_no) + ": " + e.what());
      }
      if (region < 0 || region >= n) {
        throw Error(ErrorCode::DanglingReference, "streetview.jsonl line " + std::to_string(line_no) +
                                                      " references region " + std::to_string(region));
      }
      if (static_cast<int>(feat.size()) != ds.d_raw_sv) {
        throw Error(ErrorCode::SchemaMismatch, "streetview.jsonl line " + std::to_string(line_no) + " has width " +
                                                   std::to_string(feat.size()));
      }
      for (double v : feat) {
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "streetview.jsonl line " + std::to_string(line_no));
      }
      per_region[region].push_back(std::move(feat));
    }
    ds.sv_sets.resize(n);
    for (int i = 0; i < n; ++i) {
      ds.sv_sets[i].region_id = i;
      ds.sv_sets[i].features.resize(static_cast<Eigen::Index>(per_region[i].size()), ds.d_raw_sv);
      for (std::size_t r = 0; r < per_region[i].size(); ++r) {
        for (int c = 0; c < ds.d_raw_sv; ++c) ds.sv_sets[i].features(r, c) = per_region[i][r][c];
      }
    }
  }

  {
    auto table = io::read_table(root / "targets.csv", n);
    require_finite(table.second, "targets.csv");
    if (table.second.cols() != k) {
      throw Error(ErrorCode::SchemaMismatch, "targets.csv has " + std::to_string(table.second.cols()) +
                                                 " columns, manifest says " + std::to_string(k));
    }
    ds.task_names = std::move(table.first);
    ds.targets = std::move(table.second);
  }

  const auto report = validate_dataset(ds);
  if (!report.ok()) {
    const auto& f = report.findings.front();
    throw Error(ErrorCode::SchemaMismatch, std::string(to_string(f.kind)) + " at " + f.location);
  }
  return ds;
}

void write_dataset(const UrbanDataset& ds, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + root.string() + ": " + ec.message());

  {
    std::string out;
    for (const auto& r : ds.regions) {
      out += "{\"id\":" + std::to_string(r.id) + ",\"centroid\":[" + io::format_double(r.x) + "," +
             io::format_double(r.y) + "]}\n";
    }
    io::write_file(root / "regions.jsonl", out);
  }
  {
    std::string out;
    for (const auto& [i, j] : ds.adjacency.edges()) out += std::to_string(i) + "," + std::to_string(j) + "\n";
    io::write_file(root / "adjacency.csv", out);
  }
  for (Modality m : kAggregatedModalities) {
    const auto& t = ds.table(m);
    io::write_table(root / (std::string(name_of(m)) + ".csv"), t.columns, t.matrix);
  }
  {
    std::string out;
    for (const auto& set : ds.sv_sets) {
      for (Eigen::Index r = 0; r < set.features.rows(); ++r) {
        out += "{\"region\":" + std::to_string(set.region_id) + ",\"feat\":[";
        for (Eigen::Index c = 0; c < set.features.cols(); ++c) {
          if (c) out += ',';
          out += io::format_double(set.features(r, c));
        }
        out += "]}\n";
      }
    }
    io::write_file(root / "streetview.jsonl", out);
  }
  io::write_table(root / "targets.csv", ds.task_names, ds.targets);

  json manifest = {{"n_regions", ds.n_regions()}, {"k_tasks", ds.k_tasks()}, {"d_raw_sv", ds.d_raw_sv}, {"version", 1}};
  io::write_file(root / "manifest.json", manifest.dump(2) + "\n");
}

std::string dataset_hash(const fs::path& root) {
  std::uint64_t h = fnv1a("");
  for (const char* f : {"manifest.json", "regions.jsonl", "adjacency.csv", "poi.csv", "taxi.csv", "landuse.csv",
                        "road.csv", "remote.csv", "streetview.jsonl", "targets.csv"}) {
    const fs::path p = root / f;
    if (!fs::exists(p)) continue;
    h = fnv1a(f, h);
    h = fnv1a(io::read_file(p), h);
  }
  return hex64(h);
}

// -- synthetic cities -------------------------------------------------------

void SynthSpec::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidSpec, msg); };
  if (grid_rows <= 0 || grid_cols <= 0) fail("grid shape must be positive");
  if (grid_rows * grid_cols != n_regions) fail("rows*cols must equal n_regions");
  if (n_regions < 2) fail("need at least two regions");
  if (n_poi <= 0 || n_landuse <= 0 || n_road <= 0 || d_remote <= 0 || d_raw_sv <= 0 || latent_dim <= 0) {
    fail("category counts and widths must be positive");
  }
  if (images_min < 0 || images_min > images_max) fail("images_per_region must satisfy 0 <= min <= max");
  if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be a finite nonnegative number");
}

namespace {

std::vector<std::string> numbered(const std::string& prefix, int count) {
  std::vector<std::string> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Nonnegative loading matrix (latent_dim x width) with a few dominant entries
// per column so categories are type-specific.
Matrix loading_matrix(int latent_dim, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix a(latent_dim, width);
  for (int c = 0; c < width; ++c) {
    for (int k = 0; k < latent_dim; ++k) {
      const double v = u(rng);
      a(k, c) = v * v * v;
    }
    a(c % latent_dim, c) += 1.0;
  }
  return a;
}

double poisson(double rate, std::mt19937_64& rng) {
  std::poisson_distribution<int> d(std::max(rate, 1e-9));
  return static_cast<double>(d(rng));
}

}  // namespace

SyntheticCity generate_synthetic_city_with_latents(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int n = spec.n_regions;
  const int dim = spec.latent_dim;
  SyntheticCity city;
  UrbanDataset& ds = city.dataset;

  ds.regions.resize(n);
  for (int r = 0; r < spec.grid_rows; ++r) {
    for (int c = 0; c < spec.grid_cols; ++c) {
      const int id = r * spec.grid_cols + c;
      auto& reg = ds.regions[id];
      reg.id = id;
      reg.x = c + 0.5;
      reg.y = r + 0.5;
      reg.boundary = {{c, r}, {c + 1.0, r}, {c + 1.0, r + 1.0}, {c, r + 1.0}};
    }
  }
  ds.adjacency = Adjacency(n);
  for (int r = 0; r < spec.grid_rows; ++r) {
    for (int c = 0; c < spec.grid_cols; ++c) {
      const int id = r * spec.grid_cols + c;
      if (c + 1 < spec.grid_cols) ds.adjacency.connect(id, id + 1);
      if (r + 1 < spec.grid_rows) ds.adjacency.connect(id, id + spec.grid_cols);
    }
  }

  // Latent types: one smooth Gaussian bump field per type plus small jitter.
  const double extent = std::max(spec.grid_rows, spec.grid_cols);
  Matrix latents(n, dim);
  for (int k = 0; k < dim; ++k) {
    const double cx = u01(rng) * spec.grid_cols;
    const double cy = u01(rng) * spec.grid_rows;
    const double width = (0.25 + 0.35 * u01(rng)) * extent;
    for (int i = 0; i < n; ++i) {
      const double dx = ds.regions[i].x - cx;
      const double dy = ds.regions[i].y - cy;
      latents(i, k) = std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < dim; ++k) latents(i, k) = std::max(0.0, latents(i, k) + 0.05 * gauss(rng));
  }

  auto count_table = [&](Modality m, int width, double scale, double base) {
    const Matrix load = loading_matrix(dim, width, rng);
    const Matrix rate = latents * load;
    auto& t = ds.table(m);
    t.modality = m;
    t.columns = numbered(std::string(name_of(m)) + "_", width);
    t.matrix.resize(n, width);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < width; ++c) t.matrix(i, c) = poisson(scale * rate(i, c) + base, rng);
    }
  };
  count_table(Modality::Poi, spec.n_poi, 20.0, 0.5);
  count_table(Modality::LandUse, spec.n_landuse, 5.0, 0.2);
  count_table(Modality::Road, spec.n_road, 8.0, 0.5);

  {
    // trips arriving at i from j: gravity decay times type affinity
    auto& t = ds.table(Modality::Taxi);
    t.modality = Modality::Taxi;
    t.columns = numbered("from_", n);
    t.matrix.resize(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double dx = ds.regions[i].x - ds.regions[j].x;
        const double dy = ds.regions[i].y - ds.regions[j].y;
        const double affinity = 0.2 + latents.row(i).dot(latents.row(j));
        t.matrix(i, j) = poisson(30.0 * std::exp(-std::sqrt(dx * dx + dy * dy) / 2.0) * affinity, rng);
      }
    }
  }
  {
    auto& t = ds.table(Modality::Remote);
    t.modality = Modality::Remote;
    t.columns = numbered("rs_", spec.d_remote);
    Matrix load(dim, spec.d_remote);
    for (Eigen::Index idx = 0; idx < load.size(); ++idx) load.data()[idx] = gauss(rng);
    t.matrix = latents * load;
    for (Eigen::Index idx = 0; idx < t.matrix.size(); ++idx) t.matrix.data()[idx] += 0.1 * gauss(rng);
  }

  ds.d_raw_sv = spec.d_raw_sv;
  {
    Matrix load(dim, spec.d_raw_sv);
    for (Eigen::Index idx = 0; idx < load.size(); ++idx) load.data()[idx] = gauss(rng);
    std::uniform_int_distribution<int> count(spec.images_min, spec.images_max);
    ds.sv_sets.resize(n);
    for (int i = 0; i < n; ++i) {
      auto& set = ds.sv_sets[i];
      set.region_id = i;
      const int m = count(rng);
      set.features.resize(m, spec.d_raw_sv);
      const RowVector mean_row = latents.row(i) * load;
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < spec.d_raw_sv; ++c) set.features(r, c) = mean_row(c) + 0.5 * gauss(rng);
      }
    }
  }

  {
    constexpr int kTasks = 3;
    ds.task_names = {"carbon", "gdp", "population"};
    Matrix coef(dim, kTasks);
    for (int k = 0; k < dim; ++k) {
      for (int task = 0; task < kTasks; ++task) coef(k, task) = 1.0 + std::cos(1.3 * (k + 1) * (task + 1));
    }
    ds.targets = latents * coef;
    if (spec.noise_sigma > 0) {
      std::normal_distribution<double> noise(0.0, spec.noise_sigma);
      for (Eigen::Index idx = 0; idx < ds.targets.size(); ++idx) ds.targets.data()[idx] += noise(rng);
    }
  }

  city.latents = std::move(latents);
  return city;
}

UrbanDataset generate_synthetic_city(const SynthSpec& spec) {
  return generate_synthetic_city_with_latents(spec).dataset;
}

SynthSpec synth_spec_from_json(const std::string& json_text) {
  SynthSpec spec;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, e.what());
  }
  try {
    spec.n_regions = j.value("n_regions", spec.n_regions);
    if (j.contains("grid_shape")) {
      spec.grid_rows = j["grid_shape"].at(0).get<int>();
      spec.grid_cols = j["grid_shape"].at(1).get<int>();
      if (!j.contains("n_regions")) spec.n_regions = spec.grid_rows * spec.grid_cols;
    }
    if (j.contains("category_counts")) {
      const auto& c = j["category_counts"];
      spec.n_poi = c.value("poi", spec.n_poi);
      spec.n_landuse = c.value("landuse", spec.n_landuse);
      spec.n_road = c.value("road", spec.n_road);
      spec.d_remote = c.value("remote", spec.d_remote);
      spec.d_raw_sv = c.value("streetview", spec.d_raw_sv);
    }
    spec.d_raw_sv = j.value("d_raw_sv", spec.d_raw_sv);
    spec.latent_dim = j.value("latent_dim", spec.latent_dim);
    if (j.contains("images_per_region")) {
      spec.images_min = j["images_per_region"].at(0).get<int>();
      spec.images_max = j["images_per_region"].at(1).get<int>();
    }
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.seed = j.value("seed", spec.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, e.what());
  }
  spec.validate();
  return spec;
}

std::string synth_spec_to_json(const SynthSpec& spec) {
  json j = {{"n_regions", spec.n_regions},
            {"grid_shape", {spec.grid_rows, spec.grid_cols}},
            {"category_counts",
             {{"poi", spec.n_poi}, {"landuse", spec.n_landuse}, {"road", spec.n_road}, {"remote", spec.d_remote},
              {"streetview", spec.d_raw_sv}}},
            {"latent_dim", spec.latent_dim},
            {"images_per_region", {spec.images_min, spec.images_max}},
            {"noise_sigma", spec.noise_sigma},
            {"seed", spec.seed}};
  return j.dump(2);
}

}  // namespace mtgrr
