#include <gtest/gtest.h>

#include <fstream>

#include "mtgrr/dataset.hpp"
#include "mtgrr/downstream.hpp"
#include "support.hpp"

namespace mtgrr {
namespace {

using testing::ScratchDir;

SynthSpec small_spec(int rows, int cols, std::uint64_t seed = 0) {
  SynthSpec s;
  s.grid_rows = rows;
  s.grid_cols = cols;
  s.n_regions = rows * cols;
  s.d_raw_sv = 16;
  s.d_remote = 8;
  s.seed = seed;
  return s;
}

void expect_same(const UrbanDataset& a, const UrbanDataset& b) {
  ASSERT_EQ(a.n_regions(), b.n_regions());
  for (int i = 0; i < a.n_regions(); ++i) {
    EXPECT_EQ(a.regions[i].id, b.regions[i].id);
    EXPECT_EQ(a.regions[i].x, b.regions[i].x);
    EXPECT_EQ(a.regions[i].y, b.regions[i].y);
  }
  EXPECT_TRUE(a.adjacency == b.adjacency);
  for (int t = 0; t < kNumAggregated; ++t) {
    EXPECT_EQ(a.tables[t].modality, b.tables[t].modality);
    EXPECT_EQ(a.tables[t].columns, b.tables[t].columns);
    EXPECT_TRUE(a.tables[t].matrix == b.tables[t].matrix);
  }
  ASSERT_EQ(a.sv_sets.size(), b.sv_sets.size());
  for (std::size_t i = 0; i < a.sv_sets.size(); ++i) {
    EXPECT_EQ(a.sv_sets[i].region_id, b.sv_sets[i].region_id);
    EXPECT_TRUE(a.sv_sets[i].features == b.sv_sets[i].features);
  }
  EXPECT_TRUE(a.targets == b.targets);
  EXPECT_EQ(a.task_names, b.task_names);
  EXPECT_EQ(a.d_raw_sv, b.d_raw_sv);
}

TEST(Synthetic, TwoByTwoGridHasFourAdjacentPairs) {
  const auto ds = generate_synthetic_city(small_spec(2, 2));
  EXPECT_EQ(ds.adjacency.edges().size(), 4u);
  int directed = 0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) directed += ds.adjacency(i, j) ? 1 : 0;
  }
  EXPECT_EQ(directed, 8);
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  expect_same(generate_synthetic_city(small_spec(3, 4, 11)), generate_synthetic_city(small_spec(3, 4, 11)));
}

TEST(Synthetic, DifferentSeedsDiffer) {
  EXPECT_FALSE(generate_synthetic_city(small_spec(3, 3, 1)).targets ==
               generate_synthetic_city(small_spec(3, 3, 2)).targets);
}

TEST(Synthetic, OutputValidatesAndHasThreeTasks) {
  const auto ds = generate_synthetic_city(small_spec(4, 4, 3));
  EXPECT_TRUE(validate_dataset(ds).ok());
  EXPECT_EQ(ds.k_tasks(), 3);
  EXPECT_EQ(ds.task_names, (std::vector<std::string>{"carbon", "gdp", "population"}));
  for (const auto& set : ds.sv_sets) {
    EXPECT_GE(set.features.rows(), 3);
    EXPECT_LE(set.features.rows(), 10);
  }
}

TEST(Synthetic, NoiselessTargetsLieInLatentSpan) {
  auto spec = small_spec(6, 6, 5);
  spec.noise_sigma = 0.0;
  const auto city = generate_synthetic_city_with_latents(spec);
  for (int task = 0; task < city.dataset.k_tasks(); ++task) {
    const Vector y = city.dataset.targets.col(task);
    const auto model = downstream::ridge_fit(city.latents, y, 0.0, true);
    const auto m = downstream::evaluate_metrics(y, model.predict(city.latents));
    EXPECT_NEAR(m.r2, 1.0, 1e-10) << task;
  }
}

TEST(Synthetic, InvalidSpecThrows) {
  auto s = small_spec(2, 3);
  s.n_regions = 5;
  EXPECT_THROW(generate_synthetic_city(s), Error);
  s = small_spec(2, 2);
  s.images_min = 5;
  s.images_max = 2;
  EXPECT_THROW(generate_synthetic_city(s), Error);
  s = small_spec(2, 2);
  s.noise_sigma = -1;
  EXPECT_THROW(generate_synthetic_city(s), Error);
}

TEST(DatasetIo, WriteThenLoadIsIdentity) {
  ScratchDir dir("rt");
  const auto ds = generate_synthetic_city(small_spec(3, 3, 7));
  write_dataset(ds, dir.path());
  expect_same(ds, load_dataset(dir.path()));
}

TEST(DatasetIo, FourRegionFixtureWithOneTask) {
  ScratchDir dir("fixture");
  auto ds = generate_synthetic_city(small_spec(2, 2, 1));
  ds.targets = ds.targets.leftCols(1).eval();
  ds.task_names = {"carbon"};
  write_dataset(ds, dir.path());
  const auto back = load_dataset(dir.path());
  EXPECT_EQ(back.n_regions(), 4);
  EXPECT_EQ(back.k_tasks(), 1);
}

TEST(DatasetIo, MissingTaxiFile) {
  ScratchDir dir("missing");
  write_dataset(generate_synthetic_city(small_spec(2, 2)), dir.path());
  std::filesystem::remove(dir / "taxi.csv");
  try {
    load_dataset(dir.path());
    FAIL() << "expected MissingFile";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFile);
  }
}

ErrorCode load_error(const std::filesystem::path& root) {
  try {
    load_dataset(root);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;  // sentinel: nothing thrown
}

void rewrite(const std::filesystem::path& file, const std::function<std::string(std::string)>& edit) {
  std::ifstream in(file);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::ofstream(file) << edit(text);
}

TEST(DatasetIo, CorruptedFilesAreRejected) {
  const auto ds = generate_synthetic_city(small_spec(2, 2, 4));
  {
    ScratchDir dir("cols");
    write_dataset(ds, dir.path());
    rewrite(dir / "poi.csv", [](std::string t) {
      const auto nl = t.find('\n');
      return t.substr(0, nl) + ",extra" + t.substr(nl);
    });
    EXPECT_EQ(load_error(dir.path()), ErrorCode::SchemaMismatch);
  }
  {
    ScratchDir dir("dangling");
    write_dataset(ds, dir.path());
    std::ofstream(dir / "streetview.jsonl", std::ios::app)
        << "{\"region\":99,\"feat\":[0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]}\n";
    EXPECT_EQ(load_error(dir.path()), ErrorCode::DanglingReference);
  }
  {
    ScratchDir dir("nan");
    write_dataset(ds, dir.path());
    rewrite(dir / "remote.csv", [](std::string t) {
      const auto nl = t.find('\n');
      const auto comma = t.find(',', nl);
      return t.substr(0, nl + 1) + "nan" + t.substr(comma);
    });
    EXPECT_EQ(load_error(dir.path()), ErrorCode::NonFiniteValue);
  }
}

TEST(Validation, ValidDatasetHasNoFindings) {
  EXPECT_TRUE(validate_dataset(generate_synthetic_city(small_spec(3, 3))).ok());
}

TEST(Validation, AsymmetricAdjacency) {
  auto ds = generate_synthetic_city(small_spec(3, 3));
  ds.adjacency.set(0, 8, true);
  const auto report = validate_dataset(ds);
  EXPECT_EQ(report.findings.size(), 1u);
  EXPECT_EQ(report.count(FindingKind::AsymmetricAdjacency), 1u);
}

TEST(Validation, NegativePoiCount) {
  auto ds = generate_synthetic_city(small_spec(3, 3));
  ds.table(Modality::Poi).matrix(2, 1) = -1;
  const auto report = validate_dataset(ds);
  EXPECT_EQ(report.findings.size(), 1u);
  EXPECT_EQ(report.count(FindingKind::NegativeCount), 1u);
}

TEST(Validation, ReportsEveryViolation) {
  auto ds = generate_synthetic_city(small_spec(3, 3));
  ds.adjacency.set(4, 4, true);
  ds.table(Modality::Road).matrix(0, 0) = 0.5;
  ds.table(Modality::Remote).matrix(1, 1) = std::numeric_limits<double>::infinity();
  ds.sv_sets[0].features = Matrix::Zero(2, 3);
  const auto report = validate_dataset(ds);
  EXPECT_EQ(report.count(FindingKind::SelfLoop), 1u);
  EXPECT_EQ(report.count(FindingKind::NonIntegerCount), 1u);
  EXPECT_EQ(report.count(FindingKind::NonFiniteValue), 1u);
  EXPECT_EQ(report.count(FindingKind::StreetViewWidthMismatch), 1u);
}

TEST(Validation, RandomCorruptionNeverPassesSilently) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    auto ds = generate_synthetic_city(small_spec(2, 3, trial));
    const auto m = kAggregatedModalities[rng() % kNumAggregated];
    auto& mat = ds.table(m).matrix;
    const auto r = static_cast<Eigen::Index>(rng() % mat.rows());
    const auto c = static_cast<Eigen::Index>(rng() % mat.cols());
    mat(r, c) = (trial % 2 == 0) ? std::numeric_limits<double>::quiet_NaN() : (is_count_modality(m) ? -3.0 : NAN);
    EXPECT_FALSE(validate_dataset(ds).ok()) << trial;
  }
}

TEST(Fingerprint, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

}  // namespace
}  // namespace mtgrr
