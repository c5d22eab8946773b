#include "mtgrr/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "text_io.hpp"

namespace mtgrr::downstream {

namespace fs = std::filesystem;
using nlohmann::json;

Vector RidgeModel::predict(const Matrix& x) const {
  return (x * weights).array() + bias;
}

RidgeModel ridge_fit(const Matrix& x, const Vector& y, double lambda, bool allow_zero_lambda) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n < 2) throw Error(ErrorCode::TooFewRegions, "ridge_fit needs at least two rows");
  if (y.size() != n) throw Error(ErrorCode::InvalidArgument, "ridge_fit: target length differs from row count");
  if (!(lambda >= 0) || (lambda == 0 && !allow_zero_lambda)) {
    throw Error(ErrorCode::InvalidArgument, "ridge_fit: lambda must be positive");
  }
  RidgeModel m;
  m.lambda = lambda;
  m.feature_mean = x.colwise().mean().transpose();
  m.feature_scale.resize(d);
  Matrix z(n, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const auto centered = x.col(c).array() - m.feature_mean(c);
    const double s = std::sqrt(centered.square().mean());
    m.feature_scale(c) = s > 0 ? s : 0.0;
    z.col(c) = s > 0 ? Vector(centered / s) : Vector::Zero(n);
  }
  const double y_mean = y.mean();
  const Vector yc = y.array() - y_mean;
  Matrix gram = z.transpose() * z;
  gram.diagonal().array() += lambda;
  const Vector rhs = z.transpose() * yc;
  if (lambda == 0) {
    Eigen::FullPivLU<Matrix> lu(gram);
    if (!lu.isInvertible()) throw Error(ErrorCode::SingularSystem, "ridge_fit: singular Gram matrix with lambda = 0");
    m.std_weights = lu.solve(rhs);
  } else {
    m.std_weights = gram.llt().solve(rhs);
  }
  m.weights.resize(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    m.weights(c) = m.feature_scale(c) > 0 ? m.std_weights(c) / m.feature_scale(c) : 0.0;
  }
  m.bias = y_mean - m.feature_mean.dot(m.weights);
  return m;
}

Metrics evaluate_metrics(const Vector& y_true, const Vector& y_pred) {
  if (y_true.size() != y_pred.size()) throw Error(ErrorCode::InvalidArgument, "metrics: length mismatch");
  if (y_true.size() < 2) throw Error(ErrorCode::TooFewRegions, "metrics need at least two values");
  const Eigen::ArrayXd e = (y_true - y_pred).array();
  Metrics m;
  m.mae = e.abs().mean();
  m.rmse = std::sqrt(e.square().mean());
  const double ss_tot = (y_true.array() - y_true.mean()).square().sum();
  if (ss_tot > 0) {
    m.r2 = 1.0 - e.square().sum() / ss_tot;
  } else {
    m.r2 = std::numeric_limits<double>::quiet_NaN();
    m.zero_variance = true;
  }
  return m;
}

double MetricsReport::mean_r2() const {
  if (tasks.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (const auto& t : tasks) s += t.r2.mean;
  return s / static_cast<double>(tasks.size());
}

std::vector<int> fold_assignment(int n, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::InvalidArgument, "folds must be >= 2");
  if (n < folds) throw Error(ErrorCode::TooFewRegions, std::to_string(n) + " regions for " + std::to_string(folds) + " folds");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> ids(n);
  for (int f = 0; f < folds; ++f) {
    const int lo = static_cast<int>(static_cast<long>(f) * n / folds);
    const int hi = static_cast<int>(static_cast<long>(f + 1) * n / folds);
    for (int p = lo; p < hi; ++p) ids[order[p]] = f;
  }
  return ids;
}

namespace {

Summary summarize(const std::vector<double>& values) {
  Summary s;
  std::size_t count = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    s.mean += v;
    ++count;
  }
  if (count == 0) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  s.mean /= static_cast<double>(count);
  if (count > 1) {
    double ss = 0;
    for (double v : values) {
      if (!std::isnan(v)) ss += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(ss / static_cast<double>(count - 1));
  }
  return s;
}

Matrix take_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  return out;
}

void check_inputs(const Matrix& embeddings, const Matrix& targets, const std::vector<std::string>& names) {
  if (embeddings.rows() != targets.rows()) {
    throw Error(ErrorCode::InconsistentN, "embeddings have " + std::to_string(embeddings.rows()) + " rows, targets " +
                                              std::to_string(targets.rows()));
  }
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != targets.cols()) {
    throw Error(ErrorCode::InvalidArgument, "one task name per target column is required");
  }
}

std::string task_name(const std::vector<std::string>& names, Eigen::Index k) {
  return names.empty() ? "task" + std::to_string(k) : names[static_cast<std::size_t>(k)];
}

json echo_config(const CvConfig& cfg, int folds) {
  return json{{"folds", folds}, {"lambda", cfg.lambda}, {"seed", cfg.seed}, {"protocol", cfg.split ? "split_60_20_20" : "kfold"}};
}

MetricsReport split_protocol(const Matrix& embeddings, const Matrix& targets, const std::vector<std::string>& names,
                             const CvConfig& cfg) {
  const int n = static_cast<int>(embeddings.rows());
  if (n < 5) throw Error(ErrorCode::TooFewRegions, "a 60/20/20 split needs at least five regions");
  // Fold ids 0..4 in equal fifths: three train, one validation, one test.
  const std::vector<int> fifth = fold_assignment(n, 5, cfg.seed);
  std::vector<int> train_rows, val_rows, test_rows;
  for (int i = 0; i < n; ++i) {
    (fifth[i] < 3 ? train_rows : fifth[i] == 3 ? val_rows : test_rows).push_back(i);
  }
  MetricsReport report;
  report.config = echo_config(cfg, 1);
  const Matrix x_train = take_rows(embeddings, train_rows);
  const Matrix x_test = take_rows(embeddings, test_rows);
  for (Eigen::Index k = 0; k < targets.cols(); ++k) {
    const Vector y = targets.col(k);
    Vector y_train(train_rows.size()), y_test(test_rows.size());
    for (std::size_t r = 0; r < train_rows.size(); ++r) y_train(r) = y(train_rows[r]);
    for (std::size_t r = 0; r < test_rows.size(); ++r) y_test(r) = y(test_rows[r]);
    const Vector pred = ridge_fit(x_train, y_train, cfg.lambda).predict(x_test);
    TaskReport t;
    t.name = task_name(names, k);
    t.folds.push_back(evaluate_metrics(y_test, pred));
    t.mae = {t.folds[0].mae, 0};
    t.rmse = {t.folds[0].rmse, 0};
    t.r2 = {t.folds[0].r2, 0};
    std::vector<std::size_t> order(test_rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return test_rows[a] < test_rows[b]; });
    t.truth.resize(test_rows.size());
    t.predicted.resize(test_rows.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      t.regions.push_back(test_rows[order[r]]);
      t.truth(r) = y_test(order[r]);
      t.predicted(r) = pred(order[r]);
    }
    report.tasks.push_back(std::move(t));
  }
  return report;
}

}  // namespace

MetricsReport cross_validate_with_folds(const Matrix& embeddings, const Matrix& targets,
                                        const std::vector<std::string>& task_names, const std::vector<int>& fold_ids,
                                        const CvConfig& cfg) {
  check_inputs(embeddings, targets, task_names);
  const int n = static_cast<int>(embeddings.rows());
  if (static_cast<int>(fold_ids.size()) != n) throw Error(ErrorCode::InvalidArgument, "one fold id per row is required");
  const int folds = fold_ids.empty() ? 0 : *std::max_element(fold_ids.begin(), fold_ids.end()) + 1;
  if (folds < 2) throw Error(ErrorCode::InvalidArgument, "folds must be >= 2");

  std::vector<std::vector<int>> test_rows(folds), train_rows(folds);
  for (int i = 0; i < n; ++i) {
    if (fold_ids[i] < 0) throw Error(ErrorCode::InvalidArgument, "negative fold id");
    for (int f = 0; f < folds; ++f) (fold_ids[i] == f ? test_rows : train_rows)[f].push_back(i);
  }
  for (int f = 0; f < folds; ++f) {
    if (test_rows[f].size() < 2 || train_rows[f].size() < 2) {
      throw Error(ErrorCode::TooFewRegions, "fold " + std::to_string(f) + " has fewer than two rows on one side");
    }
  }

  MetricsReport report;
  report.config = echo_config(cfg, folds);
  for (Eigen::Index k = 0; k < targets.cols(); ++k) {
    TaskReport t;
    t.name = task_name(task_names, k);
    t.truth = targets.col(k);
    t.predicted = Vector::Zero(n);
    std::vector<double> mae, rmse, r2;
    for (int f = 0; f < folds; ++f) {
      const Matrix x_train = take_rows(embeddings, train_rows[f]);
      Vector y_train(train_rows[f].size());
      for (std::size_t r = 0; r < train_rows[f].size(); ++r) y_train(r) = t.truth(train_rows[f][r]);
      const RidgeModel model = ridge_fit(x_train, y_train, cfg.lambda);
      const Vector pred = model.predict(take_rows(embeddings, test_rows[f]));
      Vector y_test(test_rows[f].size());
      for (std::size_t r = 0; r < test_rows[f].size(); ++r) {
        y_test(r) = t.truth(test_rows[f][r]);
        t.predicted(test_rows[f][r]) = pred(r);
      }
      const Metrics m = evaluate_metrics(y_test, pred);
      t.folds.push_back(m);
      mae.push_back(m.mae);
      rmse.push_back(m.rmse);
      r2.push_back(m.r2);
    }
    t.mae = summarize(mae);
    t.rmse = summarize(rmse);
    t.r2 = summarize(r2);
    t.regions.resize(n);
    std::iota(t.regions.begin(), t.regions.end(), 0);
    report.tasks.push_back(std::move(t));
  }
  return report;
}

MetricsReport cross_validate(const Matrix& embeddings, const Matrix& targets, const std::vector<std::string>& task_names,
                             const CvConfig& cfg) {
  check_inputs(embeddings, targets, task_names);
  if (cfg.split) return split_protocol(embeddings, targets, task_names, cfg);
  const auto ids = fold_assignment(static_cast<int>(embeddings.rows()), cfg.folds, cfg.seed);
  return cross_validate_with_folds(embeddings, targets, task_names, ids, cfg);
}

// -- serialization -----------------------------------------------------------

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

}  // namespace

json metrics_to_json(const MetricsReport& report) {
  json tasks = json::array();
  for (const auto& t : report.tasks) {
    json folds = json::array();
    for (const auto& f : t.folds) {
      folds.push_back({{"mae", number(f.mae)}, {"rmse", number(f.rmse)}, {"r2", number(f.r2)}, {"zero_variance", f.zero_variance}});
    }
    tasks.push_back({{"name", t.name},
                     {"mae", number(t.mae.mean)},
                     {"mae_std", number(t.mae.std)},
                     {"rmse", number(t.rmse.mean)},
                     {"rmse_std", number(t.rmse.std)},
                     {"r2", number(t.r2.mean)},
                     {"r2_std", number(t.r2.std)},
                     {"folds", folds}});
  }
  return json{{"tasks", tasks}, {"config", report.config}};
}

MetricsReport metrics_from_json(const json& j) {
  MetricsReport r;
  try {
    r.config = j.at("config");
    for (const auto& t : j.at("tasks")) {
      TaskReport task;
      task.name = t.at("name").get<std::string>();
      task.mae = {number_from(t.at("mae")), number_from(t.at("mae_std"))};
      task.rmse = {number_from(t.at("rmse")), number_from(t.at("rmse_std"))};
      task.r2 = {number_from(t.at("r2")), number_from(t.at("r2_std"))};
      for (const auto& f : t.at("folds")) {
        task.folds.push_back({number_from(f.at("mae")), number_from(f.at("rmse")), number_from(f.at("r2")),
                              f.value("zero_variance", false)});
      }
      r.tasks.push_back(std::move(task));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("metrics.json: ") + e.what());
  }
  return r;
}

std::string metrics_markdown(const std::vector<std::pair<std::string, const MetricsReport*>>& rows) {
  if (rows.empty()) return {};
  const MetricsReport& first = *rows.front().second;
  std::ostringstream out;
  out << "| Model |";
  for (const auto& t : first.tasks) out << ' ' << t.name << " MAE | " << t.name << " RMSE | " << t.name << " R2 |";
  out << "\n|---|";
  for (std::size_t k = 0; k < first.tasks.size(); ++k) out << "---|---|---|";
  out << '\n';
  auto cell = [](double v) {
    if (std::isnan(v)) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  for (const auto& [label, report] : rows) {
    out << "| " << label << " |";
    for (const auto& t : report->tasks) out << ' ' << cell(t.mae.mean) << " | " << cell(t.rmse.mean) << " | " << cell(t.r2.mean) << " |";
    out << '\n';
  }
  return out.str();
}

TrainHistory read_train_log(const fs::path& path) {
  const auto rows = io::read_csv(path);
  if (rows.empty() || rows[0].size() != 5 || rows[0][0] != "epoch") {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": expected header epoch,l_agg,l_sv,l_f,l_total");
  }
  TrainHistory h;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 5) throw Error(ErrorCode::SchemaMismatch, path.string() + " row " + std::to_string(r + 1));
    EpochRecord e;
    e.epoch = static_cast<int>(io::parse_double(rows[r][0], path.string()));
    e.losses = {io::parse_double(rows[r][1], path.string()), io::parse_double(rows[r][2], path.string()),
                io::parse_double(rows[r][3], path.string()), io::parse_double(rows[r][4], path.string())};
    h.epochs.push_back(e);
  }
  return h;
}

std::vector<fs::path> emit_report(const MetricsReport& report, const TrainHistory* history, const fs::path& out_dir,
                                  const std::string& label) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  auto put = [&](const std::string& name, const std::string& content) {
    io::write_file(out_dir / name, content);
    written.push_back(out_dir / name);
  };
  put("metrics.json", metrics_to_json(report).dump(2) + "\n");
  put("metrics.md", metrics_markdown({{label, &report}}));
  for (const auto& t : report.tasks) {
    std::string csv = "region,truth,predicted\n";
    for (Eigen::Index r = 0; r < t.truth.size(); ++r) {
      csv += std::to_string(t.regions[static_cast<std::size_t>(r)]) + "," + io::format_double(t.truth(r)) + "," +
             io::format_double(t.predicted(r)) + "\n";
    }
    put("scatter_" + t.name + ".csv", csv);
  }
  const fs::path losses = out_dir / "losses.csv";
  write_train_log(history ? *history : TrainHistory{}, losses);
  written.push_back(losses);
  return written;
}

}  // namespace mtgrr::downstream
