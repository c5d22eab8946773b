#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtgrr/common.hpp"
#include "mtgrr/trainer.hpp"

namespace mtgrr::downstream {

struct RidgeModel {
  Vector weights;      // original feature space
  Vector std_weights;  // standardized feature space
  double bias = 0.0;
  Vector feature_mean;
  Vector feature_scale;  // population std; 0 for constant columns
  double lambda = 1.0;

  Vector predict(const Matrix& x) const;
};

/// Closed-form ridge on internally standardized columns. lambda == 0 is
/// accepted only with allow_zero_lambda and throws SingularSystem when the
/// Gram matrix is rank deficient.
RidgeModel ridge_fit(const Matrix& x, const Vector& y, double lambda = 1.0, bool allow_zero_lambda = false);

struct Metrics {
  double mae = 0;
  double rmse = 0;
  double r2 = 0;  // NaN when zero_variance
  bool zero_variance = false;
};

Metrics evaluate_metrics(const Vector& y_true, const Vector& y_pred);

struct Summary {
  double mean = 0;
  double std = 0;  // sample std across folds, 0 for a single fold
};

struct TaskReport {
  std::string name;
  std::vector<Metrics> folds;
  Summary mae;
  Summary rmse;
  Summary r2;
  /// Scored regions with held-out predictions, in region order.
  std::vector<int> regions;
  Vector truth;
  Vector predicted;
};

struct MetricsReport {
  std::vector<TaskReport> tasks;
  nlohmann::json config = nlohmann::json::object();

  double mean_r2() const;
};

struct CvConfig {
  int folds = 5;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  /// Single 60/20/20 split instead of k-fold; metrics are on the test part.
  bool split = false;
};

/// Fold id per row: a seeded shuffle cut into `folds` contiguous chunks.
std::vector<int> fold_assignment(int n, int folds, std::uint64_t seed);

MetricsReport cross_validate(const Matrix& embeddings, const Matrix& targets, const std::vector<std::string>& task_names,
                             const CvConfig& cfg = {});
/// Same, with explicit fold ids in [0, folds).
MetricsReport cross_validate_with_folds(const Matrix& embeddings, const Matrix& targets,
                                        const std::vector<std::string>& task_names, const std::vector<int>& fold_ids,
                                        const CvConfig& cfg = {});

nlohmann::json metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);

/// One row per labelled report; columns are MAE/RMSE/R2 for each task.
std::string metrics_markdown(const std::vector<std::pair<std::string, const MetricsReport*>>& rows);

/// Writes metrics.json, metrics.md, scatter_<task>.csv and losses.csv.
std::vector<std::filesystem::path> emit_report(const MetricsReport& report, const TrainHistory* history,
                                               const std::filesystem::path& out_dir,
                                               const std::string& label = "MTGRR");

/// Reads a train_log.csv back into a history (seconds are not stored).
TrainHistory read_train_log(const std::filesystem::path& path);

}  // namespace mtgrr::downstream
