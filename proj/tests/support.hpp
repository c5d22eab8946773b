#pragma once

// Test helpers: random fixtures, finite-difference gradient checks, scratch
// directories.

#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mtgrr/autograd.hpp"
#include "mtgrr/common.hpp"
#include "mtgrr/nn.hpp"

namespace mtgrr::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

inline ad::Tensor random_param(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  return ad::Tensor::parameter(random_matrix(rows, cols, rng, scale));
}

/// Pass rule shared by every gradient test: relative error within `rel_tol`,
/// or both values negligibly small.
inline bool gradients_agree(double analytic, double numeric, double rel_tol = 1e-3, double abs_floor = 1e-7) {
  const double diff = std::abs(analytic - numeric);
  return diff <= rel_tol * std::max(std::abs(analytic), std::abs(numeric)) || diff < abs_floor;
}

struct GradSample {
  std::string name;
  Eigen::Index index = 0;
  double analytic = 0;
  double numeric = 0;
};

/// Central differences of `loss` w.r.t. `count` entries drawn uniformly from
/// the given parameters, compared against one backward pass.
inline std::vector<GradSample> sample_gradients(const std::function<ad::Tensor()>& loss,
                                                std::vector<std::pair<std::string, ad::Tensor>> params, int count,
                                                std::uint64_t seed, double h = 1e-4) {
  for (auto& [name, p] : params) p.zero_grad();
  loss().backward();
  std::vector<Matrix> analytic;
  for (auto& [name, p] : params) analytic.push_back(p.grad());

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
  std::vector<GradSample> out;
  for (int s = 0; s < count; ++s) {
    const std::size_t k = pick_param(rng);
    auto& p = params[k].second;
    std::uniform_int_distribution<Eigen::Index> pick_entry(0, p.value().size() - 1);
    const Eigen::Index idx = pick_entry(rng);
    double& x = p.mutable_value().data()[idx];
    const double saved = x;
    x = saved + h;
    const double up = loss().item();
    x = saved - h;
    const double down = loss().item();
    x = saved;
    out.push_back({params[k].first, idx, analytic[k].data()[idx], (up - down) / (2 * h)});
  }
  return out;
}

inline void expect_gradients(const std::vector<GradSample>& samples, double rel_tol = 1e-3) {
  for (const auto& s : samples) {
    EXPECT_TRUE(gradients_agree(s.analytic, s.numeric, rel_tol))
        << s.name << "[" << s.index << "] analytic " << s.analytic << " numeric " << s.numeric;
  }
}

/// Unique scratch directory under the system temp dir, removed on scope exit.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mtgrr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace mtgrr::testing
