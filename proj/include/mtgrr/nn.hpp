#pragma once

#include <functional>
#include <random>
#include <string>

#include "mtgrr/autograd.hpp"

namespace mtgrr::nn {

using Rng = std::mt19937_64;
using ParamVisitor = std::function<void(const std::string& name, ad::Tensor& param)>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) parameter of the given shape.
ad::Tensor fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng);
/// Uniform(+-gain * sqrt(3 / fan_in)); gain sqrt(2) ahead of a ReLU.
ad::Tensor kaiming_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, double gain, Rng& rng);
inline constexpr double kReluGain = 1.4142135623730951;
ad::Tensor zeros(Eigen::Index rows, Eigen::Index cols);
ad::Tensor normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

/// Row-vector affine map: y = x W + b, W is in x out.
struct Linear {
  ad::Tensor weight;
  ad::Tensor bias;  // 1 x out; undefined when the layer has no bias

  static Linear init(Eigen::Index in, Eigen::Index out, Rng& rng, bool with_bias = true);
  ad::Tensor operator()(const ad::Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& f);
};

/// Two-layer position-wise network: second(act(first(x))).
struct FeedForward {
  Linear first;
  Linear second;
  ad::Activation activation = ad::Activation::Gelu;

  static FeedForward init(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng);
  ad::Tensor operator()(const ad::Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& f);
};

}  // namespace mtgrr::nn
