#include "mtgrr/nn.hpp"

#include <cmath>

namespace mtgrr::nn {

ad::Tensor fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return ad::Tensor::parameter(std::move(m));
}

namespace {
ad::Tensor uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return ad::Tensor::parameter(std::move(m));
}
}  // namespace

ad::Tensor kaiming_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, double gain, Rng& rng) {
  return uniform(rows, cols, gain * std::sqrt(3.0 / static_cast<double>(std::max<Eigen::Index>(fan_in, 1))), rng);
}

ad::Tensor zeros(Eigen::Index rows, Eigen::Index cols) {
  return ad::Tensor::parameter(Matrix::Zero(rows, cols));
}

ad::Tensor normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return ad::Tensor::parameter(std::move(m));
}

Linear Linear::init(Eigen::Index in, Eigen::Index out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = fan_in_uniform(in, out, in, rng);
  if (with_bias) l.bias = fan_in_uniform(1, out, in, rng);
  return l;
}

ad::Tensor Linear::operator()(const ad::Tensor& x) const {
  ad::Tensor y = ad::matmul(x, weight);
  return bias.defined() ? ad::add_row(y, bias) : y;
}

void Linear::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".weight", weight);
  if (bias.defined()) f(prefix + ".bias", bias);
}

FeedForward FeedForward::init(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng) {
  FeedForward ff;
  ff.first = Linear::init(in, hidden, rng);
  ff.second = Linear::init(hidden, out, rng);
  return ff;
}

ad::Tensor FeedForward::operator()(const ad::Tensor& x) const {
  return second(ad::activate(first(x), activation));
}

void FeedForward::visit(const std::string& prefix, const ParamVisitor& f) {
  first.visit(prefix + ".0", f);
  second.visit(prefix + ".1", f);
}

}  // namespace mtgrr::nn
