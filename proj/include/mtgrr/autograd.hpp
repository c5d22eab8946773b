#pragma once

// Matrix-level reverse-mode automatic differentiation.
//
// A Tensor is a shared handle to a node in a dynamically built expression
// graph. Leaves created with requires_grad=true are parameters; every op
// records a backward closure only when at least one input requires a gradient,
// so pure-inference forwards build no graph. Copying a Tensor aliases the node.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "mtgrr/common.hpp"

namespace mtgrr::ad {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Adds `g` into this node's gradient, allocating it on first use.
  void accumulate(const Matrix& g);
  template <class Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    grad += g;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  /// Mutable access for optimizers and tests; never call on a non-leaf.
  Matrix& mutable_value() { return node_->value; }
  /// Gradient after backward(); a zero matrix if nothing flowed here.
  Matrix grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  void zero_grad() { node_->grad.resize(0, 0); }
  /// Back-propagates from this 1x1 tensor.
  void backward() const;
  /// Deep copy of the value into a fresh leaf with the same requires_grad.
  Tensor detached_copy() const { return Tensor(node_->value, node_->requires_grad); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

enum class Activation { Identity, Relu, Elu, Gelu, Sigmoid };

// -- elementwise / linear algebra ------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a * s where s is a 1x1 tensor.
Tensor scale_by(const Tensor& a, const Tensor& s);
/// a + 1 * row for a 1 x cols row tensor.
Tensor add_row(const Tensor& a, const Tensor& row);
/// Multiplies every row of `a` elementwise by the 1 x cols `row`.
Tensor mul_row(const Tensor& a, const Tensor& row);
/// Multiplies row i of `a` by w(i, 0).
Tensor scale_rows(const Tensor& a, const Tensor& w);
Tensor add_scalar(const Tensor& a, double s);
/// Constant sparse operator applied on the left: s * a.
Tensor spmm(const SparseMatrix& s, const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }

// -- nonlinearities --------------------------------------------------------
Tensor relu(const Tensor& a);
Tensor elu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
/// Numerically stable log(sigmoid(a)).
Tensor log_sigmoid(const Tensor& a);
Tensor activate(const Tensor& a, Activation act);
double activate_scalar(double x, Activation act);

// -- reductions and normalizations -----------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor row_softmax(const Tensor& a);
/// Euclidean norm of each row, rows x 1. Gradient at a zero row is zero.
Tensor row_norm(const Tensor& a);
/// Softmax of a column of scores grouped by segment id.
Tensor segment_softmax(const Tensor& scores, std::span<const int> segment, int n_segments);
/// Average of T equal row blocks of a (T*n) x d tensor, giving n x d.
Tensor mean_blocks(const Tensor& a, int blocks);

// -- indexing --------------------------------------------------------------
Tensor gather_rows(const Tensor& a, std::span<const int> index);
/// out(index[k]) += a(k) for an output with n_out rows.
Tensor scatter_add_rows(const Tensor& a, std::span<const int> index, int n_out);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

/// Multi-head scaled dot-product attention applied independently to each of
/// n short sequences. q, k, v are (tokens * n) x d in token-major block
/// layout: row t * n + i is token t of sequence i. d must divide by heads.
Tensor block_attention(const Tensor& q, const Tensor& k, const Tensor& v, int tokens, int heads);

}  // namespace mtgrr::ad
