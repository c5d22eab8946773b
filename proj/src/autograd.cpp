#include "mtgrr/autograd.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

namespace mtgrr::ad {

namespace {

Tensor make_result(Matrix value, std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward_fn) {
  Tensor out(std::move(value), false);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.parents = std::move(parents);
    node.backward_fn = std::move(backward_fn);
  }
  return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m), requires_grad);
}

Matrix Tensor::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw Error(ErrorCode::InvalidArgument, "item() on a non-scalar tensor");
  return node_->value(0, 0);
}

void Tensor::backward() const {
  if (rows() != 1 || cols() != 1) throw Error(ErrorCode::InvalidArgument, "backward() needs a 1x1 tensor");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
  // Interior gradients are no longer needed; only leaves keep theirs.
  for (Node* n : order) {
    if (n->backward_fn) n->grad.resize(0, 0);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::InvalidArgument, "matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                                                std::to_string(b.rows()));
  }
  Matrix v = a.value() * b.value();
  return make_result(std::move(v), {a.node(), b.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate_expr(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate_expr(pa.value.transpose() * self.grad);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate_expr(-self.grad);
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "hadamard");
  return make_result(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate_expr(self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate_expr(self.grad.cwiseProduct(pa.value));
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.value() * s, {a.node()}, [s](Node& self) { self.parents[0]->accumulate_expr(self.grad * s); });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.rows() != 1 || s.cols() != 1) throw Error(ErrorCode::InvalidArgument, "scale_by: scalar must be 1x1");
  return make_result(a.value() * s.value()(0, 0), {a.node(), s.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& ps = *self.parents[1];
    if (pa.requires_grad) pa.accumulate_expr(self.grad * ps.value(0, 0));
    if (ps.requires_grad) {
      Matrix g(1, 1);
      g(0, 0) = self.grad.cwiseProduct(pa.value).sum();
      ps.accumulate(g);
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw Error(ErrorCode::InvalidArgument, "add_row: bad row shape");
  Matrix v = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(v), {a.node(), row.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate_expr(self.grad.colwise().sum());
  });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw Error(ErrorCode::InvalidArgument, "mul_row: bad row shape");
  Matrix v = a.value().array().rowwise() * row.value().row(0).array();
  return make_result(std::move(v), {a.node(), row.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pr = *self.parents[1];
    if (pa.requires_grad) {
      Matrix g = self.grad.array().rowwise() * pr.value.row(0).array();
      pa.accumulate(g);
    }
    if (pr.requires_grad) pr.accumulate_expr(self.grad.cwiseProduct(pa.value).colwise().sum());
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& w) {
  if (w.cols() != 1 || w.rows() != a.rows()) throw Error(ErrorCode::InvalidArgument, "scale_rows: bad weight shape");
  Matrix v = a.value().array().colwise() * w.value().col(0).array();
  return make_result(std::move(v), {a.node(), w.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pw = *self.parents[1];
    if (pa.requires_grad) {
      Matrix g = self.grad.array().colwise() * pw.value.col(0).array();
      pa.accumulate(g);
    }
    if (pw.requires_grad) pw.accumulate_expr(self.grad.cwiseProduct(pa.value).rowwise().sum());
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  Matrix v = a.value().array() + s;
  return make_result(std::move(v), {a.node()}, [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Tensor spmm(const SparseMatrix& s, const Tensor& a) {
  if (s.cols() != a.rows()) throw Error(ErrorCode::InvalidArgument, "spmm: dimension mismatch");
  Matrix v = s * a.value();
  return make_result(std::move(v), {a.node()}, [s](Node& self) {
    self.parents[0]->accumulate_expr(s.transpose() * self.grad);
  });
}

namespace {

template <class F, class G>
Tensor unary(const Tensor& a, F value_fn, G grad_fn) {
  Matrix v = a.value().unaryExpr(value_fn);
  return make_result(std::move(v), {a.node()}, [grad_fn](Node& self) {
    auto& pa = *self.parents[0];
    Matrix g = pa.value.unaryExpr(grad_fn).cwiseProduct(self.grad);
    pa.accumulate(g);
  });
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Tensor elu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0 ? x : std::expm1(x); },
               [](double x) { return x > 0 ? 1.0 : std::exp(x); });
}

Tensor gelu(const Tensor& a) { return unary(a, gelu_value, gelu_grad); }

Tensor sigmoid(const Tensor& a) {
  return unary(a, sigmoid_value, [](double x) {
    const double s = sigmoid_value(x);
    return s * (1.0 - s);
  });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(a, [slope](double x) { return x > 0 ? x : slope * x; },
               [slope](double x) { return x > 0 ? 1.0 : slope; });
}

Tensor log_sigmoid(const Tensor& a) {
  return unary(a, [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); },
               [](double x) { return sigmoid_value(-x); });
}

double activate_scalar(double x, Activation act) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::Relu: return x > 0 ? x : 0.0;
    case Activation::Elu: return x > 0 ? x : std::expm1(x);
    case Activation::Gelu: return gelu_value(x);
    case Activation::Sigmoid: return sigmoid_value(x);
  }
  return x;
}

Tensor activate(const Tensor& a, Activation act) {
  switch (act) {
    case Activation::Identity: return a;
    case Activation::Relu: return relu(a);
    case Activation::Elu: return elu(a);
    case Activation::Gelu: return gelu(a);
    case Activation::Sigmoid: return sigmoid(a);
  }
  return a;
}

Tensor sum(const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return make_result(std::move(v), {a.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    pa.accumulate_expr(Matrix::Constant(pa.value.rows(), pa.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) return Tensor::scalar(0.0);
  return scale(sum(a), 1.0 / n);
}

Tensor row_softmax(const Tensor& a) {
  Matrix v(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.value().row(r).maxCoeff();
    v.row(r) = (a.value().row(r).array() - m).exp();
    v.row(r) /= v.row(r).sum();
  }
  return make_result(std::move(v), {a.node()}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix g(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = y.row(r).dot(self.grad.row(r));
      g.row(r) = y.row(r).array() * (self.grad.row(r).array() - dot);
    }
    self.parents[0]->accumulate(g);
  });
}

Tensor row_norm(const Tensor& a) {
  Matrix v = a.value().rowwise().norm();
  return make_result(std::move(v), {a.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    Matrix g = Matrix::Zero(pa.value.rows(), pa.value.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double n = self.value(r, 0);
      if (n > 0) g.row(r) = pa.value.row(r) * (self.grad(r, 0) / n);
    }
    pa.accumulate(g);
  });
}

Tensor segment_softmax(const Tensor& scores, std::span<const int> segment, int n_segments) {
  if (scores.cols() != 1 || static_cast<std::size_t>(scores.rows()) != segment.size()) {
    throw Error(ErrorCode::InvalidArgument, "segment_softmax: scores must be a column matching segment ids");
  }
  const Matrix& s = scores.value();
  std::vector<double> seg_max(n_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < segment.size(); ++k) seg_max[segment[k]] = std::max(seg_max[segment[k]], s(k, 0));
  std::vector<double> seg_sum(n_segments, 0.0);
  Matrix v(s.rows(), 1);
  for (std::size_t k = 0; k < segment.size(); ++k) {
    v(k, 0) = std::exp(s(k, 0) - seg_max[segment[k]]);
    seg_sum[segment[k]] += v(k, 0);
  }
  for (std::size_t k = 0; k < segment.size(); ++k) v(k, 0) /= seg_sum[segment[k]];
  std::vector<int> seg(segment.begin(), segment.end());
  return make_result(std::move(v), {scores.node()}, [seg = std::move(seg), n_segments](Node& self) {
    std::vector<double> dot(n_segments, 0.0);
    for (std::size_t k = 0; k < seg.size(); ++k) dot[seg[k]] += self.value(k, 0) * self.grad(k, 0);
    Matrix g(self.value.rows(), 1);
    for (std::size_t k = 0; k < seg.size(); ++k) g(k, 0) = self.value(k, 0) * (self.grad(k, 0) - dot[seg[k]]);
    self.parents[0]->accumulate(g);
  });
}

Tensor mean_blocks(const Tensor& a, int blocks) {
  if (blocks <= 0 || a.rows() % blocks != 0) throw Error(ErrorCode::InvalidArgument, "mean_blocks: bad block count");
  const Eigen::Index n = a.rows() / blocks;
  Matrix v = Matrix::Zero(n, a.cols());
  for (int t = 0; t < blocks; ++t) v += a.value().middleRows(t * n, n);
  v /= blocks;
  return make_result(std::move(v), {a.node()}, [blocks, n](Node& self) {
    auto& pa = *self.parents[0];
    Matrix g(pa.value.rows(), pa.value.cols());
    for (int t = 0; t < blocks; ++t) g.middleRows(t * n, n) = self.grad / blocks;
    pa.accumulate(g);
  });
}

Tensor gather_rows(const Tensor& a, std::span<const int> index) {
  Matrix v(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= a.rows()) throw Error(ErrorCode::InvalidArgument, "gather_rows: index out of range");
    v.row(k) = a.value().row(index[k]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return make_result(std::move(v), {a.node()}, [idx = std::move(idx)](Node& self) {
    auto& pa = *self.parents[0];
    Matrix g = Matrix::Zero(pa.value.rows(), pa.value.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) g.row(idx[k]) += self.grad.row(k);
    pa.accumulate(g);
  });
}

Tensor scatter_add_rows(const Tensor& a, std::span<const int> index, int n_out) {
  if (static_cast<std::size_t>(a.rows()) != index.size()) {
    throw Error(ErrorCode::InvalidArgument, "scatter_add_rows: index length must equal row count");
  }
  Matrix v = Matrix::Zero(n_out, a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= n_out) throw Error(ErrorCode::InvalidArgument, "scatter_add_rows: index out of range");
    v.row(index[k]) += a.value().row(k);
  }
  std::vector<int> idx(index.begin(), index.end());
  return make_result(std::move(v), {a.node()}, [idx = std::move(idx)](Node& self) {
    auto& pa = *self.parents[0];
    Matrix g(pa.value.rows(), pa.value.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) g.row(k) = self.grad.row(idx[k]);
    pa.accumulate(g);
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw Error(ErrorCode::InvalidArgument, "slice_rows: out of range");
  return make_result(a.value().middleRows(start, count), {a.node()}, [start, count](Node& self) {
    auto& pa = *self.parents[0];
    if (pa.grad.size() == 0) pa.grad = Matrix::Zero(pa.value.rows(), pa.value.cols());
    pa.grad.middleRows(start, count) += self.grad;
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw Error(ErrorCode::InvalidArgument, "slice_cols: out of range");
  return make_result(a.value().middleCols(start, count), {a.node()}, [start, count](Node& self) {
    auto& pa = *self.parents[0];
    if (pa.grad.size() == 0) pa.grad = Matrix::Zero(pa.value.rows(), pa.value.cols());
    pa.grad.middleCols(start, count) += self.grad;
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "concat_rows: no parts");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols()) throw Error(ErrorCode::InvalidArgument, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix v(rows, parts[0].cols());
  std::vector<std::shared_ptr<Node>> parents;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    parents.push_back(p.node());
  }
  return make_result(std::move(v), std::move(parents), [](Node& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const Eigen::Index r = p->value.rows();
      if (p->requires_grad) p->accumulate_expr(self.grad.middleRows(at, r));
      at += r;
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "concat_cols: no parts");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) throw Error(ErrorCode::InvalidArgument, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix v(parts[0].rows(), cols);
  std::vector<std::shared_ptr<Node>> parents;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    parents.push_back(p.node());
  }
  return make_result(std::move(v), std::move(parents), [](Node& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const Eigen::Index c = p->value.cols();
      if (p->requires_grad) p->accumulate_expr(self.grad.middleCols(at, c));
      at += c;
    }
  });
}

Tensor block_attention(const Tensor& q, const Tensor& k, const Tensor& v, int tokens, int heads) {
  check_same_shape(q, k, "block_attention");
  check_same_shape(q, v, "block_attention");
  if (tokens <= 0 || q.rows() % tokens != 0) throw Error(ErrorCode::InvalidArgument, "block_attention: bad token count");
  if (heads <= 0 || q.cols() % heads != 0) throw Error(ErrorCode::InvalidArgument, "block_attention: width not divisible by heads");
  const Eigen::Index n = q.rows() / tokens;
  const Eigen::Index dh = q.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();

  // probs[(i * heads + h)] is a tokens x tokens row-stochastic matrix.
  auto probs = std::make_shared<std::vector<Matrix>>(n * heads);
  Matrix out = Matrix::Zero(q.rows(), q.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int h = 0; h < heads; ++h) {
      Matrix s(tokens, tokens);
      for (int a = 0; a < tokens; ++a) {
        for (int b = 0; b < tokens; ++b) {
          s(a, b) = Q.row(a * n + i).segment(h * dh, dh).dot(K.row(b * n + i).segment(h * dh, dh)) * inv_sqrt;
        }
      }
      for (int a = 0; a < tokens; ++a) {
        const double m = s.row(a).maxCoeff();
        s.row(a) = (s.row(a).array() - m).exp();
        s.row(a) /= s.row(a).sum();
      }
      for (int a = 0; a < tokens; ++a) {
        for (int b = 0; b < tokens; ++b) {
          out.row(a * n + i).segment(h * dh, dh) += s(a, b) * V.row(b * n + i).segment(h * dh, dh);
        }
      }
      (*probs)[i * heads + h] = std::move(s);
    }
  }

  return make_result(std::move(out), {q.node(), k.node(), v.node()}, [probs, tokens, heads, n, dh, inv_sqrt](Node& self) {
    auto& pq = *self.parents[0];
    auto& pk = *self.parents[1];
    auto& pv = *self.parents[2];
    Matrix gq = Matrix::Zero(pq.value.rows(), pq.value.cols());
    Matrix gk = Matrix::Zero(gq.rows(), gq.cols());
    Matrix gv = Matrix::Zero(gq.rows(), gq.cols());
    const Matrix& dO = self.grad;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int h = 0; h < heads; ++h) {
        const Matrix& p = (*probs)[i * heads + h];
        Matrix dp(tokens, tokens);
        for (int a = 0; a < tokens; ++a) {
          const auto go = dO.row(a * n + i).segment(h * dh, dh);
          for (int b = 0; b < tokens; ++b) {
            dp(a, b) = go.dot(pv.value.row(b * n + i).segment(h * dh, dh));
            gv.row(b * n + i).segment(h * dh, dh) += p(a, b) * go;
          }
        }
        for (int a = 0; a < tokens; ++a) {
          const double dot = p.row(a).dot(dp.row(a));
          for (int b = 0; b < tokens; ++b) {
            const double ds = p(a, b) * (dp(a, b) - dot) * inv_sqrt;
            gq.row(a * n + i).segment(h * dh, dh) += ds * pk.value.row(b * n + i).segment(h * dh, dh);
            gk.row(b * n + i).segment(h * dh, dh) += ds * pq.value.row(a * n + i).segment(h * dh, dh);
          }
        }
      }
    }
    if (pq.requires_grad) pq.accumulate(gq);
    if (pk.requires_grad) pk.accumulate(gk);
    if (pv.requires_grad) pv.accumulate(gv);
  });
}

}  // namespace mtgrr::ad
