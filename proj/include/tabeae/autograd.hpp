#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Var is a handle to a node in a dynamically built graph; calling
// backward() on a 1x1 Var accumulates gradients into every leaf that requires
// them. Parameters are persistent leaves whose gradients survive until
// zero_grad().

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tabeae/error.hpp"

namespace tabeae::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Matrix& grad_buffer() {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }
};

namespace detail {
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables graph recording in its scope (inference).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled()) { detail::grad_enabled() = false; }
  ~NoGradGuard() { detail::grad_enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  double scalar() const { return node_->value(0, 0); }
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

  void zero_grad() { node_->grad.resize(0, 0); }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

inline Var leaf(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

namespace detail {

// Creates the result node and, when any input needs gradients, wires the
// backward closure.
template <typename Fn>
Var make_result(Matrix value, std::vector<Var> inputs, Fn&& backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled()) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || v.requires_grad();
    if (needs) {
      n->requires_grad = true;
      for (auto& v : inputs) n->parents.push_back(v.node());
      n->backward = std::forward<Fn>(backward);
    }
  }
  return Var(std::move(n));
}

inline void accumulate(const std::shared_ptr<Node>& n, const Matrix& g) {
  if (n->requires_grad) n->grad_buffer() += g;
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace detail

// Runs reverse accumulation from a scalar (1x1) output.
inline void backward(const Var& out) {
  if (out.rows() != 1 || out.cols() != 1) throw ShapeError("backward: output must be 1x1");
  if (!out.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{out.node().get(), 0}};
  seen.insert(out.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  out.node()->grad_buffer().setConstant(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Operations

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  return detail::make_result(a.value() * b.value(), {a, b}, [](Node& n) {
    const auto& a = n.parents[0];
    const auto& b = n.parents[1];
    if (a->requires_grad) a->grad_buffer().noalias() += n.grad * b->value.transpose();
    if (b->requires_grad) b->grad_buffer().noalias() += a->value.transpose() * n.grad;
  });
}

// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  return detail::make_result(a.value() * b.value().transpose(), {a, b}, [](Node& n) {
    const auto& a = n.parents[0];
    const auto& b = n.parents[1];
    if (a->requires_grad) a->grad_buffer().noalias() += n.grad * b->value;
    if (b->requires_grad) b->grad_buffer().noalias() += n.grad.transpose() * a->value;
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  return detail::make_result(a.value() + b.value(), {a, b}, [](Node& n) {
    detail::accumulate(n.parents[0], n.grad);
    detail::accumulate(n.parents[1], n.grad);
  });
}

// a + broadcast(row), row is 1 x cols(a).
inline Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias shape mismatch");
  Matrix v = a.value().rowwise() + RowVector(row.value());
  return detail::make_result(std::move(v), {a, row}, [](Node& n) {
    detail::accumulate(n.parents[0], n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->grad_buffer() += n.grad.colwise().sum();
  });
}

inline Var scale(const Var& a, double s) {
  return detail::make_result(a.value() * s, {a}, [s](Node& n) { detail::accumulate(n.parents[0], n.grad * s); });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  return detail::make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    const auto& a = n.parents[0];
    const auto& b = n.parents[1];
    if (a->requires_grad) a->grad_buffer() += n.grad.cwiseProduct(b->value);
    if (b->requires_grad) b->grad_buffer() += n.grad.cwiseProduct(a->value);
  });
}

// a * broadcast(row) element-wise.
inline Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mul_row: shape mismatch");
  Matrix v = a.value().array().rowwise() * RowVector(row.value()).array();
  return detail::make_result(std::move(v), {a, row}, [](Node& n) {
    const auto& a = n.parents[0];
    const auto& r = n.parents[1];
    if (a->requires_grad) {
      a->grad_buffer().array() += n.grad.array().rowwise() * RowVector(r->value).array();
    }
    if (r->requires_grad) r->grad_buffer() += n.grad.cwiseProduct(a->value).colwise().sum();
  });
}

inline Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  Matrix v = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  return detail::make_result(std::move(v), {a}, [](Node& n) {
    const auto& x = n.parents[0]->value;
    Matrix d = x.unaryExpr([](double t) {
      return 0.5 * (1.0 + std::erf(t * kInvSqrt2)) + t * kInvSqrt2Pi * std::exp(-0.5 * t * t);
    });
    detail::accumulate(n.parents[0], n.grad.cwiseProduct(d));
  });
}

// Row-wise layer normalization with learned gain and bias (both 1 x cols).
inline Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5) {
  if (gain.cols() != a.cols() || bias.cols() != a.cols()) throw ShapeError("layer_norm: width mismatch");
  const auto rows = a.rows();
  const auto cols = a.cols();
  Matrix xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = a.value().row(r).mean();
    const double var = (a.value().row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (a.value().row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * RowVector(gain.value()).array()).rowwise() +
               RowVector(bias.value()).array();
  return detail::make_result(std::move(out), {a, gain, bias},
                             [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
    const auto& x = n.parents[0];
    const auto& g = n.parents[1];
    const auto& b = n.parents[2];
    if (g->requires_grad) g->grad_buffer() += n.grad.cwiseProduct(xhat).colwise().sum();
    if (b->requires_grad) b->grad_buffer() += n.grad.colwise().sum();
    if (x->requires_grad) {
      Matrix dxhat = n.grad.array().rowwise() * RowVector(g->value).array();
      const double cols = static_cast<double>(dxhat.cols());
      auto& gx = x->grad_buffer();
      for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
        const double m1 = dxhat.row(r).sum() / cols;
        const double m2 = dxhat.row(r).dot(xhat.row(r)) / cols;
        gx.row(r).array() += inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
    }
  });
}

// Boolean permission matrix for attention; allowed(q, k) == true keeps the
// logit. Row-major bytes.
struct AttentionMask {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<std::uint8_t> allowed;

  bool at(Eigen::Index q, Eigen::Index k) const {
    return allowed[static_cast<std::size_t>(q * cols + k)] != 0;
  }
};

// Row-wise softmax; masked entries get probability zero. A fully masked row
// yields zeros.
inline Var softmax_rows(const Var& a, const AttentionMask* mask = nullptr) {
  if (mask != nullptr && (mask->rows != a.rows() || mask->cols != a.cols())) {
    throw ShapeError("softmax_rows: mask is " + std::to_string(mask->rows) + "x" + std::to_string(mask->cols) +
                     " but scores are " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  Matrix p(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      if (mask == nullptr || mask->at(r, c)) mx = std::max(mx, a.value()(r, c));
    }
    double sum = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const bool keep = mask == nullptr || mask->at(r, c);
      p(r, c) = keep ? std::exp(a.value()(r, c) - mx) : 0.0;
      sum += p(r, c);
    }
    if (sum > 0.0) p.row(r) /= sum;
  }
  return detail::make_result(p, {a}, [p](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Eigen::VectorXd dot = (n.grad.cwiseProduct(p)).rowwise().sum();
    Matrix g = p.cwiseProduct(n.grad.colwise() - dot);
    n.parents[0]->grad_buffer() += g;
  });
}

// Output row i = sum_j weight_ij * a.row(source_ij).
using RowRecipe = std::vector<std::vector<std::pair<int, double>>>;

inline Var combine_rows(const Var& a, const RowRecipe& recipe) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(recipe.size()), a.cols());
  for (std::size_t i = 0; i < recipe.size(); ++i) {
    for (const auto& [src, w] : recipe[i]) {
      if (src < 0 || src >= a.rows()) throw ShapeError("combine_rows: source row out of range");
      out.row(static_cast<Eigen::Index>(i)) += w * a.value().row(src);
    }
  }
  return detail::make_result(std::move(out), {a}, [recipe](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < recipe.size(); ++i) {
      for (const auto& [src, w] : recipe[i]) g.row(src) += w * n.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

inline Var gather_rows(const Var& a, const std::vector<int>& rows) {
  RowRecipe r;
  r.reserve(rows.size());
  for (int i : rows) r.push_back({{i, 1.0}});
  return combine_rows(a, r);
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols()) throw ShapeError("concat_rows: width mismatch");
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return detail::make_result(std::move(out), parts, [](Node& n) {
    Eigen::Index at = 0;
    for (const auto& p : n.parents) {
      if (p->requires_grad) p->grad_buffer() += n.grad.middleRows(at, p->value.rows());
      at += p->value.rows();
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) throw ShapeError("concat_cols: height mismatch");
    cols += p.cols();
  }
  Matrix out(parts[0].rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return detail::make_result(std::move(out), parts, [](Node& n) {
    Eigen::Index at = 0;
    for (const auto& p : n.parents) {
      if (p->requires_grad) p->grad_buffer() += n.grad.middleCols(at, p->value.cols());
      at += p->value.cols();
    }
  });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  return detail::make_result(a.value().middleCols(start, count), {a}, [start, count](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_buffer().middleCols(start, count) += n.grad;
  });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  return detail::make_result(a.value().middleRows(start, count), {a}, [start, count](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_buffer().middleRows(start, count) += n.grad;
  });
}

// -log softmax(logits)[index] for a column (n x 1) or row (1 x n) vector.
inline Var nll_of_softmax(const Var& logits, int index) {
  const Eigen::Index n = logits.size();
  if (logits.rows() != 1 && logits.cols() != 1) throw ShapeError("nll_of_softmax: expects a vector");
  if (index < 0 || index >= n) {
    throw ShapeError("nll_of_softmax: target index " + std::to_string(index) + " outside [0, " +
                     std::to_string(n) + ")");
  }
  const double* x = logits.value().data();
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (x[i] > x[arg]) arg = i;
  }
  const double mx = x[arg];
  double rest = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i != arg) rest += std::exp(x[i] - mx);
  }
  const double tail = std::log1p(rest);
  const double lse = mx + tail;
  Matrix out(1, 1);
  out(0, 0) = (mx - x[index]) + tail;
  return detail::make_result(std::move(out), {logits}, [index, lse](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    const double g = n.grad(0, 0);
    auto& buf = p->grad_buffer();
    const double* x = p->value.data();
    double* gx = buf.data();
    for (Eigen::Index i = 0; i < p->value.size(); ++i) gx[i] += g * std::exp(x[i] - lse);
    gx[index] -= g;
  });
}

// Sum of every entry of every term, as a 1x1 result.
inline Var sum_all(const std::vector<Var>& terms) {
  if (terms.empty()) return constant(Matrix::Zero(1, 1));
  Matrix out = Matrix::Zero(1, 1);
  for (const auto& t : terms) out(0, 0) += t.value().sum();
  return detail::make_result(std::move(out), terms, [](Node& n) {
    for (const auto& p : n.parents) {
      detail::accumulate(p, Matrix::Constant(p->value.rows(), p->value.cols(), n.grad(0, 0)));
    }
  });
}

// Inverted dropout; identity when p == 0 or the rng is null.
inline Var dropout(const Var& a, double p, std::mt19937_64* rng) {
  if (p <= 0.0 || rng == nullptr) return a;
  Matrix keep(a.rows(), a.cols());
  const double s = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < keep.size(); ++i) {
    keep.data()[i] = (static_cast<double>((*rng)() >> 11) * 0x1.0p-53 >= p) ? s : 0.0;
  }
  return detail::make_result(a.value().cwiseProduct(keep), {a}, [keep](Node& n) {
    detail::accumulate(n.parents[0], n.grad.cwiseProduct(keep));
  });
}

}  // namespace tabeae::ag
