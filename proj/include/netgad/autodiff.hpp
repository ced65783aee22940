#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
// A Tape owns the computation graph for one forward pass; backward walks
// nodes in reverse creation order and accumulates gradients. Training
// builds a fresh tape per step.

#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "netgad/util.hpp"

namespace netgad {
namespace ad {

using Matrix = Eigen::MatrixXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

struct Node {
  Matrix value;
  Matrix grad;  // empty until touched by backward
  bool requires_grad = false;
  std::function<void()> backprop;  // accumulates into parent grads

  void ensure_grad() {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
  }
};

class Tape;

// Lightweight handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Node* n, Tape* t) : node_(n), tape_(t) {}

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  Node* node() const { return node_; }
  Tape* tape() const { return tape_; }

 private:
  Node* node_ = nullptr;
  Tape* tape_ = nullptr;
};

class Tape {
 public:
  // Trainable input; gradient is read back through the returned Var.
  Var leaf(const Matrix& value) {
    Node& n = push(value);
    n.requires_grad = true;
    return {&n, this};
  }

  Var constant(Matrix value) {
    Node& n = push(std::move(value));
    n.requires_grad = false;
    return {&n, this};
  }

  // Generic op node: value plus a pull-based backward closure.
  Var make(Matrix value, bool requires_grad, std::function<void()> backprop) {
    Node& n = push(std::move(value));
    n.requires_grad = requires_grad;
    n.backprop = std::move(backprop);
    return {&n, this};
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the graph in reverse creation
  // order. The loss must be scalar (1 x 1).
  void backward(const Var& loss) {
    if (loss.value().rows() != 1 || loss.value().cols() != 1)
      throw NumericError("backward requires a 1x1 loss node");
    loss.node()->ensure_grad();
    loss.node()->grad(0, 0) += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->requires_grad || !it->backprop) continue;
      if (it->grad.size() == 0) continue;  // not on a path to the loss
      it->backprop();
    }
  }

  void zero_grad() {
    for (Node& n : nodes_) n.grad.resize(0, 0);
  }

  size_t size() const { return nodes_.size(); }

 private:
  Node& push(Matrix value) {
    nodes_.emplace_back();
    nodes_.back().value = std::move(value);
    return nodes_.back();
  }

  std::deque<Node> nodes_;  // stable addresses
};

namespace detail {

inline Tape* same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape())
    throw NumericError("operands belong to different tapes");
  return a.tape();
}

inline void accumulate(Node* n, const Matrix& g) {
  if (!n->requires_grad) return;
  n->ensure_grad();
  n->grad += g;
}

}  // namespace detail

// ------------------------------------------------------------ basic ops

inline Var add(const Var& a, const Var& b) {
  Tape* t = detail::same_tape(a, b);
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols())
    throw NumericError("add: shape mismatch");
  Node *na = a.node(), *nb = b.node();
  bool rg = na->requires_grad || nb->requires_grad;
  Var out = t->make(a.value() + b.value(), rg, nullptr);
  Node* no = out.node();
  no->backprop = [na, nb, no] {
    detail::accumulate(na, no->grad);
    detail::accumulate(nb, no->grad);
  };
  return out;
}

inline Var sub(const Var& a, const Var& b) {
  Tape* t = detail::same_tape(a, b);
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols())
    throw NumericError("sub: shape mismatch");
  Node *na = a.node(), *nb = b.node();
  bool rg = na->requires_grad || nb->requires_grad;
  Var out = t->make(a.value() - b.value(), rg, nullptr);
  Node* no = out.node();
  no->backprop = [na, nb, no] {
    detail::accumulate(na, no->grad);
    detail::accumulate(nb, -no->grad);
  };
  return out;
}

// Adds a 1 x C bias row to every row of a.
inline Var add_rowvec(const Var& a, const Var& bias) {
  Tape* t = detail::same_tape(a, bias);
  if (bias.value().rows() != 1 || bias.value().cols() != a.value().cols())
    throw NumericError("add_rowvec: bias must be 1 x cols(a)");
  Node *na = a.node(), *nb = bias.node();
  bool rg = na->requires_grad || nb->requires_grad;
  Matrix v = a.value();
  v.rowwise() += Eigen::RowVectorXd(bias.value().row(0));
  Var out = t->make(std::move(v), rg, nullptr);
  Node* no = out.node();
  no->backprop = [na, nb, no] {
    detail::accumulate(na, no->grad);
    detail::accumulate(nb, no->grad.colwise().sum());
  };
  return out;
}

inline Var scale(const Var& a, double c) {
  Node* na = a.node();
  Var out = a.tape()->make(a.value() * c, na->requires_grad, nullptr);
  Node* no = out.node();
  no->backprop = [na, no, c] { detail::accumulate(na, no->grad * c); };
  return out;
}

inline Var add_scalar(const Var& a, double c) {
  Node* na = a.node();
  Var out = a.tape()->make(a.value().array() + c, na->requires_grad, nullptr);
  Node* no = out.node();
  no->backprop = [na, no] { detail::accumulate(na, no->grad); };
  return out;
}

inline Var elem_mul(const Var& a, const Var& b) {
  Tape* t = detail::same_tape(a, b);
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols())
    throw NumericError("elem_mul: shape mismatch");
  Node *na = a.node(), *nb = b.node();
  bool rg = na->requires_grad || nb->requires_grad;
  Var out = t->make(a.value().cwiseProduct(b.value()), rg, nullptr);
  Node* no = out.node();
  no->backprop = [na, nb, no] {
    detail::accumulate(na, no->grad.cwiseProduct(nb->value));
    detail::accumulate(nb, no->grad.cwiseProduct(na->value));
  };
  return out;
}

inline Var matmul(const Var& a, const Var& b) {
  Tape* t = detail::same_tape(a, b);
  if (a.value().cols() != b.value().rows())
    throw NumericError("matmul: inner dimensions disagree");
  Node *na = a.node(), *nb = b.node();
  bool rg = na->requires_grad || nb->requires_grad;
  Var out = t->make(a.value() * b.value(), rg, nullptr);
  Node* no = out.node();
  no->backprop = [na, nb, no] {
    if (na->requires_grad) {
      na->ensure_grad();
      na->grad.noalias() += no->grad * nb->value.transpose();
    }
    if (nb->requires_grad) {
      nb->ensure_grad();
      nb->grad.noalias() += na->value.transpose() * no->grad;
    }
  };
  return out;
}

inline Var transpose(const Var& a) {
  Node* na = a.node();
  Var out = a.tape()->make(a.value().transpose(), na->requires_grad, nullptr);
  Node* no = out.node();
  no->backprop = [na, no] { detail::accumulate(na, no->grad.transpose()); };
  return out;
}

inline Var slice_cols(const Var& a, int offset, int count) {
  if (offset < 0 || count < 0 || offset + count > a.value().cols())
    throw NumericError("slice_cols: range out of bounds");
  Node* na = a.node();
  Var out = a.tape()->make(a.value().middleCols(offset, count),
                           na->requires_grad, nullptr);
  Node* no = out.node();
  no->backprop = [na, no, offset, count] {
    if (!na->requires_grad) return;
    na->ensure_grad();
    na->grad.middleCols(offset, count) += no->grad;
  };
  return out;
}

// ------------------------------------------------------------ nonlinear

inline Var sigmoid(const Var& a) {
  Node* na = a.node();
  Matrix s = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Var out = a.tape()->make(std::move(s), na->requires_grad, nullptr);
  Node* no = out.node();
  no->backprop = [na, no] {
    const auto& s = no->value.array();
    detail::accumulate(na, (no->grad.array() * s * (1.0 - s)).matrix());
  };
  return out;
}

inline Var relu(const Var& a) {
  Node* na = a.node();
  Var out = a.tape()->make(a.value().cwiseMax(0.0), na->requires_grad, nullptr);
  Node* no = out.node();
  no->backprop = [na, no] {
    Matrix mask = (na->value.array() > 0.0).cast<double>();
    detail::accumulate(na, no->grad.cwiseProduct(mask));
  };
  return out;
}

// softplus(x) = ln(1 + e^x), computed stably; gradient is sigmoid(x).
inline Var softplus(const Var& a) {
  Node* na = a.node();
  Matrix v = a.value().unaryExpr([](double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
  });
  Var out = a.tape()->make(std::move(v), na->requires_grad, nullptr);
  Node* no = out.node();
  no->backprop = [na, no] {
    Matrix s = na->value.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    detail::accumulate(na, no->grad.cwiseProduct(s));
  };
  return out;
}

// Elementwise natural log; inputs must be strictly positive.
inline Var log(const Var& a) {
  if ((a.value().array() <= 0.0).any())
    throw NumericError("log: non-positive input");
  Node* na = a.node();
  Var out = a.tape()->make(a.value().array().log().matrix(),
                           na->requires_grad, nullptr);
  Node* no = out.node();
  no->backprop = [na, no] {
    detail::accumulate(na, no->grad.cwiseQuotient(na->value));
  };
  return out;
}

// Inverted dropout: keeps cells with probability 1-rate and rescales by
// 1/(1-rate) so the expectation is unchanged; identity in eval mode.
inline Var dropout(const Var& a, double rate, std::mt19937_64& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw NumericError("dropout rate must lie in [0, 1)");
  Node* na = a.node();
  if (!training || rate == 0.0) {
    Var out = a.tape()->make(a.value(), na->requires_grad, nullptr);
    Node* no = out.node();
    no->backprop = [na, no] { detail::accumulate(na, no->grad); };
    return out;
  }
  const double keep = 1.0 - rate;
  Matrix mask(a.value().rows(), a.value().cols());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = unit(rng) < keep ? 1.0 / keep : 0.0;
  Var out = a.tape()->make(a.value().cwiseProduct(mask), na->requires_grad, nullptr);
  Node* no = out.node();
  auto shared_mask = std::make_shared<Matrix>(std::move(mask));
  no->backprop = [na, no, shared_mask] {
    detail::accumulate(na, no->grad.cwiseProduct(*shared_mask));
  };
  return out;
}

// z = mean + eps .* std with eps ~ N(0, 1) drawn once at construction.
// Gradients: d/d(mean) = g, d/d(std) = g .* eps.
inline Var reparam_sample(const Var& mean, const Var& stddev, std::mt19937_64& rng) {
  Tape* t = detail::same_tape(mean, stddev);
  if (mean.value().rows() != stddev.value().rows() ||
      mean.value().cols() != stddev.value().cols())
    throw NumericError("reparam_sample: shape mismatch");
  Matrix eps(mean.value().rows(), mean.value().cols());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < eps.rows(); ++i)
    for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(i, j) = normal(rng);
  Node *nm = mean.node(), *ns = stddev.node();
  bool rg = nm->requires_grad || ns->requires_grad;
  Var out = t->make(mean.value() + eps.cwiseProduct(stddev.value()), rg, nullptr);
  Node* no = out.node();
  auto shared_eps = std::make_shared<Matrix>(std::move(eps));
  no->backprop = [nm, ns, no, shared_eps] {
    detail::accumulate(nm, no->grad);
    detail::accumulate(ns, no->grad.cwiseProduct(*shared_eps));
  };
  return out;
}

// ------------------------------------------------------------ reductions

namespace detail {

inline Matrix sign_matrix(const Matrix& d) {
  return d.unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

}  // namespace detail

// Per-row mean absolute error, optionally cell-weighted. Returns R x 1.
// Zero differences use the sign(0) = 0 subgradient.
inline Var mae_rows(const Var& a, const Var& b, const Matrix* weights = nullptr) {
  Tape* t = detail::same_tape(a, b);
  const Eigen::Index rows = a.value().rows(), cols = a.value().cols();
  if (b.value().rows() != rows || b.value().cols() != cols)
    throw NumericError("mae_rows: shape mismatch");
  if (weights && (weights->rows() != rows || weights->cols() != cols))
    throw NumericError("mae_rows: weight shape mismatch");
  Matrix diff = a.value() - b.value();
  Matrix abs = diff.cwiseAbs();
  if (weights) abs = abs.cwiseProduct(*weights);
  Matrix v = cols > 0 ? Matrix(abs.rowwise().sum() / double(cols))
                      : Matrix(Matrix::Zero(rows, 1));
  Node *na = a.node(), *nb = b.node();
  bool rg = na->requires_grad || nb->requires_grad;
  Var out = t->make(std::move(v), rg, nullptr);
  Node* no = out.node();
  Matrix sg = detail::sign_matrix(diff);
  if (weights) sg = sg.cwiseProduct(*weights);
  auto shared_sign = std::make_shared<Matrix>(std::move(sg));
  no->backprop = [na, nb, no, shared_sign, cols] {
    if (cols == 0) return;
    Matrix g = shared_sign->array().colwise() *
               (no->grad.col(0).array() / double(cols));
    detail::accumulate(na, g);
    detail::accumulate(nb, -g);
  };
  return out;
}

// Per-row mean squared error, optionally cell-weighted. Returns R x 1.
inline Var mse_rows(const Var& a, const Var& b, const Matrix* weights = nullptr) {
  Tape* t = detail::same_tape(a, b);
  const Eigen::Index rows = a.value().rows(), cols = a.value().cols();
  if (b.value().rows() != rows || b.value().cols() != cols)
    throw NumericError("mse_rows: shape mismatch");
  if (weights && (weights->rows() != rows || weights->cols() != cols))
    throw NumericError("mse_rows: weight shape mismatch");
  Matrix diff = a.value() - b.value();
  Matrix sq = diff.cwiseProduct(diff);
  if (weights) sq = sq.cwiseProduct(*weights);
  Matrix v = cols > 0 ? Matrix(sq.rowwise().sum() / double(cols))
                      : Matrix(Matrix::Zero(rows, 1));
  Node *na = a.node(), *nb = b.node();
  bool rg = na->requires_grad || nb->requires_grad;
  Var out = t->make(std::move(v), rg, nullptr);
  Node* no = out.node();
  Matrix wd = diff;
  if (weights) wd = wd.cwiseProduct(*weights);
  auto shared_diff = std::make_shared<Matrix>(std::move(wd));
  no->backprop = [na, nb, no, shared_diff, cols] {
    if (cols == 0) return;
    Matrix g = shared_diff->array().colwise() *
               (no->grad.col(0).array() * 2.0 / double(cols));
    detail::accumulate(na, g);
    detail::accumulate(nb, -g);
  };
  return out;
}

// Row sums as an R x 1 column.
inline Var rowsum(const Var& a) {
  Node* na = a.node();
  Var out = a.tape()->make(a.value().rowwise().sum(), na->requires_grad, nullptr);
  Node* no = out.node();
  const Eigen::Index cols = a.value().cols();
  no->backprop = [na, no, cols] {
    detail::accumulate(na, no->grad.col(0).replicate(1, cols));
  };
  return out;
}

// Mean over all cells as a 1 x 1 node.
inline Var mean_all(const Var& a) {
  Node* na = a.node();
  const double cells = double(a.value().size());
  Matrix v(1, 1);
  v(0, 0) = cells > 0 ? a.value().mean() : 0.0;
  Var out = a.tape()->make(std::move(v), na->requires_grad, nullptr);
  Node* no = out.node();
  no->backprop = [na, no, cells] {
    if (cells == 0) return;
    detail::accumulate(
        na, Matrix::Constant(na->value.rows(), na->value.cols(),
                             no->grad(0, 0) / cells));
  };
  return out;
}

// ------------------------------------------------------------ optimizer

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are allocated on first use
// and must keep matching shapes across steps.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
    if (params.size() != grads.size())
      throw NumericError("adam: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const Matrix* p : params) {
        m_.push_back(Matrix::Zero(p->rows(), p->cols()));
        v_.push_back(Matrix::Zero(p->rows(), p->cols()));
      }
    }
    if (m_.size() != params.size())
      throw NumericError("adam: parameter count changed between steps");
    for (const Matrix& g : grads)
      if (!all_finite(g))
        throw NumericError("adam: non-finite gradient, aborting step");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      Matrix& m = m_[i];
      Matrix& v = v_[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grads[i];
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
      Matrix mhat = m / bc1;
      Matrix vhat = v / bc2;
      params[i]->array() -=
          cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
    }
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

// ------------------------------------------------------------ checkpoints

using NamedTensors = std::vector<std::pair<std::string, Matrix>>;

inline constexpr char kCheckpointMagic[8] = {'N', 'G', 'A', 'D', 'C', 'K', 'P', '1'};

// Binary format: 8-byte magic, uint64 tensor count, then per tensor a
// uint32 name length, the name, uint64 rows/cols and row-major doubles.
inline void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  uint64_t count = tensors.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& [name, m] : tensors) {
    uint32_t len = static_cast<uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(name.data(), len);
    uint64_t rows = m.rows(), cols = m.cols();
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    for (uint64_t i = 0; i < rows; ++i)
      for (uint64_t j = 0; j < cols; ++j) {
        double v = m(i, j);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  }
  if (!out) throw IoError("short write on checkpoint: " + path);
}

inline NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw IoError("bad checkpoint magic: " + path);
  uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in) throw IoError("truncated checkpoint: " + path);
  NamedTensors tensors;
  for (uint64_t k = 0; k < count; ++k) {
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len > 4096) throw IoError("bad tensor name in " + path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!in || rows > (1u << 24) || cols > (1u << 24))
      throw IoError("bad tensor shape in " + path);
    Matrix m(rows, cols);
    for (uint64_t i = 0; i < rows; ++i)
      for (uint64_t j = 0; j < cols; ++j) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw IoError("truncated tensor data in " + path);
        m(i, j) = v;
      }
    tensors.emplace_back(std::move(name), std::move(m));
  }
  return tensors;
}

}  // namespace ad
}  // namespace netgad
