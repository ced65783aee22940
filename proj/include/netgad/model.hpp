#pragma once

// Graph-convolutional variational autoencoder over one window: two GCN
// encoder stacks, reparameterized latent, sigmoid bottleneck, inner
// product decoder and dual reconstruction heads for the adjacency and
// feature matrices. Training is full-batch Adam on a fresh tape per
// epoch; scoring reconstructs in inference mode.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "netgad/autodiff.hpp"
#include "netgad/features.hpp"

namespace netgad {

enum class AlphaBinding { Stat, Significant };

struct ModelConfig {
  int gcn_filters = 32;
  int latent = 16;
  double dropout_rate = 0.5;
  int epochs = 200;
  double lr = 0.01;
  int batch_size = 256;  // accepted for interface parity; training is full-batch
  bool variational = true;
  bool use_embedding_block = true;
  double kl_weight = 0.0;
  double alpha = 0.3, beta = 0.3, gamma = 0.2, delta = 0.2;
  AlphaBinding alpha_binds = AlphaBinding::Stat;
  uint64_t seed = 0;

  void validate() const {
    if (gcn_filters < 1 || latent < 1) throw ConfigError("model dims must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("dropout rate must lie in [0, 1)");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    double sum = alpha + beta + gamma + delta;
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("loss weights must sum to 1 (got " + format_double(sum) + ")");
  }
};

// ------------------------------------------------------------ propagation

// Symmetric renormalized propagation: D^{-1/2} (CM + I) D^{-1/2} with D
// the degree matrix of CM + I.
inline Matrix gcn_propagation(const Matrix& cm_norm) {
  const Eigen::Index n = cm_norm.rows();
  Matrix a = cm_norm + Matrix::Identity(n, n);
  Eigen::VectorXd dinv = a.rowwise().sum().array().rsqrt();
  return dinv.asDiagonal() * a * dinv.asDiagonal();
}

// One propagation layer in closed form, for checks against the tape.
inline Matrix gcn_layer_value(const Matrix& a_hat, const Matrix& x, const Matrix& w) {
  return ((a_hat * x) * w).cwiseMax(0.0);
}

// ------------------------------------------------------------ parameters

struct ModelParams {
  Matrix w_mean, w_std;      // F x filters, encoder stacks
  Matrix w_latent, b_latent; // filters x latent bottleneck
  Matrix w_feat1, b_feat1;   // |M| x F/2 feature head
  Matrix w_feat2, b_feat2;   // F/2 x F
  Matrix w_adj1, b_adj1;     // |M| x |M|/2 adjacency head
  Matrix w_adj2, b_adj2;     // |M|/2 x |M|

  static Matrix glorot(int rows, int cols, std::mt19937_64& rng) {
    double limit = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
  }

  static ModelParams init(int n, int f, const ModelConfig& cfg,
                          std::mt19937_64& rng) {
    const int f2 = std::max(1, f / 2);
    const int n2 = std::max(1, n / 2);
    ModelParams p;
    p.w_mean = glorot(f, cfg.gcn_filters, rng);
    p.w_std = glorot(f, cfg.gcn_filters, rng);
    p.w_latent = glorot(cfg.gcn_filters, cfg.latent, rng);
    p.b_latent = Matrix::Zero(1, cfg.latent);
    p.w_feat1 = glorot(n, f2, rng);
    p.b_feat1 = Matrix::Zero(1, f2);
    p.w_feat2 = glorot(f2, f, rng);
    p.b_feat2 = Matrix::Zero(1, f);
    p.w_adj1 = glorot(n, n2, rng);
    p.b_adj1 = Matrix::Zero(1, n2);
    p.w_adj2 = glorot(n2, n, rng);
    p.b_adj2 = Matrix::Zero(1, n);
    return p;
  }

  std::vector<Matrix*> list() {
    return {&w_mean, &w_std, &w_latent, &b_latent, &w_feat1, &b_feat1,
            &w_feat2, &b_feat2, &w_adj1,  &b_adj1,  &w_adj2,  &b_adj2};
  }

  ad::NamedTensors named() const {
    return {{"w_mean", w_mean},     {"w_std", w_std},
            {"w_latent", w_latent}, {"b_latent", b_latent},
            {"w_feat1", w_feat1},   {"b_feat1", b_feat1},
            {"w_feat2", w_feat2},   {"b_feat2", b_feat2},
            {"w_adj1", w_adj1},     {"b_adj1", b_adj1},
            {"w_adj2", w_adj2},     {"b_adj2", b_adj2}};
  }

  static ModelParams from_named(const ad::NamedTensors& tensors) {
    ModelParams p;
    auto grab = [&](const std::string& name) -> Matrix {
      for (const auto& [n, m] : tensors)
        if (n == name) return m;
      throw IoError("checkpoint is missing tensor: " + name);
    };
    p.w_mean = grab("w_mean");
    p.w_std = grab("w_std");
    p.w_latent = grab("w_latent");
    p.b_latent = grab("b_latent");
    p.w_feat1 = grab("w_feat1");
    p.b_feat1 = grab("b_feat1");
    p.w_feat2 = grab("w_feat2");
    p.b_feat2 = grab("b_feat2");
    p.w_adj1 = grab("w_adj1");
    p.b_adj1 = grab("b_adj1");
    p.w_adj2 = grab("w_adj2");
    p.b_adj2 = grab("b_adj2");
    return p;
  }
};

// ------------------------------------------------------------ inputs

// Precomputed per-window constants shared by every training epoch.
struct ModelInputs {
  Matrix a_hat;      // propagation matrix
  Matrix x;          // feature matrix (embedding block zeroed when disabled)
  Matrix cm_target;  // normalized adjacency
  Matrix po_weights; // process block MSE weights: 0.1 where the true cell is 0
  FeatureMatrix::Block stat, embedding, process, significant;
};

inline ModelInputs make_inputs(const Matrix& cm_norm, const FeatureMatrix& fm,
                               const ModelConfig& cfg) {
  ModelInputs in;
  in.a_hat = gcn_propagation(cm_norm);
  in.x = fm.values;
  if (!cfg.use_embedding_block && fm.embedding.count > 0)
    in.x.middleCols(fm.embedding.offset, fm.embedding.count).setZero();
  in.cm_target = cm_norm;
  in.stat = fm.stat;
  in.embedding = fm.embedding;
  in.process = fm.process;
  in.significant = fm.significant;
  if (in.process.count > 0) {
    in.po_weights = Matrix::Constant(fm.rows(), in.process.count, 1.0);
    for (int i = 0; i < fm.rows(); ++i)
      for (int j = 0; j < in.process.count; ++j)
        if (in.x(i, in.process.offset + j) == 0.0) in.po_weights(i, j) = 0.1;
  }
  return in;
}

// ------------------------------------------------------------ forward

struct ParamVars {
  ad::Var w_mean, w_std, w_latent, b_latent;
  ad::Var w_feat1, b_feat1, w_feat2, b_feat2;
  ad::Var w_adj1, b_adj1, w_adj2, b_adj2;

  std::vector<ad::Var> list() const {
    return {w_mean, w_std, w_latent, b_latent, w_feat1, b_feat1,
            w_feat2, b_feat2, w_adj1,  b_adj1,  w_adj2,  b_adj2};
  }
};

inline ParamVars bind_params(ad::Tape& tape, const ModelParams& p) {
  ParamVars v;
  v.w_mean = tape.leaf(p.w_mean);
  v.w_std = tape.leaf(p.w_std);
  v.w_latent = tape.leaf(p.w_latent);
  v.b_latent = tape.leaf(p.b_latent);
  v.w_feat1 = tape.leaf(p.w_feat1);
  v.b_feat1 = tape.leaf(p.b_feat1);
  v.w_feat2 = tape.leaf(p.w_feat2);
  v.b_feat2 = tape.leaf(p.b_feat2);
  v.w_adj1 = tape.leaf(p.w_adj1);
  v.b_adj1 = tape.leaf(p.b_adj1);
  v.w_adj2 = tape.leaf(p.w_adj2);
  v.b_adj2 = tape.leaf(p.b_adj2);
  return v;
}

struct ForwardVars {
  ad::Var z_mean, z_std, z, z_act, s, cm_hat, fm_hat;
  ad::Var am, sf, emb, po, pf, re;  // per-node loss columns
  ad::Var kl, total;
};

// Builds the full training graph on the tape. In eval mode dropout is
// the identity and the latent is the encoder mean.
inline ForwardVars model_forward(ad::Tape& tape, const ParamVars& pv,
                                 const ModelInputs& in, const ModelConfig& cfg,
                                 std::mt19937_64& rng, bool training) {
  ForwardVars f;
  ad::Var a_hat = tape.constant(in.a_hat);
  ad::Var x = tape.constant(in.x);
  ad::Var cm_target = tape.constant(in.cm_target);
  ad::Var ax = ad::matmul(a_hat, x);

  f.z_mean = ad::dropout(ad::relu(ad::matmul(ax, pv.w_mean)), cfg.dropout_rate,
                         rng, training);
  if (cfg.variational) {
    ad::Var std_stack = ad::dropout(ad::relu(ad::matmul(ax, pv.w_std)),
                                    cfg.dropout_rate, rng, training);
    f.z_std = ad::softplus(std_stack);
    f.z = training ? ad::reparam_sample(f.z_mean, f.z_std, rng) : f.z_mean;
  } else {
    f.z = f.z_mean;
  }

  f.z_act = ad::sigmoid(ad::add_rowvec(ad::matmul(f.z, pv.w_latent), pv.b_latent));
  f.s = ad::sigmoid(ad::matmul(f.z_act, ad::transpose(f.z_act)));

  ad::Var feat_hidden =
      ad::sigmoid(ad::add_rowvec(ad::matmul(f.s, pv.w_feat1), pv.b_feat1));
  f.fm_hat =
      ad::sigmoid(ad::add_rowvec(ad::matmul(feat_hidden, pv.w_feat2), pv.b_feat2));
  ad::Var adj_hidden =
      ad::sigmoid(ad::add_rowvec(ad::matmul(f.s, pv.w_adj1), pv.b_adj1));
  f.cm_hat =
      ad::sigmoid(ad::add_rowvec(ad::matmul(adj_hidden, pv.w_adj2), pv.b_adj2));

  const int n = static_cast<int>(in.x.rows());
  auto block_loss = [&](FeatureMatrix::Block b, bool mse,
                        const Matrix* weights) -> ad::Var {
    if (b.count == 0) return tape.constant(Matrix::Zero(n, 1));
    ad::Var pred = ad::slice_cols(f.fm_hat, b.offset, b.count);
    ad::Var truth = ad::slice_cols(x, b.offset, b.count);
    return mse ? ad::mse_rows(pred, truth, weights)
               : ad::mae_rows(pred, truth);
  };

  f.am = ad::mae_rows(f.cm_hat, cm_target);
  f.sf = block_loss(in.stat, false, nullptr);
  f.emb = block_loss(in.embedding, false, nullptr);
  f.po = block_loss(in.process, true,
                    in.process.count > 0 ? &in.po_weights : nullptr);
  f.pf = block_loss(in.significant, true, nullptr);

  const ad::Var& alpha_term =
      cfg.alpha_binds == AlphaBinding::Stat ? f.sf : f.pf;
  f.re = ad::add(
      ad::add(ad::add(f.am, ad::scale(alpha_term, cfg.alpha)),
              ad::scale(f.emb, cfg.beta)),
      ad::add(ad::scale(f.po, cfg.gamma), ad::scale(f.pf, cfg.delta)));

  if (cfg.variational && cfg.kl_weight != 0.0) {
    ad::Var var = ad::elem_mul(f.z_std, f.z_std);
    ad::Var mu2 = ad::elem_mul(f.z_mean, f.z_mean);
    ad::Var inner = ad::add_scalar(
        ad::add(ad::add(var, mu2), ad::scale(ad::log(f.z_std), -2.0)), -1.0);
    f.kl = ad::scale(ad::mean_all(ad::rowsum(inner)), 0.5);
    f.total = ad::add(ad::mean_all(f.re), ad::scale(f.kl, cfg.kl_weight));
  } else {
    f.kl = tape.constant(Matrix::Zero(1, 1));
    f.total = ad::mean_all(f.re);
  }
  return f;
}

// ------------------------------------------------------------ loss

struct LossBreakdown {
  Eigen::VectorXd am, sf, emb, po, pf, re;
  double kl = 0.0;
  double total = 0.0;
};

// Closed-form loss on given reconstructions; mirrors the tape ops.
inline LossBreakdown compute_loss(const Matrix& cm_target, const Matrix& cm_hat,
                                  const ModelInputs& in, const Matrix& fm_hat,
                                  const ModelConfig& cfg, double kl = 0.0) {
  const Eigen::Index n = cm_target.rows();
  LossBreakdown out;
  out.am = cm_target.cols() > 0
               ? Eigen::VectorXd((cm_hat - cm_target).cwiseAbs().rowwise().sum() /
                                 double(cm_target.cols()))
               : Eigen::VectorXd::Zero(n);

  auto mae_block = [&](FeatureMatrix::Block b) -> Eigen::VectorXd {
    if (b.count == 0) return Eigen::VectorXd::Zero(n);
    Matrix diff = fm_hat.middleCols(b.offset, b.count) -
                  in.x.middleCols(b.offset, b.count);
    return diff.cwiseAbs().rowwise().sum() / double(b.count);
  };
  auto mse_block = [&](FeatureMatrix::Block b, const Matrix* w) -> Eigen::VectorXd {
    if (b.count == 0) return Eigen::VectorXd::Zero(n);
    Matrix diff = fm_hat.middleCols(b.offset, b.count) -
                  in.x.middleCols(b.offset, b.count);
    Matrix sq = diff.cwiseProduct(diff);
    if (w) sq = sq.cwiseProduct(*w);
    return sq.rowwise().sum() / double(b.count);
  };

  out.sf = mae_block(in.stat);
  out.emb = mae_block(in.embedding);
  out.po = mse_block(in.process, in.process.count > 0 ? &in.po_weights : nullptr);
  out.pf = mse_block(in.significant, nullptr);

  const Eigen::VectorXd& alpha_term =
      cfg.alpha_binds == AlphaBinding::Stat ? out.sf : out.pf;
  out.re = out.am + cfg.alpha * alpha_term + cfg.beta * out.emb +
           cfg.gamma * out.po + cfg.delta * out.pf;
  out.kl = kl;
  out.total = (n > 0 ? out.re.mean() : 0.0) + cfg.kl_weight * kl;
  return out;
}

inline LossBreakdown breakdown_from_forward(const ForwardVars& f,
                                            const ModelConfig& cfg) {
  LossBreakdown out;
  out.am = f.am.value().col(0);
  out.sf = f.sf.value().col(0);
  out.emb = f.emb.value().col(0);
  out.po = f.po.value().col(0);
  out.pf = f.pf.value().col(0);
  out.re = f.re.value().col(0);
  out.kl = f.kl.value()(0, 0);
  out.total = f.total.value()(0, 0);
  return out;
}

// ------------------------------------------------------------ training

struct TrainCurvePoint {
  double total, am, sf, emb, po, pf, kl;
};

struct TrainResult {
  ModelParams params;
  std::vector<TrainCurvePoint> curve;
  int diverged_at = -1;  // epoch index where a non-finite value stopped training
};

// Full-batch Adam for cfg.epochs epochs on a fresh tape per epoch. A
// non-finite loss or gradient aborts with the last good parameters.
inline TrainResult train_model(const Matrix& cm_norm, const FeatureMatrix& fm,
                               const ModelConfig& cfg) {
  cfg.validate();
  const int n = fm.rows(), f = fm.cols();
  if (n < 1 || f < 1) throw NumericError("empty window: nothing to train on");

  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  result.params = ModelParams::init(n, f, cfg, rng);
  ModelInputs inputs = make_inputs(cm_norm, fm, cfg);
  ad::Adam adam({cfg.lr});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Tape tape;
    ParamVars pv = bind_params(tape, result.params);
    ForwardVars fwd = model_forward(tape, pv, inputs, cfg, rng, true);

    double loss = fwd.total.value()(0, 0);
    if (!std::isfinite(loss)) {
      result.diverged_at = epoch;
      break;
    }
    LossBreakdown lb = breakdown_from_forward(fwd, cfg);
    result.curve.push_back({lb.total, lb.am.mean(), lb.sf.mean(), lb.emb.mean(),
                            lb.po.mean(), lb.pf.mean(), lb.kl});

    tape.backward(fwd.total);
    std::vector<Matrix> grads;
    grads.reserve(12);
    bool finite = true;
    for (const ad::Var& v : pv.list()) {
      grads.push_back(v.grad());
      finite = finite && ad::all_finite(grads.back());
    }
    if (!finite) {
      result.diverged_at = epoch;
      break;
    }
    adam.step(result.params.list(), grads);
  }
  return result;
}

// ------------------------------------------------------------ inference

struct Reconstruction {
  Matrix cm_hat, fm_hat;
  LossBreakdown loss;
};

// Deterministic eval-mode pass: dropout off, latent = encoder mean.
inline Reconstruction reconstruct(const ModelParams& params, const Matrix& cm_norm,
                                  const FeatureMatrix& fm, const ModelConfig& cfg) {
  ModelInputs in = make_inputs(cm_norm, fm, cfg);
  auto sigmoid = [](const Matrix& m) -> Matrix {
    return (1.0 / (1.0 + (-m.array()).exp())).matrix();
  };
  auto dense = [&](const Matrix& h, const Matrix& w, const Matrix& b) -> Matrix {
    Matrix out = h * w;
    out.rowwise() += Eigen::RowVectorXd(b.row(0));
    return sigmoid(out);
  };

  Matrix ax = in.a_hat * in.x;
  Matrix z_mean = (ax * params.w_mean).cwiseMax(0.0);
  Matrix z_act = dense(z_mean, params.w_latent, params.b_latent);
  Matrix s = sigmoid(z_act * z_act.transpose());

  Reconstruction r;
  r.fm_hat = dense(dense(s, params.w_feat1, params.b_feat1), params.w_feat2,
                   params.b_feat2);
  r.cm_hat = dense(dense(s, params.w_adj1, params.b_adj1), params.w_adj2,
                   params.b_adj2);
  r.loss = compute_loss(in.cm_target, r.cm_hat, in, r.fm_hat, cfg);
  return r;
}

}  // namespace netgad
