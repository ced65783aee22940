#include <random>

#include <catch_amalgamated.hpp>

#include "gradcheck.hpp"
#include "netgad/autodiff.hpp"
#include "oracles.hpp"

using namespace netgad;
namespace ad = netgad::ad;
using ad::Matrix;
using gradcheck::max_rel_fd_error;

namespace {

// Random values bounded away from relu/abs kinks so finite differences
// stay clean.
Matrix kink_free(std::mt19937_64& rng, int rows, int cols) {
  std::uniform_real_distribution<double> mag(0.2, 1.5);
  std::uniform_int_distribution<int> coin(0, 1);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = (coin(rng) ? 1 : -1) * mag(rng);
  return m;
}

}  // namespace

TEST_CASE("elementwise forward values") {
  ad::Tape t;
  Matrix zero = Matrix::Zero(1, 1);
  CHECK(ad::sigmoid(t.leaf(zero)).value()(0, 0) == 0.5);

  Matrix v(1, 3);
  v << -1.0, 0.0, 2.0;
  CHECK(ad::relu(t.leaf(v)).value()(0, 2) == 2.0);
  CHECK(ad::relu(t.leaf(v)).value()(0, 0) == 0.0);

  // softplus: ln(1 + e^x), stable at extremes
  auto sp = ad::softplus(t.leaf(v));
  CHECK(sp.value()(0, 1) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  Matrix big(1, 2);
  big << 800.0, -800.0;
  auto sp_big = ad::softplus(t.leaf(big));
  CHECK(sp_big.value()(0, 0) == Catch::Approx(800.0));
  CHECK(sp_big.value()(0, 1) >= 0.0);
  CHECK(std::isfinite(sp_big.value()(0, 1)));
}

TEST_CASE("dropout is identity off-training and rescales when on") {
  Matrix v = Matrix::Constant(4, 4, 2.0);
  std::mt19937_64 rng(5);
  ad::Tape t;
  auto off = ad::dropout(t.leaf(v), 0.5, rng, false);
  CHECK(off.value() == v);
  auto zero_rate = ad::dropout(t.leaf(v), 0.0, rng, true);
  CHECK(zero_rate.value() == v);

  std::mt19937_64 r1(7), r2(7);
  ad::Tape t2;
  auto a = ad::dropout(t2.leaf(v), 0.5, r1, true);
  auto b = ad::dropout(t2.leaf(v), 0.5, r2, true);
  CHECK(a.value() == b.value());  // same seed, same mask
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double x = a.value()(i, j);
      CHECK((x == 0.0 || x == 4.0));  // dropped or scaled by 1/(1-rate)
    }

  std::mt19937_64 r3(1);
  CHECK_THROWS_AS(ad::dropout(t2.leaf(v), 1.0, r3, true), NumericError);
}

TEST_CASE("backward on sum gives all-ones") {
  ad::Tape t;
  std::mt19937_64 rng(3);
  auto w = t.leaf(oracle::random_matrix(rng, 3, 4));
  auto loss = ad::scale(ad::mean_all(w), 12.0);  // = sum(w)
  t.backward(loss);
  CHECK((w.grad() - Matrix::Ones(3, 4)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward requires a scalar") {
  ad::Tape t;
  auto w = t.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(w), NumericError);
}

TEST_CASE("zero_grad then backward is idempotent") {
  std::mt19937_64 rng(17);
  ad::Tape t;
  auto w = t.leaf(kink_free(rng, 3, 3));
  auto x = t.leaf(kink_free(rng, 3, 3));
  auto loss = ad::mean_all(ad::sigmoid(ad::matmul(w, x)));
  t.backward(loss);
  Matrix first = w.grad();
  t.zero_grad();
  t.backward(loss);
  CHECK((w.grad() - first).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("every op passes central finite differences") {
  std::mt19937_64 seed_rng(101);
  auto tol_ok = [](const gradcheck::Report& r) {
    UNSCOPED_INFO("max rel error " << r.max_rel_error << " over " << r.checked
                                   << " entries");
    return r.max_rel_error < 1e-4;
  };

  SECTION("add, sub, scale, add_scalar") {
    std::vector<Matrix> p{kink_free(seed_rng, 2, 3), kink_free(seed_rng, 2, 3)};
    auto rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      l.push_back(t.leaf(p[1]));
      auto s = ad::add_scalar(ad::scale(ad::sub(ad::add(l[0], l[1]), l[1]), 1.7), 0.3);
      return ad::mean_all(ad::elem_mul(s, s));
    });
    CHECK(tol_ok(rep));
  }

  SECTION("add_rowvec broadcasts a bias row") {
    std::vector<Matrix> p{kink_free(seed_rng, 4, 3), kink_free(seed_rng, 1, 3)};
    auto rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      l.push_back(t.leaf(p[1]));
      return ad::mean_all(ad::sigmoid(ad::add_rowvec(l[0], l[1])));
    });
    CHECK(tol_ok(rep));
  }

  SECTION("matmul and transpose") {
    std::vector<Matrix> p{kink_free(seed_rng, 3, 4), kink_free(seed_rng, 4, 2)};
    auto rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      l.push_back(t.leaf(p[1]));
      auto prod = ad::matmul(l[0], l[1]);                     // 3x2
      auto gram = ad::matmul(prod, ad::transpose(prod));      // 3x3
      return ad::mean_all(gram);
    });
    CHECK(tol_ok(rep));
  }

  SECTION("slice_cols routes gradients to the right columns") {
    std::vector<Matrix> p{kink_free(seed_rng, 3, 6)};
    auto rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      auto mid = ad::slice_cols(l[0], 2, 3);
      return ad::mean_all(ad::elem_mul(mid, mid));
    });
    CHECK(tol_ok(rep));
    // untouched columns get zero gradient
    ad::Tape t;
    auto leaf = t.leaf(p[0]);
    auto loss = ad::mean_all(ad::slice_cols(leaf, 2, 3));
    t.backward(loss);
    CHECK(leaf.grad().col(0).isZero());
    CHECK(leaf.grad().col(5).isZero());
    CHECK_FALSE(leaf.grad().col(3).isZero());
  }

  SECTION("sigmoid, relu, softplus, log chains") {
    std::vector<Matrix> p{kink_free(seed_rng, 3, 3)};
    auto rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      auto s = ad::sigmoid(l[0]);            // (0,1): log-safe
      auto chain = ad::log(ad::add_scalar(ad::relu(ad::softplus(s)), 0.1));
      return ad::mean_all(chain);
    });
    CHECK(tol_ok(rep));
  }

  SECTION("dropout with a frozen mask") {
    std::vector<Matrix> p{kink_free(seed_rng, 4, 4)};
    auto rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      std::mt19937_64 rng(99);  // same mask on every rebuild
      auto d = ad::dropout(l[0], 0.5, rng, true);
      return ad::mean_all(ad::elem_mul(d, d));
    });
    CHECK(tol_ok(rep));
  }

  SECTION("reparameterized sample with frozen noise") {
    std::vector<Matrix> p{kink_free(seed_rng, 3, 2),
                          oracle::random_matrix(seed_rng, 3, 2, 0.5, 1.5)};
    auto rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      l.push_back(t.leaf(p[1]));
      std::mt19937_64 rng(17);
      auto z = ad::reparam_sample(l[0], l[1], rng);
      return ad::mean_all(ad::elem_mul(z, z));
    });
    CHECK(tol_ok(rep));
  }

  SECTION("row losses, plain and weighted") {
    // keep |a - b| away from zero so the mae subgradient is clean
    Matrix a = oracle::random_matrix(seed_rng, 4, 3, 1.0, 2.0);
    Matrix b = oracle::random_matrix(seed_rng, 4, 3, -1.0, -0.2);
    Matrix w = oracle::random_matrix(seed_rng, 4, 3, 0.1, 1.0);
    std::vector<Matrix> p{a, b};
    auto mae_rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      l.push_back(t.leaf(p[1]));
      return ad::mean_all(ad::mae_rows(l[0], l[1]));
    });
    CHECK(tol_ok(mae_rep));
    auto mse_rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      l.push_back(t.leaf(p[1]));
      return ad::mean_all(ad::mse_rows(l[0], l[1], &w));
    });
    CHECK(tol_ok(mse_rep));
  }

  SECTION("rowsum and mean_all") {
    std::vector<Matrix> p{kink_free(seed_rng, 3, 5)};
    auto rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      auto r = ad::rowsum(l[0]);
      return ad::mean_all(ad::elem_mul(r, r));
    });
    CHECK(tol_ok(rep));
  }

  SECTION("parameter reused on two paths sums both contributions") {
    std::vector<Matrix> p{kink_free(seed_rng, 3, 3)};
    auto rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      auto path1 = ad::sigmoid(l[0]);
      auto path2 = ad::matmul(l[0], ad::transpose(l[0]));
      return ad::add(ad::mean_all(path1), ad::mean_all(path2));
    });
    CHECK(tol_ok(rep));
  }

  SECTION("mse of sigmoid(XW) against a target") {
    Matrix x = kink_free(seed_rng, 4, 3);
    Matrix target = oracle::random_matrix(seed_rng, 4, 3);
    std::vector<Matrix> p{kink_free(seed_rng, 3, 3)};
    auto rep = max_rel_fd_error(p, [&](ad::Tape& t, std::vector<ad::Var>& l) {
      l.push_back(t.leaf(p[0]));
      auto pred = ad::sigmoid(ad::matmul(t.constant(x), l[0]));
      return ad::mean_all(ad::mse_rows(pred, t.constant(target)));
    });
    CHECK(tol_ok(rep));
  }
}

TEST_CASE("mae at the minimum uses subgradient zero") {
  ad::Tape t;
  Matrix v = Matrix::Constant(2, 3, 0.4);
  auto a = t.leaf(v);
  auto b = t.leaf(v);
  auto loss = ad::mean_all(ad::mae_rows(a, b));
  CHECK(loss.value()(0, 0) == 0.0);
  t.backward(loss);
  CHECK(a.grad().isZero());
  CHECK(b.grad().isZero());
}

TEST_CASE("reparameterization reduces to the mean as std vanishes") {
  ad::Tape t;
  std::mt19937_64 rng(23);
  Matrix mean = Matrix::Constant(3, 2, 0.7);
  Matrix tiny_raw = Matrix::Constant(3, 2, -40.0);  // softplus(-40) ~ 4e-18
  auto std_v = ad::softplus(t.leaf(tiny_raw));
  auto z = ad::reparam_sample(t.leaf(mean), std_v, rng);
  CHECK((z.value() - mean).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("adam follows the reference scalar path on a quadratic") {
  // independent simulation first; the optimizer must match it exactly
  auto path = oracle::adam_scalar_path(1.0, 0.1, 20);

  ad::AdamConfig cfg;
  cfg.lr = 0.1;
  ad::Adam adam(cfg);
  Matrix x = Matrix::Constant(1, 1, 1.0);
  for (int step = 0; step < 20; ++step) {
    Matrix g = 2.0 * x;
    adam.step({&x}, {g});
    REQUIRE(x(0, 0) == Catch::Approx(path[size_t(step)]).margin(1e-12));
  }

  // |x| shrinks through step 11, then momentum overshoots zero; the run
  // still ends far below the start
  for (int step = 1; step < 11; ++step)
    CHECK(std::abs(path[size_t(step)]) < std::abs(path[size_t(step) - 1]));
  CHECK(std::abs(path.back()) < 0.3);
  CHECK(adam.steps() == 20);
}

TEST_CASE("adam first step moves by about lr in the gradient direction") {
  ad::Adam adam;  // defaults: lr 0.01
  Matrix x = Matrix::Constant(1, 2, 5.0);
  Matrix g(1, 2);
  g << 3.0, -0.25;
  adam.step({&x}, {g});
  CHECK(x(0, 0) == Catch::Approx(5.0 - 0.01).epsilon(1e-6));
  CHECK(x(0, 1) == Catch::Approx(5.0 + 0.01).epsilon(1e-6));
}

TEST_CASE("adam leaves parameters alone on zero gradient") {
  ad::Adam adam;
  Matrix x = Matrix::Constant(2, 2, 1.5);
  adam.step({&x}, {Matrix::Zero(2, 2)});
  CHECK(x == Matrix::Constant(2, 2, 1.5));
}

TEST_CASE("adam rejects non-finite gradients") {
  ad::Adam adam;
  Matrix x = Matrix::Ones(1, 1);
  Matrix g = Matrix::Constant(1, 1, std::nan(""));
  CHECK_THROWS_AS(adam.step({&x}, {g}), NumericError);
}

TEST_CASE("checkpoints round trip named tensors") {
  ad::NamedTensors tensors;
  std::mt19937_64 rng(77);
  tensors.emplace_back("w_mean", oracle::random_matrix(rng, 3, 4));
  tensors.emplace_back("bias", oracle::random_matrix(rng, 1, 4));
  ad::save_checkpoint("test_ckpt_tmp.bin", tensors);
  ad::NamedTensors back = ad::load_checkpoint("test_ckpt_tmp.bin");
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "w_mean");
  CHECK(back[0].second == tensors[0].second);
  CHECK(back[1].first == "bias");
  CHECK(back[1].second == tensors[1].second);
  std::remove("test_ckpt_tmp.bin");

  std::ofstream bad("test_ckpt_bad.bin", std::ios::binary);
  bad << "NOTMAGIC";
  bad.close();
  CHECK_THROWS_AS(ad::load_checkpoint("test_ckpt_bad.bin"), IoError);
  std::remove("test_ckpt_bad.bin");
}
