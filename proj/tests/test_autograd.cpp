#include <gtest/gtest.h>

#include "support.hpp"

using namespace tabeae;
using ag::Matrix;
using ag::Var;

namespace {

Matrix rnd(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Reduces any output to a scalar with fixed random weights so every entry
// of the output contributes to the check.
Var weighted_sum(const Var& y, const Matrix& w) { return ag::sum_all({ag::mul(y, ag::constant(w))}); }

void check(std::vector<Matrix> inputs, const std::function<Var(const std::vector<Var>&)>& f, double tol = 1e-6) {
  std::mt19937_64 rng(99);
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(ag::leaf(m));
  const Var y0 = f(leaves);
  const Matrix w = rnd(rng, static_cast<int>(y0.rows()), static_cast<int>(y0.cols()));
  ag::backward(weighted_sum(y0, w));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto eval = [&] {
      std::vector<Var> c;
      for (const auto& m : inputs) c.push_back(ag::constant(m));
      return weighted_sum(f(c), w).scalar();
    };
    const Matrix num = fixture::numeric_gradient(inputs[i], eval);
    Matrix ana = leaves[i].grad();
    if (ana.size() == 0) ana = Matrix::Zero(num.rows(), num.cols());
    EXPECT_LT(fixture::max_relative_error(ana, num), tol) << "input " << i;
  }
}

}  // namespace

TEST(Autograd, MatmulFamily) {
  std::mt19937_64 rng(1);
  check({rnd(rng, 3, 4), rnd(rng, 4, 2)}, [](auto& v) { return ag::matmul(v[0], v[1]); });
  check({rnd(rng, 3, 4), rnd(rng, 5, 4)}, [](auto& v) { return ag::matmul_nt(v[0], v[1]); });
}

TEST(Autograd, Elementwise) {
  std::mt19937_64 rng(2);
  check({rnd(rng, 3, 4), rnd(rng, 3, 4)}, [](auto& v) { return ag::add(v[0], v[1]); });
  check({rnd(rng, 3, 4), rnd(rng, 1, 4)}, [](auto& v) { return ag::add_row(v[0], v[1]); });
  check({rnd(rng, 3, 4), rnd(rng, 3, 4)}, [](auto& v) { return ag::mul(v[0], v[1]); });
  check({rnd(rng, 3, 4), rnd(rng, 1, 4)}, [](auto& v) { return ag::mul_row(v[0], v[1]); });
  check({rnd(rng, 3, 4)}, [](auto& v) { return ag::scale(v[0], -2.5); });
  check({rnd(rng, 3, 4)}, [](auto& v) { return ag::gelu(v[0]); });
}

TEST(Autograd, LayerNorm) {
  std::mt19937_64 rng(3);
  check({rnd(rng, 3, 6), rnd(rng, 1, 6), rnd(rng, 1, 6)},
        [](auto& v) { return ag::layer_norm(v[0], v[1], v[2]); }, 1e-5);
  const auto y = ag::layer_norm(ag::constant(rnd(rng, 2, 8)), ag::constant(Matrix::Ones(1, 8)),
                                ag::constant(Matrix::Zero(1, 8)));
  for (int r = 0; r < 2; ++r) EXPECT_NEAR(y.value().row(r).mean(), 0.0, 1e-12);
}

TEST(Autograd, MaskedSoftmax) {
  std::mt19937_64 rng(4);
  ag::AttentionMask mask{3, 4, {1, 0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 1}};
  check({rnd(rng, 3, 4)}, [&](auto& v) { return ag::softmax_rows(v[0], &mask); });
  const auto p = ag::softmax_rows(ag::constant(rnd(rng, 3, 4)), &mask);
  for (int r = 0; r < 3; ++r) EXPECT_NEAR(p.value().row(r).sum(), 1.0, 1e-12);
  EXPECT_EQ(p.value()(0, 1), 0.0);
  EXPECT_EQ(p.value()(1, 0), 0.0);
}

TEST(Autograd, RowPlumbing) {
  std::mt19937_64 rng(5);
  ag::RowRecipe recipe{{{0, 0.5}, {2, 0.5}}, {{1, 1.0}}, {}};
  check({rnd(rng, 3, 4)}, [&](auto& v) { return ag::combine_rows(v[0], recipe); });
  check({rnd(rng, 3, 4)}, [](auto& v) { return ag::gather_rows(v[0], {2, 0, 2}); });
  check({rnd(rng, 2, 3), rnd(rng, 1, 3)}, [](auto& v) { return ag::concat_rows({v[0], v[1]}); });
  check({rnd(rng, 2, 3), rnd(rng, 2, 1)}, [](auto& v) { return ag::concat_cols({v[0], v[1]}); });
  check({rnd(rng, 3, 5)}, [](auto& v) { return ag::slice_cols(v[0], 1, 3); });
  check({rnd(rng, 3, 5)}, [](auto& v) { return ag::slice_rows(v[0], 1, 2); });
}

TEST(Autograd, NllOfSoftmax) {
  std::mt19937_64 rng(6);
  check({rnd(rng, 1, 7)}, [](auto& v) { return ag::nll_of_softmax(v[0], 3); });
  check({rnd(rng, 5, 1)}, [](auto& v) { return ag::nll_of_softmax(v[0], 0); });
  EXPECT_THROW(ag::nll_of_softmax(ag::constant(rnd(rng, 1, 3)), 3), ShapeError);
  EXPECT_THROW(ag::nll_of_softmax(ag::constant(rnd(rng, 2, 3)), 0), ShapeError);
}

TEST(Autograd, SharedSubgraphAccumulates) {
  std::mt19937_64 rng(7);
  check({rnd(rng, 2, 2)}, [](auto& v) {
    auto h = ag::gelu(v[0]);
    return ag::add(ag::matmul(h, h), h);
  });
}

TEST(Autograd, NoGradGuardSkipsGraph) {
  auto x = ag::leaf(Matrix::Ones(2, 2));
  ag::NoGradGuard guard;
  auto y = ag::scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, DropoutIdentityWithoutRng) {
  std::mt19937_64 rng(8);
  const Matrix m = rnd(rng, 3, 3);
  EXPECT_EQ(ag::dropout(ag::constant(m), 0.5, nullptr).value(), m);
  const auto d = ag::dropout(ag::constant(Matrix::Ones(50, 50)), 0.5, &rng).value();
  for (Eigen::Index i = 0; i < d.size(); ++i) EXPECT_TRUE(d.data()[i] == 0.0 || d.data()[i] == 2.0);
}
