#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "wsym/autodiff.hpp"
#include "wsym/linalg.hpp"
#include "wsym/metrics.hpp"
#include "wsym/optim.hpp"
#include "wsym/rng.hpp"
#include "wsym/tensor.hpp"

using namespace wsym;
using ad::Var;

namespace {

Tensor randn(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

// Values bounded away from zero so ReLU stays smooth under central differences.
Tensor away_from_zero(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.5);
  return t;
}

// O(n^2) tau-b oracle.
double brute_tau(const std::vector<double>& x, const std::vector<double>& y) {
  long long nc = 0, nd = 0, tx = 0, ty = 0;
  const long long n = static_cast<long long>(x.size());
  for (long long i = 0; i < n; ++i) {
    for (long long j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0) ++tx;
      if (dy == 0) ++ty;
      if (dx == 0 || dy == 0) continue;
      (dx * dy > 0 ? nc : nd)++;
    }
  }
  const long long n0 = n * (n - 1) / 2;
  if (tx == n0 || ty == n0) return 0.0;
  return static_cast<double>(nc - nd) / std::sqrt(static_cast<double>(n0 - tx) * static_cast<double>(n0 - ty));
}

}  // namespace

TEST(Tensor, RejectsNonFiniteAndBadShapes) {
  EXPECT_THROW(Tensor({2}, {1.0, std::numeric_limits<double>::quiet_NaN()}), NumericError);
  EXPECT_THROW(Tensor({2}, {1.0, std::numeric_limits<double>::infinity()}), NumericError);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST(Matmul, Examples) {
  Rng rng(1);
  const Tensor a = randn({3, 3}, rng);
  EXPECT_EQ(matmul(Tensor::identity(3), a), a);
  EXPECT_EQ(max_abs(matmul(a, Tensor::zeros({3, 2}))), 0.0);
  const Tensor r = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5}, {6}}));
  EXPECT_EQ(r, Tensor::matrix({{17}, {39}}));
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Softmax, Examples) {
  const Tensor z = softmax_rows(Tensor::zeros({1, 4}));
  for (double v : z.data()) EXPECT_DOUBLE_EQ(v, 0.25);
  const Tensor c = softmax_rows(Tensor::full({1, 3}, 7.5));
  for (double v : c.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  const Tensor l = softmax_rows(Tensor::matrix({{0.0, std::log(2.0)}}));
  EXPECT_NEAR(l[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(l[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, RowsSumToOneAtLargeMagnitude) {
  Rng rng(2);
  for (int k = 0; k < 50; ++k) {
    const Tensor s = softmax_rows(randn({4, 9}, rng, 1e3));
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 9; ++c) {
        EXPECT_GE(s.at(r, c), 0.0);
        sum += s.at(r, c);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(GradCheck, Trivial) {
  Rng rng(3);
  const Tensor x = randn({5}, rng);
  EXPECT_EQ(grad_check([](const Var&) { return Var::constant(Tensor::scalar(2.0)); }, x), 0.0);
  EXPECT_LT(grad_check([](const Var& v) { return ad::scale(ad::sum(ad::mul(v, v)), 0.5); }, x), 1e-7);
}

TEST(GradCheck, RejectsNonFiniteGradient) {
  const auto fn = [](const Var& v) {
    const Var bad = ad::make_op(v.value(), {v}, [](ad::Node& n) {
      const std::vector<double> g(n.value.size(), std::numeric_limits<double>::infinity());
      n.parents[0]->accumulate(g);
    });
    return ad::sum(bad);
  };
  EXPECT_THROW(grad_check(fn, Tensor::vector({1.0, 2.0})), NumericError);
}

// Every differentiable op at 100 random smooth points, as a weighted sum so no
// gradient entry is trivially constant.
TEST(GradCheck, EveryOp) {
  Rng rng(4);
  struct Case {
    const char* name;
    Shape shape;
    std::function<Var(const Var&, const Tensor&)> op;  // second arg: fixed random companion
    bool smooth_relu = false;
  };
  const std::vector<Case> cases = {
      {"matmul", {3, 4}, [](const Var& x, const Tensor& c) { return ad::matmul(x, Var::constant(c.reshaped({4, 3}))); }},
      {"matmul_rhs", {4, 3}, [](const Var& x, const Tensor& c) { return ad::matmul(Var::constant(c.reshaped({3, 4})), x); }},
      {"transpose", {3, 4}, [](const Var& x, const Tensor&) { return ad::transpose(x); }},
      {"add", {3, 4}, [](const Var& x, const Tensor& c) { return ad::add(x, ad::mul(x, Var::constant(c))); }},
      {"sub", {3, 4}, [](const Var& x, const Tensor& c) { return ad::sub(Var::constant(c), ad::mul(x, x)); }},
      {"mul", {3, 4}, [](const Var& x, const Tensor&) { return ad::mul(x, x); }},
      {"scale", {3, 4}, [](const Var& x, const Tensor&) { return ad::scale(x, -2.5); }},
      {"add_scalar", {3, 4}, [](const Var& x, const Tensor&) { return ad::mul(ad::add_scalar(x, 1.5), x); }},
      {"mul_scalar", {3, 4}, [](const Var& x, const Tensor&) { return ad::mul_scalar(x, ad::slice(x, 5, {1})); }},
      {"add_row_broadcast", {3, 4}, [](const Var& x, const Tensor&) { return ad::add_row_broadcast(x, ad::slice(x, 0, {4})); }},
      {"add_col_broadcast", {3, 4}, [](const Var& x, const Tensor&) { return ad::add_col_broadcast(x, ad::slice(x, 2, {3})); }},
      {"relu", {3, 4}, [](const Var& x, const Tensor&) { return ad::relu(x); }, true},
      {"sigmoid", {3, 4}, [](const Var& x, const Tensor&) { return ad::sigmoid(x); }},
      {"sin", {3, 4}, [](const Var& x, const Tensor&) { return ad::sin(x); }},
      {"tanh", {3, 4}, [](const Var& x, const Tensor&) { return ad::tanh(x); }},
      {"asinh", {3, 4}, [](const Var& x, const Tensor&) { return ad::asinh(ad::scale(x, 3.0)); }},
      {"softmax_rows", {3, 4}, [](const Var& x, const Tensor&) { return ad::softmax_rows(x); }},
      {"sum", {3, 4}, [](const Var& x, const Tensor&) { return ad::mul(ad::reshape(ad::sum(x), {1}), ad::slice(x, 1, {1})); }},
      {"mean", {3, 4}, [](const Var& x, const Tensor&) { return ad::mul(ad::mean(x), ad::slice(x, 3, {1})); }},
      {"reshape", {3, 4}, [](const Var& x, const Tensor&) { return ad::mul(ad::reshape(x, {12}), ad::reshape(x, {12})); }},
      {"slice", {3, 4}, [](const Var& x, const Tensor&) { return ad::slice(ad::mul(x, x), 4, {2, 3}); }},
      {"concat_cols", {3, 4}, [](const Var& x, const Tensor&) { return ad::concat_cols({x, ad::mul(x, x)}); }},
      {"concat", {3, 4}, [](const Var& x, const Tensor&) { return ad::concat({ad::sin(x), x}); }},
      {"inverse", {3, 3}, [](const Var& x, const Tensor&) {
         return ad::inverse(ad::add(Var::constant(Tensor::identity(3)), ad::scale(x, 0.2)));
       }},
      {"bce_loss", {3, 4}, [](const Var& x, const Tensor& c) {
         Tensor t = c;
         for (auto& v : t.data()) v = v > 0 ? 1.0 : 0.3;
         return ad::bce_loss(ad::sigmoid(x), t);
       }},
      {"mse_loss", {3, 4}, [](const Var& x, const Tensor& c) { return ad::mse_loss(x, c); }},
  };
  for (const auto& cs : cases) {
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const Tensor x = cs.smooth_relu ? away_from_zero(cs.shape, rng) : randn(cs.shape, rng);
      const Tensor companion = randn(cs.shape, rng);
      Tensor weights;
      const auto fn = [&](const Var& v) {
        const Var out = cs.op(v, companion);
        if (weights.empty()) {
          Rng wr(static_cast<std::uint64_t>(k) + 99);
          weights = randn(out.shape(), wr);
        }
        return ad::sum(ad::mul(out, Var::constant(weights)));
      };
      worst = std::max(worst, grad_check(fn, x));
    }
    EXPECT_LT(worst, 1e-5) << cs.name;
  }
}

TEST(Autodiff, BackwardVisitsSharedNodeOnce) {
  const Var x = Var::param(Tensor::vector({2.0}));
  const Var y = ad::mul(x, x);
  const Var z = ad::add(y, y);  // dz/dx = 4x
  ad::backward(ad::sum(z));
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
  EXPECT_EQ(x.grad().shape(), x.shape());
}

TEST(Adam, Examples) {
  std::vector<Tensor> p{Tensor::vector({0.3, -1.2})};
  const std::vector<Tensor> g{Tensor::vector({0.5, 2.0})};
  AdamState zero_lr(p, {0.0});
  auto q = p;
  zero_lr.step(q, g);
  EXPECT_EQ(q, p);

  AdamState st(p);
  auto r = p;
  st.step(r, {Tensor::vector({0.0, 0.0})});
  EXPECT_EQ(r, p);
  EXPECT_EQ(st.steps(), 1u);

  std::vector<Tensor> s{Tensor::scalar(1.0)};
  AdamState one(s, {0.001});
  one.step(s, {Tensor::scalar(1.0)});
  // m_hat = 1, v_hat = 1: step = lr / (1 + eps).
  EXPECT_NEAR(1.0 - s[0][0], 0.001, 1e-10);
  EXPECT_THROW(one.step(s, {Tensor::vector({1.0, 2.0})}), ShapeError);
}

TEST(Bce, Examples) {
  EXPECT_NEAR(ad::bce_loss(Var::constant(Tensor::vector({0.5})), Tensor::vector({1.0})).value()[0],
              std::log(2.0), 1e-15);
  EXPECT_NEAR(ad::bce_loss(Var::constant(Tensor::vector({0.9, 0.1})), Tensor::vector({1.0, 0.0})).value()[0],
              -std::log(0.9), 1e-15);
  const double exact = ad::bce_loss(Var::constant(Tensor::vector({1.0, 0.0})), Tensor::vector({1.0, 0.0})).value()[0];
  EXPECT_NEAR(exact, -std::log(1.0 - ad::kBceClamp), 1e-15);
}

TEST(Kendall, Examples) {
  const std::vector<double> a{1, 2, 3, 4}, rev{4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(kendall_tau(a, a), 1.0);
  EXPECT_DOUBLE_EQ(kendall_tau(a, rev), -1.0);
  EXPECT_DOUBLE_EQ(kendall_tau(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}), 1.0 / 3.0);
  const auto c = kendall_tau_b(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3});
  EXPECT_EQ(c.tau, 0.0);
  EXPECT_TRUE(c.degenerate);
  EXPECT_THROW(kendall_tau(std::vector<double>{1, 2}, std::vector<double>{1}), std::invalid_argument);
  EXPECT_THROW(kendall_tau(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
}

TEST(Kendall, MatchesBruteForceExactly) {
  Rng rng(5);
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 2 + rng.below(19);
    std::vector<double> x(n), y(n);
    const bool ties = k % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = ties ? static_cast<double>(rng.below(4)) : rng.normal();
      y[i] = ties ? static_cast<double>(rng.below(4)) : rng.normal();
    }
    EXPECT_EQ(kendall_tau(x, y), brute_tau(x, y)) << "instance " << k;
  }
}

TEST(Kendall, InvariantUnderMonotoneTransforms) {
  Rng rng(6);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x(15), y(15), x3(15), ey(15);
    for (std::size_t i = 0; i < 15; ++i) {
      x[i] = rng.normal();
      y[i] = rng.normal();
      x3[i] = x[i] * x[i] * x[i] + x[i];
      ey[i] = std::exp(y[i]);
    }
    EXPECT_NEAR(kendall_tau(x3, ey), kendall_tau(x, y), 1e-12);
  }
}

TEST(Linalg, InverseAndDeterminant) {
  const Tensor a = Tensor::matrix({{4, 7}, {2, 6}});
  EXPECT_NEAR(linalg::determinant(a), 10.0, 1e-12);
  EXPECT_LT(max_abs_diff(matmul(a, linalg::inverse(a)), Tensor::identity(2)), 1e-14);
  EXPECT_EQ(linalg::numerical_rank(Tensor::matrix({{1, 2}, {2, 4}}), 1e-8), 1u);
}

TEST(Rng, StreamsAreDeterministicAndDistinct) {
  Rng a = Rng::stream(7, 1), b = Rng::stream(7, 1), c = Rng::stream(7, 2);
  const auto x = a.next();
  EXPECT_EQ(x, b.next());
  EXPECT_NE(x, c.next());
}
