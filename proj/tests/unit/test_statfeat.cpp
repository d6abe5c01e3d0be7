#include <gtest/gtest.h>

#include <algorithm>

#include "wsym/optim.hpp"
#include "wsym/statfeat.hpp"

using namespace wsym;

namespace {

// Sort, then sums and linear interpolation at rank q (n - 1).
std::vector<double> stats_oracle(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  std::vector<double> out{mean, var};
  for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double pos = q * (n - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    out.push_back(lo + 1 < v.size() ? v[lo] + frac * (v[lo + 1] - v[lo]) : v[lo]);
  }
  return out;
}

void expect_chain(const Tensor& s) {
  for (std::size_t b = 0; b < s.size(); b += 7) {
    EXPECT_GE(s[b + 1], 0.0);
    for (std::size_t k = 2; k < 6; ++k) EXPECT_LE(s[b + k], s[b + k + 1]);
  }
}

}  // namespace

TEST(TensorStats, Examples) {
  EXPECT_EQ(tensor_stats(Tensor::full({4}, 2.5)).values(), (std::vector<double>{2.5, 0, 2.5, 2.5, 2.5, 2.5, 2.5}));
  EXPECT_EQ(tensor_stats(Tensor::vector({-3})).values(), (std::vector<double>{-3, 0, -3, -3, -3, -3, -3}));
  EXPECT_EQ(tensor_stats(Tensor::vector({4, 1, 5, 3, 2})).values(), (std::vector<double>{3, 2, 1, 2, 3, 4, 5}));
  EXPECT_THROW(tensor_stats(std::span<const double>{}), std::invalid_argument);
}

TEST(TensorStats, MatchesSortOracleExactly) {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> v(1 + rng.below(30));
    for (auto& x : v) x = k % 3 == 0 ? static_cast<double>(rng.below(3)) : rng.normal();
    EXPECT_EQ(tensor_stats(std::span<const double>(v)).values(), stats_oracle(v));
  }
}

TEST(TensorStats, PermutationAndAffineProperties) {
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> v(3 + rng.below(20));
    for (auto& x : v) x = rng.normal();
    const Tensor s = tensor_stats(std::span<const double>(v));
    expect_chain(s);
    auto w = v;
    rng.shuffle(w);
    EXPECT_EQ(tensor_stats(std::span<const double>(w)), s);
    const double a = rng.uniform(0.1, 3.0), c = rng.normal();
    for (auto& x : w) x = a * x + c;
    const Tensor t = tensor_stats(std::span<const double>(w));
    EXPECT_NEAR(t[0], a * s[0] + c, 1e-10);
    EXPECT_NEAR(t[1], a * a * s[1], 1e-10);
    for (std::size_t q = 2; q < 7; ++q) EXPECT_NEAR(t[q], a * s[q] + c, 1e-10);
  }
}

TEST(TensorStats, DifferentiableAwayFromTies) {
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const Tensor x = random_normal({9}, rng);
    const Tensor w = random_normal({7}, rng);
    const auto fn = [&](const ad::Var& v) { return ad::sum(ad::mul(tensor_stats(v), ad::Var::constant(w))); };
    EXPECT_LT(grad_check(fn, x), 1e-5);
  }
  // Quantile gradient lands on the defining order statistics only.
  const ad::Var v = ad::Var::param(Tensor::vector({5, 1, 4, 2, 3}));
  ad::backward(ad::slice(tensor_stats(v), 4, {1}));  // median = element 3 at index 4
  EXPECT_EQ(v.grad().values(), (std::vector<double>{0, 0, 0, 0, 1}));
}

TEST(StatFeatures, Layouts) {
  Rng rng(4);
  EXPECT_EQ(mlp_stat_features(random_mlp({2, 3}, rng)).size(), 14u);
  EXPECT_EQ(mlp_stat_features(random_mlp({2, 8, 8, 2}, rng)).size(), 42u);
  EXPECT_EQ(mha_stat_features(random_mha(2, 8, 4, 16, rng)).size(), 56u);
  EXPECT_EQ(mha_stat_features(random_mha(2, 8, 4, 0, rng)).size(), 28u);
  EXPECT_EQ(conv1d_stat_features(random_conv1d({2, 3, 1}, {3, 2}, rng)).size(), 28u);

  MlpParams z = random_mlp({2, 3, 2}, rng);
  for (auto& l : z.layers) l.weight = Tensor::zeros(l.weight.shape()), l.bias = Tensor::zeros(l.bias.shape());
  EXPECT_EQ(max_abs(mlp_stat_features(z)), 0.0);
  MhaBlockParams zm = random_mha(2, 4, 2, 4, rng);
  for (auto* ws : {&zm.wq, &zm.wk, &zm.wv, &zm.wo})
    for (auto& w : *ws) w = Tensor::zeros(w.shape());
  zm.ff = FeedForward{Tensor::zeros({4, 4}), Tensor::zeros({4}), Tensor::zeros({4, 4}), Tensor::zeros({4})};
  EXPECT_EQ(max_abs(mha_stat_features(zm)), 0.0);
}

TEST(StatFeatures, GoldenTwoThreeTwo) {
  Rng rng(42);
  const MlpParams p = random_mlp({2, 3, 2}, rng);
  const Tensor s = mlp_stat_features(p);
  std::vector<double> want;
  for (const auto& l : p.layers) {
    for (const auto* t : {&l.weight, &l.bias}) {
      const auto o = stats_oracle(t->values());
      want.insert(want.end(), o.begin(), o.end());
    }
  }
  EXPECT_EQ(s.values(), want);
  expect_chain(s);
}

TEST(StatFeatures, HeadPermutationInvariant) {
  Rng rng(5);
  const MhaBlockParams p = random_mha(3, 6, 2, 8, rng);
  MhaBlockParams q = p;
  for (auto* v : {&q.wq, &q.wk, &q.wv, &q.wo}) std::rotate(v->begin(), v->begin() + 2, v->end());
  EXPECT_EQ(mha_stat_features(q), mha_stat_features(p));
}
