#include <gtest/gtest.h>

#include <cmath>

#include "wsym/netmodels.hpp"
#include "wsym/serialize.hpp"
#include "wsym/symmetry.hpp"

using namespace wsym;

namespace {

// Scalar-loop Eq. (10) plus the ReLU feedforward, without matmul or softmax helpers.
Tensor mha_oracle(const MhaBlockParams& p, const Tensor& x) {
  const std::size_t L = x.dim(0), d = x.dim(1), dh = p.head_dim();
  std::vector<double> out(L * d, 0.0);
  for (std::size_t h = 0; h < p.heads(); ++h) {
    auto proj = [&](const Tensor& w, std::size_t t, std::size_t j) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += x.at(t, a) * w.at(a, j);
      return s;
    };
    for (std::size_t t = 0; t < L; ++t) {
      std::vector<double> logits(L);
      for (std::size_t u = 0; u < L; ++u) {
        double s = 0.0;
        for (std::size_t j = 0; j < dh; ++j) s += proj(p.wq[h], t, j) * proj(p.wk[h], u, j);
        logits[u] = s;
      }
      double mx = logits[0];
      for (double v : logits) mx = std::max(mx, v);
      double z = 0.0;
      for (double& v : logits) z += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t u = 0; u < L; ++u) {
          double vo = 0.0;
          for (std::size_t j = 0; j < dh; ++j) vo += proj(p.wv[h], u, j) * p.wo[h].at(c, j);
          acc += logits[u] / z * vo;
        }
        out[t * d + c] += acc;
      }
    }
  }
  if (!p.ff) return Tensor({L, d}, out);
  const auto& ff = *p.ff;
  const std::size_t df = ff.w_a.dim(0);
  std::vector<double> y(L * d);
  for (std::size_t t = 0; t < L; ++t) {
    std::vector<double> hid(df);
    for (std::size_t k = 0; k < df; ++k) {
      double s = ff.b_a[k];
      for (std::size_t c = 0; c < d; ++c) s += ff.w_a.at(k, c) * out[t * d + c];
      hid[k] = s > 0 ? s : 0.0;
    }
    for (std::size_t c = 0; c < d; ++c) {
      double s = ff.b_b[c];
      for (std::size_t k = 0; k < df; ++k) s += ff.w_b.at(c, k) * hid[k];
      y[t * d + c] = s;
    }
  }
  return Tensor({L, d}, y);
}

// Hand-rolled affine + ReLU chain.
std::vector<double> mlp_oracle(const MlpParams& p, std::vector<double> x) {
  for (std::size_t l = 0; l < p.depth(); ++l) {
    const auto& w = p.layers[l].weight;
    std::vector<double> y(w.dim(0));
    for (std::size_t r = 0; r < w.dim(0); ++r) {
      double s = p.layers[l].bias[r];
      for (std::size_t c = 0; c < w.dim(1); ++c) s += w.at(r, c) * x[c];
      y[r] = (l + 1 < p.depth() && s < 0) ? 0.0 : s;
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace

TEST(MlpForward, Examples) {
  MlpParams id{{{Tensor::identity(3), Tensor::zeros({3})}}};
  const Tensor x = Tensor::vector({1.5, -2.0, 0.25});
  EXPECT_EQ(mlp_forward(id, x), x);

  Rng rng(1);
  MlpParams zero = random_mlp({3, 4, 2}, rng);
  for (auto& l : zero.layers) l.weight = Tensor::zeros(l.weight.shape());
  EXPECT_EQ(mlp_forward(zero, x), zero.layers.back().bias);

  MlpParams p{{{Tensor::matrix({{1, -1}, {2, 0}, {-1, 3}}), Tensor::vector({0, -1, 1})},
               {Tensor::matrix({{1, 2, -1}, {0, 1, 1}}), Tensor::vector({1, 0})}}};
  for (const auto& in : std::vector<std::vector<double>>{{1, 2}, {-1, 0.5}, {3, -2}}) {
    const auto want = mlp_oracle(p, in);
    const Tensor got = mlp_forward(p, Tensor::vector(in));
    for (std::size_t i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(got[i], want[i]);
  }
  EXPECT_THROW(mlp_forward(p, Tensor::vector({1, 2, 3})), ShapeError);
}

TEST(Conv1dForward, Examples) {
  Conv1dParams diff{{{Tensor({1, 1, 2}, {1, -1}), Tensor::vector({0})}}};
  // Cross-correlation y[t] = x[t] - x[t+1]; the flipped-kernel convention would give [1, 2].
  const Tensor y = conv1d_forward(diff, Tensor({1, 3}, {1, 2, 4}));
  EXPECT_EQ(y, Tensor({1, 2}, {-1, -2}));

  Rng rng(2);
  Conv1dParams zero = random_conv1d({2, 3}, {2}, rng);
  zero.layers[0].filter = Tensor::zeros(zero.layers[0].filter.shape());
  const Tensor z = conv1d_forward(zero, random_normal({2, 5}, rng));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(z.at(r, t), zero.layers[0].bias[r]);
  EXPECT_THROW(conv1d_forward(zero, random_normal({2, 1}, rng)), ShapeError);
}

TEST(Conv1dForward, WindowOneIsPositionwiseMlp) {
  Rng rng(3);
  const Conv1dParams c = random_conv1d({3, 5, 2}, {1, 1}, rng);
  MlpParams m;
  for (const auto& l : c.layers) m.layers.push_back({l.filter.reshaped({l.filter.dim(0), l.filter.dim(1)}), l.bias});
  const Tensor x = random_normal({3, 6}, rng);
  const Tensor y = conv1d_forward(c, x);
  for (std::size_t t = 0; t < 6; ++t) {
    const Tensor yt = mlp_forward(m, Tensor::vector({x.at(0, t), x.at(1, t), x.at(2, t)}));
    for (std::size_t r = 0; r < 2; ++r) EXPECT_NEAR(y.at(r, t), yt[r], 1e-12);
  }
}

TEST(MhaForward, Examples) {
  Rng rng(4);
  MhaBlockParams p = random_mha(2, 4, 2, 0, rng);
  const Tensor x = random_normal({3, 4}, rng);

  MhaBlockParams zq = p;
  for (auto& w : zq.wq) w = Tensor::zeros(w.shape());
  const Tensor uz = mha_forward(zq, x);
  Tensor expect({4});
  for (std::size_t h = 0; h < 2; ++h) {
    const Tensor vo = matmul(matmul(x, p.wv[h]), p.wo[h].transposed());
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t c = 0; c < 4; ++c) expect[c] += vo.at(t, c) / 3.0;
  }
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(uz.at(t, c), expect[c], 1e-12);

  const Tensor x1 = random_normal({1, 4}, rng);
  Tensor one({1, 4});
  for (std::size_t h = 0; h < 2; ++h) one = one + matmul(matmul(x1, p.wv[h]), p.wo[h].transposed());
  EXPECT_LT(max_abs_diff(mha_forward(p, x1), one), 1e-12);
}

TEST(MhaForward, MatchesScalarLoopOracle) {
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    const MhaBlockParams p = random_mha(2, 4, 2, k % 2 ? 6 : 0, rng);
    const Tensor x = random_normal({3, 4}, rng);
    EXPECT_LT(max_abs_diff(mha_forward(p, x), mha_oracle(p, x)), 1e-12);
  }
  EXPECT_THROW(mha_forward(random_mha(2, 4, 2, 0, rng), random_normal({3, 5}, rng)), ShapeError);
}

TEST(MhaForward, HeadPermutationInvariant) {
  Rng rng(6);
  const MhaBlockParams p = random_mha(3, 6, 2, 8, rng);
  MhaBlockParams q = p;
  for (auto* v : {&q.wq, &q.wk, &q.wv, &q.wo}) std::rotate(v->begin(), v->begin() + 1, v->end());
  const Tensor x = random_normal({5, 6}, rng);
  EXPECT_LT(max_abs_diff(mha_forward(p, x), mha_forward(q, x)), 1e-12);
}

TEST(Serialize, RoundTripIsBitExact) {
  Rng rng(7);
  const std::vector<Params> ps{random_mlp({2, 5, 3, 1}, rng), random_conv1d({2, 3, 2}, {3, 2}, rng),
                               random_mha(2, 8, 4, 16, rng)};
  for (const auto& p : ps) {
    const Params back = deserialize(serialize(p));
    EXPECT_EQ(flatten_params(back), flatten_params(p));
    EXPECT_EQ(signature(back), signature(p));
  }
}

TEST(Serialize, RejectsMalformedAndWrongVersion) {
  Rng rng(8);
  const std::string s = serialize(random_mlp({2, 3, 1}, rng));
  EXPECT_THROW(deserialize(s.substr(0, s.size() / 2)), SchemaError);
  json j = parse_json(s);
  j["version"] = "weightsym/0";
  EXPECT_THROW(deserialize(dump_json(j)), SchemaError);
}

TEST(Serialize, GoldenHash) {
  Rng rng(42);
  const std::string s = serialize(random_mlp({2, 3, 2}, rng));
  EXPECT_EQ(hex64(fnv1a64(s)), "62470230be6b72b2");
}

TEST(MlpForward, MonomialHomogeneity) {
  Rng rng(9);
  for (int k = 0; k < 50; ++k) {
    const MlpParams p = random_mlp({3, 6, 5, 2}, rng);
    const MlpParams q = monomial_act(sample_monomial(hidden_dims(p), 1.0, 100.0, true, rng), p);
    const Tensor x = random_normal({3}, rng);
    EXPECT_LT(relative_diff(mlp_forward(q, x), mlp_forward(p, x)), 1e-9);
  }
}
