#include <gtest/gtest.h>

#include "wsym/linalg.hpp"
#include "wsym/symmetry.hpp"

using namespace wsym;

TEST(MonomialAct, IdentityIsBitExact) {
  Rng rng(1);
  const MlpParams p = random_mlp({3, 6, 5, 2}, rng);
  EXPECT_EQ(flatten_params(monomial_act(monomial_identity(hidden_dims(p)), p)), flatten_params(p));
  const Conv1dParams c = random_conv1d({2, 4, 3}, {3, 2}, rng);
  EXPECT_EQ(flatten_params(monomial_act(monomial_identity(hidden_dims(c)), c)), flatten_params(c));
}

TEST(MonomialAct, HandExample) {
  MlpParams p{{{Tensor::matrix({{1}, {2}}), Tensor::zeros({2})}, {Tensor::matrix({{1, 1}}), Tensor::zeros({1})}}};
  MonomialElement g{{{{0, 1}, {2.0, 0.5}}}};
  const MlpParams q = monomial_act(g, p);
  EXPECT_EQ(q.layers[0].weight, Tensor::matrix({{2}, {1}}));
  EXPECT_EQ(q.layers[1].weight, Tensor::matrix({{0.5, 2}}));
  EXPECT_DOUBLE_EQ(mlp_forward(p, Tensor::vector({1}))[0], 3.0);
  EXPECT_DOUBLE_EQ(mlp_forward(q, Tensor::vector({1}))[0], 3.0);
}

TEST(MonomialAct, PurePermutationPreservesFunction) {
  Rng rng(2);
  const MlpParams p = random_mlp({3, 6, 5, 2}, rng);
  const MlpParams q = monomial_act(sample_monomial(hidden_dims(p), 1.0, 1.0, true, rng), p);
  for (int k = 0; k < 100; ++k) {
    const Tensor x = random_normal({3}, rng);
    EXPECT_LT(max_abs_diff(mlp_forward(p, x), mlp_forward(q, x)), 1e-12);
  }
}

TEST(MonomialAct, Errors) {
  Rng rng(3);
  const MlpParams p = random_mlp({3, 6, 5, 2}, rng);
  EXPECT_THROW(monomial_act(monomial_identity({6}), p), std::invalid_argument);
  MonomialElement bad = monomial_identity({6, 5});
  bad.layers[0].scale[2] = -1.0;
  EXPECT_THROW(monomial_act(bad, p), GroupError);
  bad.layers[0].scale[2] = 1.0;
  bad.layers[0].perm[0] = 1;
  EXPECT_THROW(monomial_act(bad, p), GroupError);
}

TEST(GlAct, Examples) {
  Rng rng(4);
  const MhaBlockParams p = random_mha(2, 8, 4, 16, rng);
  EXPECT_EQ(flatten_params(gl_act(gl_identity(2, 4), p)), flatten_params(p));

  const MhaBlockParams s = random_mha(1, 3, 1, 0, rng);
  GlMhaElement g = gl_identity(1, 1);
  g.u[0] = Tensor::matrix({{2.5}});
  const MhaBlockParams t = gl_act(g, s);
  const Tensor x = random_normal({4, 3}, rng);
  EXPECT_LT(relative_diff(mha_forward(t, x), mha_forward(s, x)), 1e-14);
  EXPECT_LT(relative_diff(matmul(t.wq[0], t.wk[0].transposed()), matmul(s.wq[0], s.wk[0].transposed())), 1e-15);

  for (int k = 0; k < 10; ++k) {
    const GlMhaElement h = sample_gl(2, 4, 1.0, rng);
    const MhaBlockParams q = gl_act(h, p);
    EXPECT_EQ(q.ff->w_a, p.ff->w_a);
    EquivOptions o;
    o.samples = 50;
    o.relative = true;
    EXPECT_LT(check_functional_equiv(p, q, o, rng).max_rel_diff, 1e-8);
  }
}

TEST(GlAct, SingularElementRejected) {
  Rng rng(5);
  GlMhaElement g = gl_identity(2, 2);
  g.u[1] = Tensor::matrix({{1, 2}, {2, 4}});
  EXPECT_THROW(gl_act(g, random_mha(2, 4, 2, 0, rng)), GroupError);
}

TEST(GroupLaws, Monomial) {
  Rng rng(6);
  for (int k = 0; k < 100; ++k) {
    const MlpParams p = random_mlp({3, 6, 5, 2}, rng);
    const auto dims = hidden_dims(p);
    const auto g1 = sample_monomial(dims, 1, 10, true, rng), g2 = sample_monomial(dims, 1, 10, true, rng),
               g3 = sample_monomial(dims, 1, 10, true, rng);
    EXPECT_LT(params_rel_diff(monomial_act(compose(g1, g2), p), monomial_act(g1, monomial_act(g2, p))), 1e-12);
    EXPECT_LT(params_rel_diff(monomial_act(inverse(g1), monomial_act(g1, p)), p), 1e-10);
    EXPECT_LT(params_rel_diff(monomial_act(compose(g1, inverse(g1)), p), p), 1e-10);
    EXPECT_LT(params_rel_diff(monomial_act(compose(monomial_identity(dims), g1), p), monomial_act(g1, p)), 1e-15);
    EXPECT_LT(params_rel_diff(monomial_act(compose(compose(g1, g2), g3), p),
                              monomial_act(compose(g1, compose(g2, g3)), p)),
              1e-10);
  }
}

TEST(GroupLaws, Gl) {
  Rng rng(7);
  for (int k = 0; k < 100; ++k) {
    const MhaBlockParams p = random_mha(2, 8, 4, 0, rng);
    const auto g1 = sample_gl(2, 4, 1.0, rng), g2 = sample_gl(2, 4, 1.0, rng), g3 = sample_gl(2, 4, 1.0, rng);
    EXPECT_LT(params_rel_diff(gl_act(compose(g1, g2), p), gl_act(g1, gl_act(g2, p))), 1e-10);
    EXPECT_LT(params_rel_diff(gl_act(inverse(g1), gl_act(g1, p)), p), 1e-10);
    EXPECT_LT(params_rel_diff(gl_act(compose(compose(g1, g2), g3), p), gl_act(compose(g1, compose(g2, g3)), p)),
              1e-10);
  }
}

TEST(SampleMonomial, Examples) {
  Rng rng(8);
  const auto e = sample_monomial({4, 3}, 1.0, 1.0, false, rng);
  EXPECT_EQ(element_distance(e, monomial_identity({4, 3})), 0.0);
  const auto big = sample_monomial({64}, 1.0, 1e4, true, rng);
  for (double s : big.layers[0].scale) {
    EXPECT_GE(s, 1.0);
    EXPECT_LE(s, 1e4);
  }
  double sum = 0.0;
  const std::size_t n = 100000;
  const auto m = sample_monomial({n}, 1.0, 10.0, false, rng);
  for (double s : m.layers[0].scale) sum += s;
  EXPECT_NEAR(sum / n, 5.5, 0.05);
  EXPECT_THROW(sample_monomial({3}, 0.5, 2.0, false, rng), std::invalid_argument);
  EXPECT_THROW(sample_monomial({3}, 3.0, 2.0, false, rng), std::invalid_argument);
}

TEST(SampleGl, InvertibleAndGolden) {
  Rng rng(9);
  for (double spread : {1.0, 10.0, 100.0}) {
    for (int k = 0; k < 20; ++k) {
      const auto g = sample_gl(2, 4, spread, rng);
      for (const auto* m : {&g.u, &g.v})
        for (const auto& t : *m) {
          EXPECT_GT(std::abs(linalg::determinant(t)), kMinAbsDet);
          EXPECT_LE(max_abs(t), spread);
        }
    }
  }
  Rng golden(2024);
  const auto g = sample_gl(1, 2, 1.0, golden, false);
  EXPECT_EQ(hex64(fnv1a64(dump_json(group_to_json(g)))), "2a486c5af9df8834");
  EXPECT_THROW(sample_gl(2, 2, 0.0, rng), std::invalid_argument);
}

TEST(FunctionalEquiv, Examples) {
  Rng rng(10);
  const MlpParams p = random_mlp({3, 6, 5, 2}, rng);
  EquivOptions o;
  const auto self = check_functional_equiv(p, p, o, rng);
  EXPECT_TRUE(self.equivalent);
  EXPECT_EQ(self.max_abs_diff, 0.0);
  for (int k = 0; k < 20; ++k) {
    const auto g = sample_monomial(hidden_dims(p), 1.0, 1e3, true, rng);
    EXPECT_LT(check_functional_equiv(p, monomial_act(g, p), o, rng).max_abs_diff, 1e-8);
  }
  MlpParams q = p;
  q.layers[0].weight.at(0, 0) += 0.1;
  const auto r = check_functional_equiv(p, q, o, rng);
  EXPECT_FALSE(r.equivalent);
  EXPECT_GT(r.max_abs_diff, 0.0);
  EXPECT_THROW(check_functional_equiv(p, random_mlp({3, 5, 2}, rng), o, rng), std::invalid_argument);
}

TEST(Genericity, Examples) {
  Rng rng(11);
  MhaBlockParams p = random_mha(2, 8, 4, 0, rng);
  EXPECT_TRUE(check_genericity(p));
  MhaBlockParams z = p;
  z.wq[0] = Tensor::zeros(z.wq[0].shape());
  EXPECT_FALSE(check_genericity(z));
  MhaBlockParams dup = p;
  dup.wq[1] = dup.wq[0];
  dup.wk[1] = dup.wk[0];
  EXPECT_FALSE(check_genericity(dup));
}

TEST(GroupJson, RoundTrip) {
  Rng rng(12);
  const auto g = sample_monomial({4, 3}, 1, 10, true, rng);
  EXPECT_EQ(element_distance(monomial_from_json(group_to_json(g)), g), 0.0);
  const auto h = sample_gl(2, 3, 2.0, rng);
  EXPECT_EQ(element_distance(gl_from_json(group_to_json(h)), h), 0.0);
}

TEST(Faults, InjectedBugsBreakFunctionalEquivalence) {
  Rng rng(13);
  const MlpParams p = random_mlp({3, 6, 5, 2}, rng);
  const auto g = sample_monomial(hidden_dims(p), 2.0, 10.0, false, rng);
  EquivOptions o;
  {
    ScopedActionFault f(ActionFault::kDropMonomialInverse);
    EXPECT_EQ(active_fault(), ActionFault::kDropMonomialInverse);
    EXPECT_FALSE(check_functional_equiv(p, monomial_act(g, p), o, rng).equivalent);
  }
  EXPECT_EQ(active_fault(), ActionFault::kNone);
  EXPECT_TRUE(check_functional_equiv(p, monomial_act(g, p), o, rng).equivalent);

  const MhaBlockParams m = random_mha(2, 8, 4, 16, rng);
  const auto h = sample_gl(2, 4, 1.0, rng);
  o.relative = true;
  o.tol = 1e-6;
  ScopedActionFault f(ActionFault::kDropGlInverse);
  EXPECT_FALSE(check_functional_equiv(m, gl_act(h, m), o, rng).equivalent);
}
