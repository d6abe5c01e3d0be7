#include <gtest/gtest.h>

#include <algorithm>

#include "wsym/propverify.hpp"

using namespace wsym;

namespace {

Metanet model(double eps, std::uint64_t seed = 3) {
  MetanetConfig c = MetanetConfig::desk();
  c.channels = {4, 3};
  c.head = {8};
  c.eps_init = eps;
  c.seed = seed;
  Rng rng(seed);
  return build(c, sample_theta(MonomialSampling{}, rng));
}

// A few epochs on a random labelled zoo, so eps and the scale net move off their init.
Metanet trained_model() {
  Metanet m = model(0.3);
  Rng rng(4);
  Zoo zoo;
  for (int i = 0; i < 24; ++i) {
    ZooEntry e;
    e.id = std::to_string(i);
    e.label = rng.uniform(0.0, 1.0);
    e.params = sample_theta(MonomialSampling{}, rng);
    zoo.entries.push_back(std::move(e));
  }
  m.config.epochs = 3;
  m.config.learning_rate = 1e-2;
  train(m, zoo);
  return m;
}

}  // namespace

TEST(Report, PassIsRecomputable) {
  EXPECT_TRUE(make_report("x", 1, 0.5, 1.0).pass);
  EXPECT_FALSE(make_report("x", 1, 1.0, 1.0).pass);
  EXPECT_EQ(rel_residual(1.0, 0.0), 1e12);
}

TEST(Witness, MonomialExamples) {
  Rng rng(1);
  MonomialSampling s;
  const MlpParams t = sample_theta(s, rng);
  const Metanet m = model(0.3);
  const auto id = witness_quasi_equivariance(m, t, monomial_identity(hidden_dims(t)));
  EXPECT_LT(element_distance(id.g_prime, monomial_identity(hidden_dims(t))), 1e-12);
  EXPECT_LT(id.residual, 1e-12);

  const Metanet strict = model(0.0);
  const auto g = sample_element(s, rng);
  const auto w = witness_quasi_equivariance(strict, t, g);
  EXPECT_LT(element_distance(w.g_prime, g), 1e-12);
  EXPECT_LT(w.residual, 1e-12);

  const Metanet tm = trained_model();
  ASSERT_TRUE(tm.scale_net);
  EXPECT_GT(tm.scale_net->eps[0].value()[0], 0.0);
  for (int k = 0; k < 50; ++k) {
    const MlpParams th = sample_theta(s, rng);
    EXPECT_LT(witness_quasi_equivariance(tm, th, sample_element(s, rng)).residual, 1e-9);
  }
}

TEST(Witness, GlExamples) {
  Rng rng(2);
  GlSampling s;
  const GlNet net = make_gl_net(56, 2, 4, rng, 0.1);
  const MhaBlockParams t = sample_theta(s, rng);
  const auto id = witness_quasi_equivariance(net, t, gl_identity(2, 4));
  EXPECT_LT(element_distance(id.g_prime, gl_identity(2, 4)), 1e-12);
  EXPECT_LT(id.residual, 1e-12);
  for (int k = 0; k < 50; ++k)
    EXPECT_LT(witness_quasi_equivariance(net, sample_theta(s, rng), sample_element(s, rng)).residual, 1e-9);
}

TEST(Cocycle, TrivialLiftedAndBroken) {
  Rng rng(3);
  MonomialSampling s;
  s.scale_high = 1e3;
  const auto triv = check_cocycle(trivial_monomial_cocycle(), s, 20, rng);
  EXPECT_TRUE(triv.pass);
  EXPECT_LT(triv.max_residual, 1e-12);
  const ScaleNet net = make_scale_net(42, {6, 5}, rng, 0.3);
  EXPECT_TRUE(check_cocycle(lifted_cocycle(net), s, 100, rng).pass);
  EXPECT_FALSE(check_cocycle(broken_cocycle(net), s, 20, rng).pass);

  GlSampling gs;
  const GlNet gnet = make_gl_net(56, 2, 4, rng, 0.1);
  EXPECT_TRUE(check_cocycle(trivial_gl_cocycle(), gs, 20, rng).pass);
  EXPECT_TRUE(check_cocycle(lifted_cocycle(gnet), gs, 100, rng).pass);
  EXPECT_FALSE(check_cocycle(broken_cocycle(gnet), gs, 20, rng).pass);
}

TEST(Gauge, Examples) {
  Rng rng(4);
  MonomialSampling s;
  const ScaleNet net = make_scale_net(42, {6, 5}, rng, 0.3);
  const auto alpha = lifted_cocycle(net);
  const MonomialGauge none = [](const MlpParams& t) { return monomial_identity(hidden_dims(t)); };
  const auto same = gauge_transform(alpha, none);
  for (int k = 0; k < 20; ++k) {
    const auto t = sample_theta(s, rng);
    const auto g = sample_element(s, rng);
    EXPECT_EQ(element_distance(same(g, t), alpha(g, t)), 0.0);
  }
  const ScaleNet other = make_scale_net(42, {6, 5}, rng, 0.2);
  EXPECT_TRUE(check_gauge(alpha, scale_gauge(other), s, 50, rng).pass);
  EXPECT_TRUE(check_gauge(alpha, none, s, 20, rng).pass);

  GlSampling gs;
  const GlNet a = make_gl_net(56, 2, 4, rng, 0.1), b = make_gl_net(56, 2, 4, rng, 0.1);
  EXPECT_TRUE(check_gauge(lifted_cocycle(a), gl_gauge(b), gs, 50, rng).pass);
}

TEST(Coboundary, StrictAfterUndoingAlpha) {
  Rng rng(5);
  MonomialSampling s;
  s.scale_high = 1e3;
  const auto r = check_coboundary(model(0.3), s, 50, rng);
  EXPECT_TRUE(r.pass) << r.max_residual;
  EXPECT_LT(r.max_residual, 1e-10);
  GlSampling gs;
  EXPECT_TRUE(check_coboundary(make_gl_net(56, 2, 4, rng, 0.1), gs, 50, rng).pass);
}

TEST(Stabilizer, Examples) {
  Rng rng(6);
  MonomialSampling s;
  const MlpParams t = sample_theta(s, rng);
  const auto dims = hidden_dims(t);
  const Metanet m = model(0.3);
  EXPECT_TRUE(check_stabilizer_consistency(m, t, {monomial_identity(dims)}).pass);

  const MlpParams dup = duplicate_neuron(t, 1, 0, 3);
  for (std::size_t c = 0; c < dup.layers[0].weight.dim(1); ++c)
    EXPECT_EQ(dup.layers[0].weight.at(3, c), dup.layers[0].weight.at(0, c));
  const auto swap = neuron_swap(dims, 1, 0, 3);
  EXPECT_EQ(flatten_params(monomial_act(swap, dup)), flatten_params(dup));
  const auto r = check_stabilizer_consistency(m, dup, {monomial_identity(dims), swap});
  EXPECT_TRUE(r.pass) << r.max_residual;
  EXPECT_THROW(check_stabilizer_consistency(m, t, {swap}), std::invalid_argument);

  std::vector<MonomialElement> candidates{monomial_identity(dims)};
  for (std::size_t layer = 1; layer <= dims.size(); ++layer)
    for (std::size_t a = 0; a < dims[layer - 1]; ++a)
      for (std::size_t b = a + 1; b < dims[layer - 1]; ++b) candidates.push_back(neuron_swap(dims, layer, a, b));
  const auto fixed = filter_stabilizers(t, candidates);
  ASSERT_EQ(fixed.size(), 1u);
  EXPECT_EQ(element_distance(fixed[0], monomial_identity(dims)), 0.0);
  EXPECT_EQ(filter_stabilizers(dup, candidates).size(), 2u);
}

TEST(TwoLayer, ComposedWitness) {
  Rng rng(7);
  MonomialSampling s;
  s.scale_high = 1e3;
  const Metanet first = model(0.3);
  const auto shapes = lift(sample_theta(s, rng)).shapes;
  const auto second = make_feature_quasi_layer(shapes, first.config.channels.back(), 3, 0.3, rng);
  EXPECT_EQ(feature_stats(lift(sample_theta(s, rng))).size(), 14 * shapes.size());
  for (int k = 0; k < 100; ++k)
    EXPECT_LT(two_layer_witness_residual(first, second, sample_theta(s, rng), sample_element(s, rng)), 1e-9);
}

TEST(Suite, AllPassFaultsAndErrors) {
  SuiteConfig c;
  c.samples = 20;
  const auto reports = run_suite(c);
  EXPECT_EQ(reports.size(), suite_property_names().size());
  EXPECT_TRUE(std::is_sorted(reports.begin(), reports.end(),
                             [](const auto& a, const auto& b) { return a.name < b.name; }));
  for (const auto& r : reports) {
    EXPECT_TRUE(r.pass) << r.name << " " << r.max_residual;
    EXPECT_EQ(r.pass, r.max_residual < r.tolerance);
    EXPECT_EQ(r.samples, 20u);
  }
  EXPECT_TRUE(all_pass(reports));
  const std::string csv = reports_csv(reports);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "name,samples,max_residual,tolerance,pass");
  EXPECT_NE(reports_text(reports).find("PASS"), std::string::npos);

  // Same seed, same reports.
  const auto again = run_suite(c);
  for (std::size_t i = 0; i < reports.size(); ++i) EXPECT_EQ(again[i].max_residual, reports[i].max_residual);

  {
    ScopedActionFault f(ActionFault::kDropMonomialInverse);
    EXPECT_FALSE(all_pass(run_suite(c)));
  }
  {
    ScopedActionFault f(ActionFault::kDropGlInverse);
    EXPECT_FALSE(all_pass(run_suite(c)));
  }

  SuiteConfig one = c;
  one.properties = {"group-laws", "group-laws"};
  EXPECT_EQ(run_suite(one).size(), 1u);
  one.properties = {"no-such-property"};
  EXPECT_THROW(run_suite(one), std::invalid_argument);
  SuiteConfig zero;
  zero.samples = 0;
  EXPECT_THROW(run_suite(zero), std::invalid_argument);
}
