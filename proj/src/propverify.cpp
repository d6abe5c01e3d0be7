#include "wsym/propverify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "wsym/statfeat.hpp"

namespace wsym {

namespace {

using ad::Var;

double diff_norm(const WeightFeature& a, const WeightFeature& b) {
  return feature_residual(a, b) * std::max(feature_norm(b), 1e-12);
}

double params_diff_norm(const Params& a, const Params& b) {
  const auto x = flatten_params(a), y = flatten_params(b);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

double params_norm(const Params& a) {
  double s = 0.0;
  for (double v : flatten_params(a)) s += v * v;
  return std::sqrt(s);
}

std::vector<std::size_t> mlp_hidden(const std::vector<std::size_t>& dims) {
  return {dims.begin() + 1, dims.end() - 1};
}

}  // namespace

PropertyReport make_report(std::string name, std::size_t samples, double max_residual, double tolerance) {
  return {std::move(name), samples, max_residual, tolerance, max_residual < tolerance};
}

MonomialWitness witness_quasi_equivariance(const Metanet& model, const MlpParams& theta,
                                           const MonomialElement& g) {
  MonomialWitness w;
  w.g_prime = model.scale_net ? quasi_witness(*model.scale_net, theta, g) : g;
  const WeightFeature f = metanet_features(model, theta);
  const WeightFeature fg = metanet_features(model, monomial_act(g, theta));
  w.residual = rel_residual(diff_norm(fg, act_feature(w.g_prime, f)), feature_norm(f));
  if (!std::isfinite(w.residual)) throw NumericError("witness residual is not finite");
  return w;
}

GlWitness witness_quasi_equivariance(const GlNet& net, const MhaBlockParams& theta, const GlMhaElement& g) {
  GlWitness w;
  w.g_prime = quasi_witness(net, theta, g);
  const MhaBlockParams f = quasi_apply_mha(net, theta);
  const MhaBlockParams fg = quasi_apply_mha(net, gl_act(g, theta));
  w.residual = rel_residual(params_diff_norm(fg, gl_act(w.g_prime, f)), params_norm(f));
  if (!std::isfinite(w.residual)) throw NumericError("witness residual is not finite");
  return w;
}

MonomialCocycle lifted_cocycle(const ScaleNet& net) {
  return [net](const MonomialElement& g, const MlpParams& theta) { return quasi_witness(net, theta, g); };
}

GlCocycle lifted_cocycle(const GlNet& net) {
  return [net](const GlMhaElement& g, const MhaBlockParams& theta) { return quasi_witness(net, theta, g); };
}

MonomialCocycle trivial_monomial_cocycle() {
  return [](const MonomialElement& g, const MlpParams&) { return g; };
}

GlCocycle trivial_gl_cocycle() {
  return [](const GlMhaElement& g, const MhaBlockParams&) { return g; };
}

MonomialCocycle broken_cocycle(const ScaleNet& net) {
  return [net](const MonomialElement& g, const MlpParams& theta) {
    return compose(alpha_monomial(net, monomial_act(g, theta)), g);
  };
}

GlCocycle broken_cocycle(const GlNet& net) {
  return [net](const GlMhaElement& g, const MhaBlockParams& theta) {
    return compose(alpha_gl(net, gl_act(g, theta)), g);
  };
}

MonomialCocycle gauge_transform(const MonomialCocycle& alpha, const MonomialGauge& beta_hat) {
  return [alpha, beta_hat](const MonomialElement& g, const MlpParams& theta) {
    return compose(beta_hat(monomial_act(g, theta)), compose(alpha(g, theta), inverse(beta_hat(theta))));
  };
}

GlCocycle gauge_transform(const GlCocycle& alpha, const GlGauge& beta_hat) {
  return [alpha, beta_hat](const GlMhaElement& g, const MhaBlockParams& theta) {
    return compose(beta_hat(gl_act(g, theta)), compose(alpha(g, theta), inverse(beta_hat(theta))));
  };
}

MonomialGauge scale_gauge(const ScaleNet& net) {
  return [net](const MlpParams& theta) { return alpha_monomial(net, theta); };
}

GlGauge gl_gauge(const GlNet& net) {
  return [net](const MhaBlockParams& theta) { return alpha_gl(net, theta); };
}

MlpParams sample_theta(const MonomialSampling& s, Rng& rng) { return random_mlp(s.dims, rng); }

MonomialElement sample_element(const MonomialSampling& s, Rng& rng) {
  return sample_monomial(mlp_hidden(s.dims), 1.0, s.scale_high, s.permute, rng);
}

MhaBlockParams sample_theta(const GlSampling& s, Rng& rng) {
  return random_mha(s.heads, s.model_dim, s.head_dim, s.ff_dim, rng);
}

GlMhaElement sample_element(const GlSampling& s, Rng& rng) {
  return sample_gl(s.heads, s.head_dim, s.spread, rng, s.permute);
}

namespace {

template <typename Sampling, typename Cocycle, typename Act, typename Identity>
PropertyReport cocycle_report(const std::string& name, const Cocycle& alpha, const Sampling& s,
                              std::size_t samples, Rng& rng, double tol, Act act, Identity identity) {
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto theta = sample_theta(s, rng);
    const auto g1 = sample_element(s, rng);
    const auto g2 = sample_element(s, rng);
    const auto e = identity(theta);
    worst = std::max(worst, element_distance(alpha(e, theta), e));
    const auto lhs = alpha(compose(g1, g2), theta);
    const auto rhs = compose(alpha(g1, act(g2, theta)), alpha(g2, theta));
    worst = std::max(worst, element_distance(lhs, rhs));
  }
  return make_report(name, samples, worst, tol);
}

auto monomial_identity_of = [](const MlpParams& theta) { return monomial_identity(hidden_dims(theta)); };
auto gl_identity_of = [](const MhaBlockParams& theta) { return gl_identity(theta.heads(), theta.head_dim()); };
auto monomial_act_fn = [](const MonomialElement& g, const MlpParams& t) { return monomial_act(g, t); };
auto gl_act_fn = [](const GlMhaElement& g, const MhaBlockParams& t) { return gl_act(g, t); };

}  // namespace

PropertyReport check_cocycle(const MonomialCocycle& alpha, const MonomialSampling& s, std::size_t samples,
                             Rng& rng, double tol) {
  return cocycle_report("cocycle-monomial", alpha, s, samples, rng, tol, monomial_act_fn, monomial_identity_of);
}

PropertyReport check_cocycle(const GlCocycle& alpha, const GlSampling& s, std::size_t samples, Rng& rng,
                             double tol) {
  return cocycle_report("cocycle-gl", alpha, s, samples, rng, tol, gl_act_fn, gl_identity_of);
}

PropertyReport check_gauge(const MonomialCocycle& alpha, const MonomialGauge& beta_hat,
                           const MonomialSampling& s, std::size_t samples, Rng& rng, double tol) {
  auto r = check_cocycle(gauge_transform(alpha, beta_hat), s, samples, rng, tol);
  r.name = "gauge-monomial";
  return r;
}

PropertyReport check_gauge(const GlCocycle& alpha, const GlGauge& beta_hat, const GlSampling& s,
                           std::size_t samples, Rng& rng, double tol) {
  auto r = check_cocycle(gauge_transform(alpha, beta_hat), s, samples, rng, tol);
  r.name = "gauge-gl";
  return r;
}

PropertyReport check_coboundary(const Metanet& model, const MonomialSampling& s, std::size_t samples,
                                Rng& rng, double tol) {
  if (!model.scale_net) throw std::invalid_argument("check_coboundary needs a quasi model");
  const auto& net = *model.scale_net;
  auto f_prime = [&](const MlpParams& theta) {
    return act_feature(inverse(alpha_monomial(net, theta)), metanet_features(model, theta));
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto theta = sample_theta(s, rng);
    const auto g = sample_element(s, rng);
    const auto base = f_prime(theta);
    const auto moved = f_prime(monomial_act(g, theta));
    worst = std::max(worst, rel_residual(diff_norm(moved, act_feature(g, base)), feature_norm(base)));
  }
  return make_report("coboundary-monomial", samples, worst, tol);
}

PropertyReport check_coboundary(const GlNet& net, const GlSampling& s, std::size_t samples, Rng& rng,
                                double tol) {
  auto f_prime = [&](const MhaBlockParams& theta) {
    return gl_act(inverse(alpha_gl(net, theta)), quasi_apply_mha(net, theta));
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto theta = sample_theta(s, rng);
    const auto g = sample_element(s, rng);
    const auto base = f_prime(theta);
    const auto moved = f_prime(gl_act(g, theta));
    worst = std::max(worst, rel_residual(params_diff_norm(moved, gl_act(g, base)), params_norm(base)));
  }
  return make_report("coboundary-gl", samples, worst, tol);
}

MlpParams duplicate_neuron(const MlpParams& theta, std::size_t layer, std::size_t a, std::size_t b) {
  theta.validate();
  if (layer < 1 || layer >= theta.depth()) throw std::invalid_argument("duplicate_neuron: not a hidden layer");
  MlpParams p = theta;
  auto& in = p.layers[layer - 1];
  auto& out = p.layers[layer];
  const auto n = in.weight.dim(0);
  if (a >= n || b >= n || a == b) throw std::invalid_argument("duplicate_neuron: bad neuron indices");
  for (std::size_t c = 0; c < in.weight.dim(1); ++c) in.weight.at(b, c) = in.weight.at(a, c);
  in.bias[b] = in.bias[a];
  for (std::size_t r = 0; r < out.weight.dim(0); ++r) out.weight.at(r, b) = out.weight.at(r, a);
  return p;
}

MonomialElement neuron_swap(const std::vector<std::size_t>& hidden, std::size_t layer, std::size_t a,
                            std::size_t b) {
  MonomialElement g = monomial_identity(hidden);
  if (layer < 1 || layer > hidden.size()) throw std::invalid_argument("neuron_swap: not a hidden layer");
  std::swap(g.layers[layer - 1].perm[a], g.layers[layer - 1].perm[b]);
  g.validate();
  return g;
}

std::vector<MonomialElement> filter_stabilizers(const MlpParams& theta,
                                                const std::vector<MonomialElement>& candidates) {
  std::vector<MonomialElement> out;
  const auto base = flatten_params(theta);
  for (const auto& h : candidates) {
    if (flatten_params(monomial_act(h, theta)) == base) out.push_back(h);
  }
  return out;
}

PropertyReport check_stabilizer_consistency(const Metanet& model, const MlpParams& theta,
                                            const std::vector<MonomialElement>& stabilizers, double tol) {
  if (filter_stabilizers(theta, stabilizers).size() != stabilizers.size()) {
    throw std::invalid_argument("check_stabilizer_consistency: a supplied element does not fix theta");
  }
  const WeightFeature f = metanet_features(model, theta);
  const double scale = feature_norm(f);
  double worst = 0.0;
  for (const auto& h : stabilizers) {
    const WeightFeature fh = metanet_features(model, monomial_act(h, theta));
    worst = std::max(worst, rel_residual(diff_norm(fh, f), scale));
    const auto g_prime = model.scale_net ? quasi_witness(*model.scale_net, theta, h) : h;
    worst = std::max(worst, rel_residual(diff_norm(act_feature(g_prime, f), f), scale));
  }
  return make_report("stabilizer", stabilizers.size(), worst, tol);
}

Tensor feature_stats(const WeightFeature& feat) {
  std::vector<double> out;
  for (std::size_t i = 0; i < feat.depth(); ++i) {
    for (const auto* v : {&feat.weights[i], &feat.biases[i]}) {
      const auto s = tensor_stats(v->value());
      out.insert(out.end(), s.data().begin(), s.data().end());
    }
  }
  return Tensor::vector(std::move(out));
}

WeightFeature FeatureQuasiLayer::apply(const WeightFeature& feat) const {
  const auto s = scale_forward(alpha, Var::constant(feature_stats(feat)));
  return scale_feature(equiv_relu(channel_mix(mix, bias, feat)), s);
}

MonomialElement FeatureQuasiLayer::alpha_of(const WeightFeature& feat) const {
  return scale_as_group_element(scale_forward(alpha, feature_stats(feat)));
}

FeatureQuasiLayer make_feature_quasi_layer(const std::vector<LayerShape>& shapes, std::size_t c_in,
                                           std::size_t c_out, double eps, Rng& rng) {
  std::vector<std::size_t> hidden;
  for (std::size_t i = 0; i + 1 < shapes.size(); ++i) hidden.push_back(shapes[i].n_out);
  FeatureQuasiLayer layer{make_scale_net(14 * shapes.size(), hidden, rng, eps), xavier(c_out, c_in, rng),
                          Var::param(random_normal({c_out}, rng, 0.1))};
  return layer;
}

double two_layer_witness_residual(const Metanet& first, const FeatureQuasiLayer& second,
                                  const MlpParams& theta, const MonomialElement& g) {
  const auto g1 = first.scale_net ? quasi_witness(*first.scale_net, theta, g) : g;
  const WeightFeature f1 = metanet_features(first, theta);
  const WeightFeature f1g = metanet_features(first, monomial_act(g, theta));
  const auto g2 = compose(second.alpha_of(f1g), compose(g1, inverse(second.alpha_of(f1))));
  const WeightFeature out = second.apply(f1);
  const WeightFeature outg = second.apply(f1g);
  return rel_residual(diff_norm(outg, act_feature(g2, out)), feature_norm(out));
}

namespace {

struct SuiteContext {
  const SuiteConfig& cfg;
  MonomialSampling mono;
  GlSampling gl;

  Metanet quasi_model(std::uint64_t seed, double eps, bool freeze = false) const {
    MetanetConfig c = MetanetConfig::desk();
    c.channels = {4, 3};
    c.head = {8};
    c.seed = seed;
    c.eps_init = eps;
    c.freeze_eps = freeze;
    Rng rng(seed);
    return build(c, sample_theta(mono, rng));
  }

  GlNet gl_net(Rng& rng) const {
    const double eps = std::min(cfg.eps, 0.5 / static_cast<double>(gl.head_dim));
    return make_gl_net(gl.ff_dim > 0 ? 56 : 28, gl.heads, gl.head_dim, rng, eps);
  }
};

using PropertyFn = std::function<PropertyReport(const SuiteContext&, std::size_t, Rng&)>;

PropertyReport functional(const std::string& name, const SuiteContext& ctx, std::size_t n, Rng& rng) {
  double worst = 0.0;
  EquivOptions eq;
  eq.samples = 50;
  if (name == "symmetry-mha") {
    eq.samples = 10;
    eq.relative = true;
    for (std::size_t k = 0; k < n; ++k) {
      const auto theta = sample_theta(ctx.gl, rng);
      const auto g = sample_element(ctx.gl, rng);
      worst = std::max(worst, check_functional_equiv(theta, gl_act(g, theta), eq, rng).max_rel_diff);
    }
    return make_report(name, n, worst, 1e-6);
  }
  for (std::size_t k = 0; k < n; ++k) {
    Params theta, moved;
    if (name == "symmetry-mlp") {
      const auto t = sample_theta(ctx.mono, rng);
      moved = monomial_act(sample_element(ctx.mono, rng), t);
      theta = t;
    } else {
      const auto t = random_conv1d({2, 4, 3, 2}, {3, 2, 2}, rng);
      moved = monomial_act(sample_monomial(hidden_dims(t), 1.0, ctx.mono.scale_high, true, rng), t);
      theta = t;
    }
    worst = std::max(worst, check_functional_equiv(theta, moved, eq, rng).max_abs_diff);
  }
  return make_report(name, n, worst, 1e-8);
}

const std::map<std::string, PropertyFn>& registry() {
  static const std::map<std::string, PropertyFn> props = {
      {"symmetry-mlp", [](const SuiteContext& c, std::size_t n, Rng& r) { return functional("symmetry-mlp", c, n, r); }},
      {"symmetry-conv1d",
       [](const SuiteContext& c, std::size_t n, Rng& r) { return functional("symmetry-conv1d", c, n, r); }},
      {"symmetry-mha", [](const SuiteContext& c, std::size_t n, Rng& r) { return functional("symmetry-mha", c, n, r); }},
      {"group-laws",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         double worst = 0.0;
         for (std::size_t k = 0; k < n; ++k) {
           const auto t = sample_theta(c.mono, r);
           const auto g1 = sample_element(c.mono, r), g2 = sample_element(c.mono, r), g3 = sample_element(c.mono, r);
           const auto act = [](const MonomialElement& g, const MlpParams& p) { return monomial_act(g, p); };
           worst = std::max(worst, params_rel_diff(act(compose(g1, g2), t), act(g1, act(g2, t))));
           worst = std::max(worst, params_rel_diff(act(inverse(g1), act(g1, t)), t));
           worst = std::max(worst, params_rel_diff(act(compose(compose(g1, g2), g3), t),
                                                   act(compose(g1, compose(g2, g3)), t)));
           const auto m = sample_theta(c.gl, r);
           const auto h1 = sample_element(c.gl, r), h2 = sample_element(c.gl, r);
           worst = std::max(worst, params_rel_diff(gl_act(compose(h1, h2), m), gl_act(h1, gl_act(h2, m))));
           worst = std::max(worst, params_rel_diff(gl_act(inverse(h1), gl_act(h1, m)), m));
         }
         return make_report("group-laws", n, worst, 1e-10);
       }},
      {"backbone-equivariance",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         const Metanet model = c.quasi_model(r.next(), 0.0);
         double worst = 0.0;
         for (std::size_t k = 0; k < n; ++k) {
           const auto t = sample_theta(c.mono, r);
           const auto g = sample_element(c.mono, r);
           const auto base = metanet_backbone(model, lift(t));
           const auto moved = metanet_backbone(model, lift(monomial_act(g, t)));
           worst = std::max(worst, rel_residual(diff_norm(moved, act_feature(g, base)), feature_norm(base)));
         }
         return make_report("backbone-equivariance", n, worst, 1e-10);
       }},
      {"strict-reduction",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         const Metanet model = c.quasi_model(r.next(), 0.0, true);
         double worst = 0.0;
         for (std::size_t k = 0; k < n; ++k) {
           const auto t = sample_theta(c.mono, r);
           const auto g = sample_element(c.mono, r);
           const auto base = metanet_features(model, t);
           const auto moved = metanet_features(model, monomial_act(g, t));
           worst = std::max(worst, rel_residual(diff_norm(moved, act_feature(g, base)), feature_norm(base)));
         }
         return make_report("strict-reduction", n, worst, 1e-10);
       }},
      {"quasi-witness-monomial",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         const Metanet model = c.quasi_model(r.next(), c.cfg.eps);
         double worst = 0.0;
         for (std::size_t k = 0; k < n; ++k) {
           const auto t = sample_theta(c.mono, r);
           worst = std::max(worst, witness_quasi_equivariance(model, t, sample_element(c.mono, r)).residual);
         }
         return make_report("quasi-witness-monomial", n, worst, 1e-9);
       }},
      {"quasi-witness-gl",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         const GlNet net = c.gl_net(r);
         double worst = 0.0;
         for (std::size_t k = 0; k < n; ++k) {
           const auto t = sample_theta(c.gl, r);
           worst = std::max(worst, witness_quasi_equivariance(net, t, sample_element(c.gl, r)).residual);
         }
         return make_report("quasi-witness-gl", n, worst, 1e-9);
       }},
      {"pool-invariance",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         const Metanet model = c.quasi_model(r.next(), c.cfg.eps);
         double worst = 0.0;
         for (std::size_t k = 0; k < n; ++k) {
           const auto t = sample_theta(c.mono, r);
           const auto g = sample_element(c.mono, r);
           const Tensor a = metanet_invariants(model, t).value();
           const Tensor b = metanet_invariants(model, monomial_act(g, t)).value();
           worst = std::max(worst, relative_diff(b, a));
         }
         return make_report("pool-invariance", n, worst, 1e-9);
       }},
      {"head-pool-invariance",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         double worst = 0.0;
         for (std::size_t k = 0; k < n; ++k) {
           const auto t = sample_theta(c.gl, r);
           const auto g = sample_element(c.gl, r);
           worst = std::max(worst, relative_diff(head_pool(mha_invariants(gl_act(g, t))),
                                                 head_pool(mha_invariants(t))));
         }
         return make_report("head-pool-invariance", n, worst, 1e-9);
       }},
      {"cocycle-monomial",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         const Metanet model = c.quasi_model(r.next(), c.cfg.eps);
         return check_cocycle(lifted_cocycle(*model.scale_net), c.mono, n, r);
       }},
      {"cocycle-gl",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         return check_cocycle(lifted_cocycle(c.gl_net(r)), c.gl, n, r);
       }},
      {"gauge-monomial",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         const Metanet model = c.quasi_model(r.next(), c.cfg.eps);
         const Metanet other = c.quasi_model(r.next(), c.cfg.eps);
         return check_gauge(lifted_cocycle(*model.scale_net), scale_gauge(*other.scale_net), c.mono, n, r);
       }},
      {"gauge-gl",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         const GlNet net = c.gl_net(r);
         const GlNet other = c.gl_net(r);
         return check_gauge(lifted_cocycle(net), gl_gauge(other), c.gl, n, r);
       }},
      {"coboundary-monomial",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         return check_coboundary(c.quasi_model(r.next(), c.cfg.eps), c.mono, n, r);
       }},
      {"coboundary-gl",
       [](const SuiteContext& c, std::size_t n, Rng& r) { return check_coboundary(c.gl_net(r), c.gl, n, r); }},
      {"stabilizer",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         const Metanet model = c.quasi_model(r.next(), c.cfg.eps);
         double worst = 0.0;
         for (std::size_t k = 0; k < n; ++k) {
           const auto t = duplicate_neuron(sample_theta(c.mono, r), 1, 0, 1);
           const auto hidden = hidden_dims(t);
           const std::vector<MonomialElement> hs{monomial_identity(hidden), neuron_swap(hidden, 1, 0, 1)};
           worst = std::max(worst, check_stabilizer_consistency(model, t, hs).max_residual);
         }
         return make_report("stabilizer", n, worst, 1e-10);
       }},
      {"two-layer-witness",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         const Metanet first = c.quasi_model(r.next(), c.cfg.eps);
         const auto shapes = lift(sample_theta(c.mono, r)).shapes;
         const auto second = make_feature_quasi_layer(shapes, first.config.channels.back(), 3, c.cfg.eps, r);
         double worst = 0.0;
         for (std::size_t k = 0; k < n; ++k) {
           const auto t = sample_theta(c.mono, r);
           worst = std::max(worst, two_layer_witness_residual(first, second, t, sample_element(c.mono, r)));
         }
         return make_report("two-layer-witness", n, worst, 1e-9);
       }},
      {"predict-invariance",
       [](const SuiteContext& c, std::size_t n, Rng& r) {
         const Metanet model = c.quasi_model(r.next(), c.cfg.eps);
         MetanetConfig mc = MetanetConfig::desk();
         mc.arch = Arch::kMha;
         mc.channels = {4, 3};
         mc.head = {8};
         mc.seed = r.next();
         mc.eps_init = std::min(c.cfg.eps, 0.5 / static_cast<double>(c.gl.head_dim));
         const Metanet mha_model = build(mc, sample_theta(c.gl, r));
         double worst = 0.0;
         for (std::size_t k = 0; k < n; ++k) {
           const auto t = sample_theta(c.mono, r);
           const double p = predict(model, t);
           const double pg = predict(model, monomial_act(sample_element(c.mono, r), t));
           worst = std::max(worst, rel_residual(std::abs(pg - p), std::abs(p)));
           const auto m = sample_theta(c.gl, r);
           const double q = predict(mha_model, m);
           const double qg = predict(mha_model, gl_act(sample_element(c.gl, r), m));
           worst = std::max(worst, rel_residual(std::abs(qg - q), std::abs(q)));
         }
         return make_report("predict-invariance", n, worst, 1e-9);
       }},
  };
  return props;
}

}  // namespace

const std::vector<std::string>& suite_property_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, fn] : registry()) v.push_back(k);
    return v;
  }();
  return names;
}

std::vector<PropertyReport> run_suite(const SuiteConfig& config) {
  if (config.samples == 0) throw std::invalid_argument("run_suite: samples must be positive");
  std::vector<std::string> names = config.properties.empty() ? suite_property_names() : config.properties;
  for (const auto& n : names) {
    if (!registry().count(n)) throw std::invalid_argument("unknown property '" + n + "'");
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  SuiteContext ctx{config, {}, {}};
  ctx.mono.scale_high = config.scale_high;
  ctx.gl.spread = config.gl_spread;
  std::vector<PropertyReport> out;
  for (const auto& n : names) {
    Rng rng = Rng::stream(config.seed, fnv1a64(n));
    out.push_back(registry().at(n)(ctx, config.samples, rng));
  }
  return out;
}

std::string reports_csv(const std::vector<PropertyReport>& reports) {
  std::ostringstream ss;
  ss << "name,samples,max_residual,tolerance,pass\n";
  char buf[96];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%zu,%.6e,%.1e,%d", r.samples, r.max_residual, r.tolerance, r.pass ? 1 : 0);
    ss << r.name << ',' << buf << '\n';
  }
  return ss.str();
}

std::string reports_text(const std::vector<PropertyReport>& reports) {
  std::ostringstream ss;
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s  %-24s residual %.3e  tol %.1e  n=%zu\n", r.pass ? "PASS" : "FAIL",
                  r.name.c_str(), r.max_residual, r.tolerance, r.samples);
    ss << buf;
  }
  return ss.str();
}

bool all_pass(const std::vector<PropertyReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.pass; });
}

}  // namespace wsym
