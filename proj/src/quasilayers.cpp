#include "wsym/quasilayers.hpp"

#include <algorithm>
#include <cmath>

#include "wsym/linalg.hpp"
#include "wsym/statfeat.hpp"

namespace wsym {

namespace {

using ad::Var;

Var column(const Var& x) { return ad::reshape(x, {x.size(), 1}); }
Var flat(const Var& x) { return ad::reshape(x, {x.size()}); }

Var affine(const Var& w, const Var& b, const Var& x) {
  return ad::add(flat(ad::matmul(w, column(x))), b);
}

Var zeros_param(std::size_t n) { return Var::param(Tensor({n})); }

Var eps_param(double value) { return Var::param(Tensor::scalar(value)); }

Var effective(const Var& eps, bool frozen) { return frozen ? Var::constant(eps.value()) : eps; }

void clamp_var(Var& v, double lo, double hi) {
  const double x = v.value()[0];
  if (x < lo || x > hi) v.assign(Tensor::scalar(std::clamp(x, lo, hi)));
}

Tensor stats_of(const Params& p) { return stat_features(p); }

json var_json(const Var& v) { return tensor_to_json(v.value()); }

Var var_from(const json& tensors, const std::string& name) {
  if (!tensors.contains(name)) throw SchemaError("missing tensor '" + name + "'");
  return Var::param(tensor_from_json(tensors.at(name)));
}

Params act_params(const MonomialElement& g, const Params& p) {
  if (const auto* m = std::get_if<MlpParams>(&p)) return monomial_act(g, *m);
  if (const auto* c = std::get_if<Conv1dParams>(&p)) return monomial_act(g, *c);
  throw std::invalid_argument("monomial action needs an mlp or conv1d parameter point");
}

}  // namespace

Var xavier(std::size_t out, std::size_t in, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w({out, in});
  for (auto& x : w.data()) x = rng.uniform(-a, a);
  return Var::param(std::move(w));
}

Var GatedPerceptron::forward(const Var& x) const {
  const Var a = affine(w1, b1, x);
  const Var gate = ad::sigmoid(affine(wg, bg, x));
  return affine(w2, b2, ad::mul(a, gate));
}

std::vector<Var> ScaleNet::parameters() const {
  std::vector<Var> p;
  for (const auto& n : nets) {
    auto q = n.parameters();
    p.insert(p.end(), q.begin(), q.end());
  }
  if (!freeze_eps) p.insert(p.end(), eps.begin(), eps.end());
  return p;
}

void ScaleNet::clamp_eps() {
  for (auto& e : eps) clamp_var(e, 0.0, kScaleEpsMax);
}

void ScaleNet::set_eps(double value) {
  if (!(value >= 0.0 && value <= kScaleEpsMax)) throw std::invalid_argument("scale eps out of [0, 0.5]");
  for (auto& e : eps) e.assign(Tensor::scalar(value));
}

ScaleNet make_scale_net(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims, Rng& rng,
                        double eps_init) {
  ScaleNet net;
  net.input_dim = input_dim;
  net.hidden_dims = hidden_dims;
  for (auto n : hidden_dims) {
    GatedPerceptron p;
    p.w1 = xavier(kAlphaHidden, input_dim, rng);
    p.b1 = zeros_param(kAlphaHidden);
    p.wg = xavier(kAlphaHidden, input_dim, rng);
    p.bg = zeros_param(kAlphaHidden);
    p.w2 = xavier(n, kAlphaHidden, rng);
    p.b2 = zeros_param(n);
    net.nets.push_back(std::move(p));
    net.eps.push_back(eps_param(eps_init));
  }
  net.clamp_eps();
  return net;
}

std::vector<Var> scale_forward(const ScaleNet& net, const Var& stats) {
  if (stats.size() != net.input_dim) {
    throw ShapeError("scale_forward: stats length " + std::to_string(stats.size()) + ", expected " +
                     std::to_string(net.input_dim));
  }
  // asinh keeps the perceptron input well conditioned under large rescalings.
  const Var x = ad::asinh(stats);
  std::vector<Var> out;
  for (std::size_t i = 0; i < net.nets.size(); ++i) {
    const Var eps = effective(net.eps[i], net.freeze_eps);
    out.push_back(ad::add_scalar(ad::mul_scalar(ad::sin(net.nets[i].forward(x)), eps), 1.0));
  }
  return out;
}

std::vector<Tensor> scale_forward(const ScaleNet& net, const Tensor& stats) {
  std::vector<Tensor> out;
  for (const auto& v : scale_forward(net, Var::constant(stats))) out.push_back(v.value());
  return out;
}

MonomialElement scale_as_group_element(const std::vector<Tensor>& scales) {
  MonomialElement g;
  for (const auto& s : scales) {
    LayerMonomial l;
    l.scale = s.values();
    l.perm.resize(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) l.perm[j] = j;
    g.layers.push_back(std::move(l));
  }
  g.validate();
  return g;
}

std::vector<Var> GlNet::parameters() const {
  std::vector<Var> p{w1, b1, w2, b2};
  if (!freeze_eps) p.push_back(eps);
  return p;
}

void GlNet::clamp_eps() { clamp_var(eps, 0.0, eps_max()); }

void GlNet::set_eps(double value) {
  if (!(value >= 0.0 && value <= eps_max())) throw std::invalid_argument("GL eps out of [0, 1/(2 d_h)]");
  eps.assign(Tensor::scalar(value));
}

GlNet make_gl_net(std::size_t input_dim, std::size_t heads, std::size_t head_dim, Rng& rng,
                  double eps_init) {
  GlNet net;
  net.input_dim = input_dim;
  net.heads = heads;
  net.head_dim = head_dim;
  const auto out = 2 * heads * head_dim * head_dim;
  net.w1 = xavier(kAlphaHidden, input_dim, rng);
  net.b1 = zeros_param(kAlphaHidden);
  net.w2 = xavier(out, kAlphaHidden, rng);
  net.b2 = zeros_param(out);
  net.eps = eps_param(eps_init);
  net.clamp_eps();
  return net;
}

GlPair gl_forward(const GlNet& net, const Var& stats) {
  if (stats.size() != net.input_dim) throw ShapeError("gl_forward: stats length mismatch");
  const Var raw = affine(net.w2, net.b2, ad::tanh(affine(net.w1, net.b1, ad::asinh(stats))));
  const Var eps = effective(net.eps, net.freeze_eps);
  const auto dh = net.head_dim, block = dh * dh;
  const Var eye = Var::constant(Tensor::identity(dh));
  GlPair pair;
  for (std::size_t i = 0; i < 2 * net.heads; ++i) {
    Var m = ad::add(eye, ad::mul_scalar(ad::sin(ad::slice(raw, i * block, {dh, dh})), eps));
    (i < net.heads ? pair.m : pair.n).push_back(m);
  }
  return pair;
}

GlMhaElement gl_forward(const GlNet& net, const Tensor& stats) {
  const auto pair = gl_forward(net, Var::constant(stats));
  GlMhaElement g = gl_identity(net.heads, net.head_dim);
  for (std::size_t i = 0; i < net.heads; ++i) {
    g.u[i] = pair.m[i].value();
    g.v[i] = pair.n[i].value().transposed();
    for (const auto* m : {&g.u[i], &g.v[i]}) {
      if (!(std::abs(linalg::determinant(*m)) > kMinAbsDet)) {
        throw NumericError("gl_forward: emitted matrix is singular; eps clamp bypassed");
      }
    }
  }
  return g;
}

WeightFeature quasi_apply_mlp(const ScaleNet& net, const MlpParams& params, const Backbone& beta) {
  const auto s = scale_forward(net, Var::constant(mlp_stat_features(params)));
  return scale_feature(beta(lift(params)), s);
}

WeightFeature quasi_apply_conv1d(const ScaleNet& net, const Conv1dParams& params,
                                 const Backbone& beta) {
  const auto s = scale_forward(net, Var::constant(conv1d_stat_features(params)));
  return scale_feature(beta(lift(params)), s);
}

MonomialElement alpha_monomial(const ScaleNet& net, const Params& params) {
  return scale_as_group_element(scale_forward(net, stats_of(params)));
}

GlMhaElement alpha_gl(const GlNet& net, const MhaBlockParams& params) {
  return gl_forward(net, mha_stat_features(params));
}

MhaBlockParams quasi_apply_mha(const GlNet& net, const MhaBlockParams& params) {
  return gl_act(alpha_gl(net, params), params);
}

MonomialElement quasi_witness(const ScaleNet& net, const Params& params, const MonomialElement& g) {
  const auto moved = act_params(g, params);
  return compose(alpha_monomial(net, moved), compose(g, inverse(alpha_monomial(net, params))));
}

GlMhaElement quasi_witness(const GlNet& net, const MhaBlockParams& params, const GlMhaElement& g) {
  const auto moved = gl_act(g, params);
  return compose(alpha_gl(net, moved), compose(g, inverse(alpha_gl(net, params))));
}

json scale_net_to_json(const ScaleNet& net) {
  json tensors = json::object();
  for (std::size_t i = 0; i < net.nets.size(); ++i) {
    const auto p = net.nets[i].parameters();
    const char* names[] = {"w1", "b1", "wg", "bg", "w2", "b2"};
    for (std::size_t k = 0; k < p.size(); ++k) {
      tensors["net" + std::to_string(i + 1) + "." + names[k]] = var_json(p[k]);
    }
    tensors["eps" + std::to_string(i + 1)] = var_json(net.eps[i]);
  }
  return json{{"version", kSchemaVersion},  {"kind", "scale_net"},
              {"input_dim", net.input_dim}, {"dims", net.hidden_dims},
              {"freeze_eps", net.freeze_eps}, {"tensors", std::move(tensors)}};
}

ScaleNet scale_net_from_json(const json& j) {
  require_version(j);
  try {
    if (j.at("kind") != "scale_net") throw SchemaError("expected a scale_net document");
    ScaleNet net;
    net.input_dim = j.at("input_dim").get<std::size_t>();
    net.hidden_dims = j.at("dims").get<std::vector<std::size_t>>();
    net.freeze_eps = j.at("freeze_eps").get<bool>();
    const auto& t = j.at("tensors");
    for (std::size_t i = 1; i <= net.hidden_dims.size(); ++i) {
      const auto pre = "net" + std::to_string(i) + ".";
      net.nets.push_back({var_from(t, pre + "w1"), var_from(t, pre + "b1"), var_from(t, pre + "wg"),
                          var_from(t, pre + "bg"), var_from(t, pre + "w2"), var_from(t, pre + "b2")});
      net.eps.push_back(var_from(t, "eps" + std::to_string(i)));
    }
    return net;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed scale_net: ") + e.what());
  }
}

json gl_net_to_json(const GlNet& net) {
  json tensors{{"w1", var_json(net.w1)}, {"b1", var_json(net.b1)}, {"w2", var_json(net.w2)},
               {"b2", var_json(net.b2)}, {"eps", var_json(net.eps)}};
  return json{{"version", kSchemaVersion},
              {"kind", "gl_net"},
              {"input_dim", net.input_dim},
              {"dims", {net.heads, net.head_dim}},
              {"freeze_eps", net.freeze_eps},
              {"tensors", std::move(tensors)}};
}

GlNet gl_net_from_json(const json& j) {
  require_version(j);
  try {
    if (j.at("kind") != "gl_net") throw SchemaError("expected a gl_net document");
    GlNet net;
    net.input_dim = j.at("input_dim").get<std::size_t>();
    net.heads = j.at("dims").at(0).get<std::size_t>();
    net.head_dim = j.at("dims").at(1).get<std::size_t>();
    net.freeze_eps = j.at("freeze_eps").get<bool>();
    const auto& t = j.at("tensors");
    net.w1 = var_from(t, "w1");
    net.b1 = var_from(t, "b1");
    net.w2 = var_from(t, "w2");
    net.b2 = var_from(t, "b2");
    net.eps = var_from(t, "eps");
    return net;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed gl_net: ") + e.what());
  }
}

}  // namespace wsym
