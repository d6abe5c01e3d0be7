#include "wsym/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wsym/linalg.hpp"

namespace wsym {

namespace {

thread_local ActionFault g_fault = ActionFault::kNone;

bool is_permutation(const std::vector<std::size_t>& p) {
  std::vector<bool> hit(p.size(), false);
  for (auto v : p) {
    if (v >= p.size() || hit[v]) return false;
    hit[v] = true;
  }
  return true;
}

std::vector<std::size_t> invert_perm(const std::vector<std::size_t>& p) {
  std::vector<std::size_t> inv(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) inv[p[j]] = j;
  return inv;
}

void require_same_dims(const MonomialElement& a, const MonomialElement& b) {
  if (a.hidden_dims() != b.hidden_dims()) {
    throw GroupError("monomial elements act on different hidden dimensions");
  }
}

void require_compatible(const GlMhaElement& a, const GlMhaElement& b) {
  if (a.heads() != b.heads() || a.head_dim() != b.head_dim()) {
    throw GroupError("GL elements have different head count or head dimension");
  }
}

// Shared by the MLP and conv actions: layer i (1-based) sees g_i on its output
// and g_{i-1} on its input, with the boundary layers fixed.
template <typename Layer, typename Block>
std::vector<Layer> act_layers(const MonomialElement& g, const std::vector<Layer>& layers,
                              Block block_of) {
  const auto L = layers.size();
  if (g.layers.size() + 1 != L) {
    throw GroupError("monomial element has " + std::to_string(g.layers.size()) +
                     " hidden layers, parameters have " + std::to_string(L - 1));
  }
  std::vector<Layer> out;
  out.reserve(L);
  for (std::size_t i = 0; i < L; ++i) {
    const LayerMonomial* gout = i + 1 < L ? &g.layers[i] : nullptr;
    const LayerMonomial* gin = i > 0 ? &g.layers[i - 1] : nullptr;
    const Tensor& w = block_of(layers[i]);
    const auto n_out = w.dim(0), n_in = w.dim(1);
    const auto width = w.rank() == 3 ? w.dim(2) : 1;
    if ((gout && gout->size() != n_out) || (gin && gin->size() != n_in)) {
      throw GroupError("monomial element dimensions do not match layer " + std::to_string(i + 1));
    }
    Layer l = layers[i];
    block_of(l) = act_block(w, n_out, n_in, width, gout, gin).reshaped(w.shape());
    if (gout) l.bias = Tensor(l.bias.shape(), act_vector(*gout, layers[i].bias.data()));
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace

void LayerMonomial::validate() const {
  if (perm.size() != scale.size()) throw GroupError("permutation and scale lengths differ");
  if (!is_permutation(perm)) throw GroupError("not a valid permutation");
  for (double s : scale) {
    if (!(s > 0.0) || !std::isfinite(s)) throw GroupError("monomial scale entries must be positive");
  }
}

std::vector<std::size_t> MonomialElement::hidden_dims() const {
  std::vector<std::size_t> d;
  for (const auto& l : layers) d.push_back(l.size());
  return d;
}

void MonomialElement::validate() const {
  for (const auto& l : layers) l.validate();
}

void GlMhaElement::validate() const {
  if (head_perm.empty()) throw GroupError("GL element needs at least one head");
  if (!is_permutation(head_perm)) throw GroupError("head permutation is not valid");
  if (u.size() != heads() || v.size() != heads()) throw GroupError("one U and V per head");
  const auto dh = u[0].dim(0);
  for (const auto* list : {&u, &v}) {
    for (const auto& m : *list) {
      if (m.rank() != 2 || m.dim(0) != dh || m.dim(1) != dh) {
        throw GroupError("GL matrices must be square d_h x d_h");
      }
      if (!(std::abs(linalg::determinant(m)) > kMinAbsDet)) {
        throw GroupError("GL matrix is numerically singular");
      }
    }
  }
}

std::vector<std::size_t> hidden_dims(const MlpParams& p) {
  auto d = p.dims();
  if (d.size() < 2) return {};
  return {d.begin() + 1, d.end() - 1};
}

std::vector<std::size_t> hidden_dims(const Conv1dParams& p) {
  auto d = p.dims();
  if (d.size() < 2) return {};
  return {d.begin() + 1, d.end() - 1};
}

MonomialElement monomial_identity(const std::vector<std::size_t>& dims) {
  MonomialElement g;
  for (auto n : dims) {
    LayerMonomial l;
    l.perm.resize(n);
    for (std::size_t j = 0; j < n; ++j) l.perm[j] = j;
    l.scale.assign(n, 1.0);
    g.layers.push_back(std::move(l));
  }
  return g;
}

MonomialElement compose(const MonomialElement& g1, const MonomialElement& g2) {
  require_same_dims(g1, g2);
  MonomialElement g;
  for (std::size_t i = 0; i < g1.layers.size(); ++i) {
    const auto& a = g1.layers[i];
    const auto& b = g2.layers[i];
    const auto inv_a = invert_perm(a.perm);
    LayerMonomial l;
    l.perm.resize(a.size());
    l.scale.resize(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      l.perm[j] = a.perm[b.perm[j]];
      l.scale[j] = a.scale[j] * b.scale[inv_a[j]];
    }
    g.layers.push_back(std::move(l));
  }
  return g;
}

MonomialElement inverse(const MonomialElement& g) {
  MonomialElement out;
  for (const auto& l : g.layers) {
    LayerMonomial inv;
    inv.perm = invert_perm(l.perm);
    inv.scale.resize(l.size());
    for (std::size_t r = 0; r < l.size(); ++r) inv.scale[r] = 1.0 / l.scale[l.perm[r]];
    out.layers.push_back(std::move(inv));
  }
  return out;
}

GlMhaElement gl_identity(std::size_t heads, std::size_t head_dim) {
  GlMhaElement g;
  for (std::size_t i = 0; i < heads; ++i) {
    g.head_perm.push_back(i);
    g.u.push_back(Tensor::identity(head_dim));
    g.v.push_back(Tensor::identity(head_dim));
  }
  return g;
}

GlMhaElement compose(const GlMhaElement& g1, const GlMhaElement& g2) {
  require_compatible(g1, g2);
  GlMhaElement g;
  for (std::size_t i = 0; i < g1.heads(); ++i) {
    const auto s1 = g1.head_perm[i];
    g.head_perm.push_back(g2.head_perm[s1]);
    g.u.push_back(matmul(g1.u[i], g2.u[s1]));
    g.v.push_back(matmul(g1.v[i], g2.v[s1]));
  }
  return g;
}

GlMhaElement inverse(const GlMhaElement& g) {
  GlMhaElement out;
  out.head_perm = invert_perm(g.head_perm);
  for (std::size_t i = 0; i < g.heads(); ++i) {
    const auto src = out.head_perm[i];
    out.u.push_back(linalg::inverse(g.u[src]));
    out.v.push_back(linalg::inverse(g.v[src]));
  }
  return out;
}

Tensor act_block(const Tensor& block, std::size_t n_out, std::size_t n_in, std::size_t w,
                 const LayerMonomial* out, const LayerMonomial* in) {
  if (block.size() != n_out * n_in * w) throw ShapeError("act_block size mismatch");
  const bool drop_inverse = g_fault == ActionFault::kDropMonomialInverse;
  std::vector<std::size_t> out_inv, in_inv;
  if (out) out_inv = invert_perm(out->perm);
  if (in) in_inv = invert_perm(in->perm);
  Tensor result({n_out, n_in * w});
  const auto src = block.data();
  for (std::size_t r = 0; r < n_out; ++r) {
    const auto sr = out ? out_inv[r] : r;
    const double so = out ? out->scale[r] : 1.0;
    for (std::size_t c = 0; c < n_in; ++c) {
      const auto sc = in ? in_inv[c] : c;
      double f = so;
      if (in) f = drop_inverse ? f * in->scale[c] : f / in->scale[c];
      for (std::size_t k = 0; k < w; ++k) {
        result[(r * n_in + c) * w + k] = f * src[(sr * n_in + sc) * w + k];
      }
    }
  }
  return result;
}

std::vector<double> act_vector(const LayerMonomial& g, std::span<const double> x) {
  if (x.size() != g.size()) throw GroupError("act_vector size mismatch");
  const auto inv = invert_perm(g.perm);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < x.size(); ++r) out[r] = g.scale[r] * x[inv[r]];
  return out;
}

MlpParams monomial_act(const MonomialElement& g, const MlpParams& params) {
  params.validate();
  g.validate();
  MlpParams out;
  out.layers = act_layers(g, params.layers, [](auto& l) -> auto& { return l.weight; });
  return out;
}

Conv1dParams monomial_act(const MonomialElement& g, const Conv1dParams& params) {
  params.validate();
  g.validate();
  Conv1dParams out;
  out.layers = act_layers(g, params.layers, [](auto& l) -> auto& { return l.filter; });
  return out;
}

MhaBlockParams gl_act(const GlMhaElement& g, const MhaBlockParams& params) {
  params.validate();
  g.validate();
  if (g.heads() != params.heads() || g.head_dim() != params.head_dim()) {
    throw GroupError("GL element does not match head count / head dimension");
  }
  MhaBlockParams out;
  out.ff = params.ff;
  for (std::size_t i = 0; i < g.heads(); ++i) {
    const auto s = g.head_perm[i];
    const Tensor u_inv = linalg::inverse(g.u[i]);
    const Tensor v_inv = linalg::inverse(g.v[i]);
    out.wq.push_back(matmul(params.wq[s], g.u[i].transposed()));
    out.wk.push_back(matmul(params.wk[s], g_fault == ActionFault::kDropGlInverse ? g.u[i] : u_inv));
    out.wv.push_back(matmul(params.wv[s], g.v[i].transposed()));
    out.wo.push_back(matmul(params.wo[s], v_inv));
  }
  return out;
}

MonomialElement sample_monomial(const std::vector<std::size_t>& dims, double scale_low,
                                double scale_high, bool permute, Rng& rng) {
  if (!(scale_low >= 1.0) || !(scale_high >= scale_low) || !std::isfinite(scale_high)) {
    throw std::invalid_argument("sample_monomial: need 1 <= low <= high");
  }
  MonomialElement g = monomial_identity(dims);
  for (auto& l : g.layers) {
    if (permute) l.perm = rng.permutation(l.size());
    for (auto& s : l.scale) s = rng.uniform_closed(scale_low, scale_high);
  }
  return g;
}

GlMhaElement sample_gl(std::size_t heads, std::size_t head_dim, double spread, Rng& rng,
                       bool permute_heads) {
  if (!(spread > 0.0)) throw std::invalid_argument("sample_gl: spread must be positive");
  auto draw = [&] {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Tensor m({head_dim, head_dim});
      for (auto& x : m.data()) x = rng.uniform_closed(-spread, spread);
      if (std::abs(linalg::determinant(m)) > kMinAbsDet) return m;
    }
    throw NumericError("sample_gl: no invertible matrix after 100 attempts");
  };
  GlMhaElement g;
  g.head_perm = permute_heads ? rng.permutation(heads) : gl_identity(heads, 1).head_perm;
  for (std::size_t i = 0; i < heads; ++i) {
    g.u.push_back(draw());
    g.v.push_back(draw());
  }
  return g;
}

double element_distance(const MonomialElement& a, const MonomialElement& b) {
  require_same_dims(a, b);
  double d = 0.0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].perm != b.layers[i].perm) return std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < a.layers[i].size(); ++j) {
      const double x = a.layers[i].scale[j], y = b.layers[i].scale[j];
      d = std::max(d, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-300}));
    }
  }
  return d;
}

double element_distance(const GlMhaElement& a, const GlMhaElement& b) {
  require_compatible(a, b);
  if (a.head_perm != b.head_perm) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < a.heads(); ++i) {
    d = std::max(d, relative_diff(a.u[i], b.u[i]));
    d = std::max(d, relative_diff(a.v[i], b.v[i]));
  }
  return d;
}

namespace {

Tensor sample_input(const Params& p, const EquivOptions& o, Rng& rng) {
  if (const auto* m = std::get_if<MlpParams>(&p)) {
    return random_normal({o.samples, m->dims().front()}, rng, o.input_scale);
  }
  if (const auto* c = std::get_if<Conv1dParams>(&p)) {
    std::size_t t = 4;
    for (auto w : c->windows()) t += w - 1;
    return random_normal({c->dims().front(), t}, rng, o.input_scale);
  }
  const auto& a = std::get<MhaBlockParams>(p);
  return random_normal({o.seq_len, a.model_dim()}, rng, o.input_scale);
}

Tensor evaluate(const Params& p, const Tensor& x) {
  if (const auto* m = std::get_if<MlpParams>(&p)) return mlp_forward_batch(*m, x);
  if (const auto* c = std::get_if<Conv1dParams>(&p)) return conv1d_forward(*c, x);
  return mha_forward(std::get<MhaBlockParams>(p), x);
}

}  // namespace

EquivResult check_functional_equiv(const Params& a, const Params& b, const EquivOptions& options,
                                   Rng& rng) {
  if (signature(a) != signature(b)) {
    throw std::invalid_argument("check_functional_equiv: architecture mismatch");
  }
  EquivResult r;
  double scale = 0.0;
  // MLPs are evaluated as one batch; conv and attention inputs are sequences,
  // so those draw one sequence per sample.
  const bool batched = std::holds_alternative<MlpParams>(a);
  const std::size_t rounds = batched ? 1 : options.samples;
  for (std::size_t s = 0; s < rounds; ++s) {
    const Tensor x = sample_input(a, options, rng);
    const Tensor fa = evaluate(a, x);
    const Tensor fb = evaluate(b, x);
    r.max_abs_diff = std::max(r.max_abs_diff, max_abs_diff(fa, fb));
    scale = std::max(scale, max_abs(fa));
  }
  r.max_rel_diff = r.max_abs_diff / std::max(scale, 1e-300);
  r.equivalent = (options.relative ? r.max_rel_diff : r.max_abs_diff) < options.tol;
  return r;
}

bool check_genericity(const MhaBlockParams& params, double rank_tol) {
  params.validate();
  const auto dh = params.head_dim();
  for (const auto* list : {&params.wq, &params.wk, &params.wv, &params.wo}) {
    for (const auto& w : *list) {
      if (linalg::numerical_rank(w, rank_tol) != dh) return false;
    }
  }
  std::vector<Tensor> products;
  for (std::size_t i = 0; i < params.heads(); ++i) {
    products.push_back(matmul(params.wq[i], params.wk[i].transposed()));
  }
  for (std::size_t i = 0; i < products.size(); ++i)
    for (std::size_t j = i + 1; j < products.size(); ++j)
      if (max_abs_diff(products[i], products[j]) <= rank_tol) return false;
  return true;
}

json group_to_json(const MonomialElement& g) {
  json perms = json::array();
  json tensors = json::object();
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    perms.push_back(g.layers[i].perm);
    tensors["d" + std::to_string(i + 1)] = tensor_to_json(Tensor::vector(g.layers[i].scale));
  }
  return json{{"version", kSchemaVersion},
              {"kind", "monomial"},
              {"dims", g.hidden_dims()},
              {"perms", std::move(perms)},
              {"tensors", std::move(tensors)}};
}

json group_to_json(const GlMhaElement& g) {
  json tensors = json::object();
  for (std::size_t i = 0; i < g.heads(); ++i) {
    tensors["U" + std::to_string(i + 1)] = tensor_to_json(g.u[i]);
    tensors["V" + std::to_string(i + 1)] = tensor_to_json(g.v[i]);
  }
  return json{{"version", kSchemaVersion},
              {"kind", "gl_mha"},
              {"dims", {g.heads(), g.head_dim()}},
              {"perms", json::array({g.head_perm})},
              {"tensors", std::move(tensors)}};
}

MonomialElement monomial_from_json(const json& j) {
  require_version(j);
  try {
    if (j.at("kind") != "monomial") throw SchemaError("expected a monomial group element");
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    MonomialElement g;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      LayerMonomial l;
      l.perm = j.at("perms").at(i).get<std::vector<std::size_t>>();
      l.scale = tensor_from_json(j.at("tensors").at("d" + std::to_string(i + 1))).values();
      g.layers.push_back(std::move(l));
    }
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed group element: ") + e.what());
  }
}

GlMhaElement gl_from_json(const json& j) {
  require_version(j);
  try {
    if (j.at("kind") != "gl_mha") throw SchemaError("expected a gl_mha group element");
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    GlMhaElement g;
    g.head_perm = j.at("perms").at(0).get<std::vector<std::size_t>>();
    for (std::size_t i = 1; i <= dims.at(0); ++i) {
      g.u.push_back(tensor_from_json(j.at("tensors").at("U" + std::to_string(i))));
      g.v.push_back(tensor_from_json(j.at("tensors").at("V" + std::to_string(i))));
    }
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed group element: ") + e.what());
  }
}

ActionFault active_fault() { return g_fault; }

ScopedActionFault::ScopedActionFault(ActionFault fault) : previous_(g_fault) { g_fault = fault; }
ScopedActionFault::~ScopedActionFault() { g_fault = previous_; }

}  // namespace wsym
