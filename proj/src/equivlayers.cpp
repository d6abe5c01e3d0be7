#include "wsym/equivlayers.hpp"

#include <cmath>

namespace wsym {

namespace {

using ad::Node;
using ad::Var;

Var row_var(std::span<const double> data) {
  return Var::constant(Tensor({1, data.size()}, {data.begin(), data.end()}));
}

template <typename Layers, typename Block>
WeightFeature lift_layers(const Layers& layers, Block block_of) {
  WeightFeature f;
  for (const auto& l : layers) {
    const Tensor& w = block_of(l);
    f.shapes.push_back({w.dim(0), w.dim(1), w.rank() == 3 ? w.dim(2) : 1});
    f.weights.push_back(row_var(w.data()));
    f.biases.push_back(row_var(l.bias.data()));
  }
  return f;
}

std::span<const double> channel_row(const Tensor& t, std::size_t channel) {
  const auto width = t.dim(1);
  return t.data().subspan(channel * width, width);
}

// y[k][(r, col, t)] = x[k][(r, col, t)] * s_out[r] / s_in[col]; either scale may be absent.
Var scale_block(const Var& x, const LayerShape& sh, const Var* s_out, const Var* s_in) {
  const auto c = x.shape()[0];
  const auto inner = sh.n_in * sh.w;
  auto factor = [=](std::size_t r, std::size_t col) {
    double f = s_out ? s_out->value()[r] : 1.0;
    if (s_in) f /= s_in->value()[col];
    return f;
  };
  Tensor y(x.shape());
  const auto xv = x.value().data();
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t r = 0; r < sh.n_out; ++r)
      for (std::size_t col = 0; col < sh.n_in; ++col) {
        const double f = factor(r, col);
        for (std::size_t t = 0; t < sh.w; ++t) {
          const auto e = k * sh.n_out * inner + r * inner + col * sh.w + t;
          y[e] = xv[e] * f;
        }
      }
  std::vector<Var> parents{x};
  const bool has_out = s_out != nullptr, has_in = s_in != nullptr;
  if (has_out) parents.push_back(*s_out);
  if (has_in) parents.push_back(*s_in);
  return ad::make_op(std::move(y), parents, [sh, c, inner, has_out, has_in](Node& n) {
    Node& px = *n.parents[0];
    Node* po = has_out ? n.parents[1].get() : nullptr;
    Node* pi = has_in ? n.parents[has_out ? 2 : 1].get() : nullptr;
    const auto xv = px.value.data();
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t r = 0; r < sh.n_out; ++r)
        for (std::size_t col = 0; col < sh.n_in; ++col) {
          const double so = po ? po->value[r] : 1.0;
          const double si = pi ? pi->value[col] : 1.0;
          for (std::size_t t = 0; t < sh.w; ++t) {
            const auto e = k * sh.n_out * inner + r * inner + col * sh.w + t;
            const double g = n.grad[e];
            if (px.requires_grad) px.grad_buffer()[e] += g * so / si;
            if (po && po->requires_grad) po->grad_buffer()[r] += g * xv[e] / si;
            if (pi && pi->requires_grad) pi->grad_buffer()[col] -= g * xv[e] * so / (si * si);
          }
        }
  });
}

// Normalizes every slice that fixes the pooled (hidden) indices, then averages
// the slices. x is [c x (a b w)].
Var pool_block(const Var& x, std::size_t a, std::size_t b, std::size_t w, bool pool_rows,
               bool pool_cols, PoolDiagnostics* diag) {
  const auto c = x.shape()[0];
  const auto sa = pool_rows ? a : 1, sb = pool_cols ? b : 1;  // slice grid
  const auto oa = pool_rows ? 1 : a, ob = pool_cols ? 1 : b;  // kept axes
  const auto n_slices = sa * sb;
  const auto out_size = c * oa * ob * w;
  const auto elems = c * a * b * w;

  std::vector<std::size_t> slice_of(elems), out_of(elems);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t r = 0; r < a; ++r)
      for (std::size_t s = 0; s < b; ++s)
        for (std::size_t t = 0; t < w; ++t) {
          const auto e = ((k * a + r) * b + s) * w + t;
          slice_of[e] = (pool_rows ? r : 0) * sb + (pool_cols ? s : 0);
          out_of[e] = ((k * oa + (pool_rows ? 0 : r)) * ob + (pool_cols ? 0 : s)) * w + t;
        }

  const auto xv = x.value().data();
  std::vector<double> norm(n_slices, 0.0);
  for (std::size_t e = 0; e < elems; ++e) norm[slice_of[e]] += xv[e] * xv[e];
  for (auto& v : norm) v = std::sqrt(v);
  if (diag) {
    for (double v : norm) {
      diag->zero_slices += v == 0.0 ? 1 : 0;
      if (v > 0.0) diag->min_nonzero_norm = std::min(diag->min_nonzero_norm, v);
    }
  }

  const double inv_count = 1.0 / static_cast<double>(n_slices);
  Tensor out({out_size});
  for (std::size_t e = 0; e < elems; ++e) {
    const double nv = norm[slice_of[e]];
    if (nv > 0.0) out[out_of[e]] += xv[e] / nv * inv_count;
  }
  return ad::make_op(std::move(out), {x}, [=](Node& n) {
    Node& p = *n.parents[0];
    const auto xs = p.value.data();
    // For y = x / |x| on a slice: dx = (g - y (y . g)) / |x|.
    std::vector<double> dot(n_slices, 0.0);
    for (std::size_t e = 0; e < elems; ++e) {
      const double nv = norm[slice_of[e]];
      if (nv > 0.0) dot[slice_of[e]] += xs[e] / nv * n.grad[out_of[e]] * inv_count;
    }
    auto g = p.grad_buffer().data();
    for (std::size_t e = 0; e < elems; ++e) {
      const double nv = norm[slice_of[e]];
      if (nv == 0.0) continue;
      const double y = xs[e] / nv;
      g[e] += (n.grad[out_of[e]] * inv_count - y * dot[slice_of[e]]) / nv;
    }
  });
}

// Channel k of layer i as an [n_out x n_in] matrix, spatial axis summed.
Var channel_matrix(const WeightFeature& f, std::size_t i, std::size_t k) {
  const auto& sh = f.shapes[i];
  Var row = ad::slice(f.weights[i], k * sh.weight_size(), {sh.n_out * sh.n_in, sh.w});
  if (sh.w > 1) row = ad::matmul(row, Var::constant(Tensor::full({sh.w, 1}, 1.0)));
  return ad::reshape(row, {sh.n_out, sh.n_in});
}

}  // namespace

std::vector<std::size_t> WeightFeature::hidden_dims() const {
  std::vector<std::size_t> d;
  for (std::size_t i = 0; i + 1 < shapes.size(); ++i) d.push_back(shapes[i].n_out);
  return d;
}

void WeightFeature::validate() const {
  if (shapes.empty()) throw ShapeError("weight feature has no layers");
  if (weights.size() != shapes.size() || biases.size() != shapes.size()) {
    throw ShapeError("weight feature lists disagree in length");
  }
  const auto c = channels();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& sh = shapes[i];
    if (weights[i].shape() != Shape{c, sh.weight_size()} || biases[i].shape() != Shape{c, sh.n_out}) {
      throw ShapeError("weight feature layer " + std::to_string(i + 1) + " has wrong shape");
    }
    if (i > 0 && sh.n_in != shapes[i - 1].n_out) throw ShapeError("weight feature layers do not chain");
  }
}

WeightFeature lift(const MlpParams& params) {
  params.validate();
  return lift_layers(params.layers, [](const DenseLayer& l) -> const Tensor& { return l.weight; });
}

WeightFeature lift(const Conv1dParams& params) {
  params.validate();
  return lift_layers(params.layers, [](const ConvLayer& l) -> const Tensor& { return l.filter; });
}

MlpParams read_back_mlp(const WeightFeature& feat, std::size_t channel) {
  feat.validate();
  MlpParams p;
  for (std::size_t i = 0; i < feat.depth(); ++i) {
    const auto& sh = feat.shapes[i];
    if (sh.w != 1) throw ShapeError("read_back_mlp on a feature with spatial width");
    const auto w = channel_row(feat.weights[i].value(), channel);
    const auto b = channel_row(feat.biases[i].value(), channel);
    p.layers.push_back({Tensor({sh.n_out, sh.n_in}, {w.begin(), w.end()}),
                        Tensor({sh.n_out}, {b.begin(), b.end()})});
  }
  return p;
}

Conv1dParams read_back_conv1d(const WeightFeature& feat, std::size_t channel) {
  feat.validate();
  Conv1dParams p;
  for (std::size_t i = 0; i < feat.depth(); ++i) {
    const auto& sh = feat.shapes[i];
    const auto w = channel_row(feat.weights[i].value(), channel);
    const auto b = channel_row(feat.biases[i].value(), channel);
    p.layers.push_back({Tensor({sh.n_out, sh.n_in, sh.w}, {w.begin(), w.end()}),
                        Tensor({sh.n_out}, {b.begin(), b.end()})});
  }
  return p;
}

WeightFeature channel_mix(const Var& mix, const Var& bias, const WeightFeature& feat) {
  feat.validate();
  if (mix.shape().size() != 2 || mix.shape()[1] != feat.channels()) {
    throw ShapeError("channel_mix: mix must be [c' x " + std::to_string(feat.channels()) + "]");
  }
  if (bias.size() != mix.shape()[0]) throw ShapeError("channel_mix: bias length must be c'");
  WeightFeature out;
  out.shapes = feat.shapes;
  for (std::size_t i = 0; i < feat.depth(); ++i) {
    out.weights.push_back(ad::matmul(mix, feat.weights[i]));
    Var b = ad::matmul(mix, feat.biases[i]);
    if (i + 1 == feat.depth()) b = ad::add_col_broadcast(b, ad::reshape(bias, {bias.size()}));
    out.biases.push_back(b);
  }
  return out;
}

WeightFeature equiv_relu(const WeightFeature& feat) {
  WeightFeature out;
  out.shapes = feat.shapes;
  for (const auto& w : feat.weights) out.weights.push_back(ad::relu(w));
  for (const auto& b : feat.biases) out.biases.push_back(ad::relu(b));
  return out;
}

WeightFeature act_feature(const MonomialElement& g, const WeightFeature& feat) {
  feat.validate();
  g.validate();
  const auto L = feat.depth();
  if (g.layers.size() + 1 != L || g.hidden_dims() != feat.hidden_dims()) {
    throw GroupError("group element does not match feature dimensions");
  }
  WeightFeature out;
  out.shapes = feat.shapes;
  const auto c = feat.channels();
  for (std::size_t i = 0; i < L; ++i) {
    const auto& sh = feat.shapes[i];
    const LayerMonomial* gout = i + 1 < L ? &g.layers[i] : nullptr;
    const LayerMonomial* gin = i > 0 ? &g.layers[i - 1] : nullptr;
    std::vector<double> w, b;
    for (std::size_t k = 0; k < c; ++k) {
      const auto wk = channel_row(feat.weights[i].value(), k);
      const Tensor block({sh.weight_size()}, {wk.begin(), wk.end()});
      const Tensor moved = act_block(block, sh.n_out, sh.n_in, sh.w, gout, gin);
      w.insert(w.end(), moved.data().begin(), moved.data().end());
      const auto bk = channel_row(feat.biases[i].value(), k);
      if (gout) {
        const auto nb = act_vector(*gout, bk);
        b.insert(b.end(), nb.begin(), nb.end());
      } else {
        b.insert(b.end(), bk.begin(), bk.end());
      }
    }
    out.weights.push_back(Var::constant(Tensor({c, sh.weight_size()}, std::move(w))));
    out.biases.push_back(Var::constant(Tensor({c, sh.n_out}, std::move(b))));
  }
  return out;
}

WeightFeature scale_feature(const WeightFeature& feat, const std::vector<Var>& scales) {
  feat.validate();
  const auto L = feat.depth();
  if (scales.size() + 1 != L) throw ShapeError("scale_feature: one scale vector per hidden layer");
  for (std::size_t i = 0; i + 1 < L; ++i) {
    if (scales[i].size() != feat.shapes[i].n_out) throw ShapeError("scale_feature: scale length");
  }
  WeightFeature out;
  out.shapes = feat.shapes;
  for (std::size_t i = 0; i < L; ++i) {
    const Var* s_out = i + 1 < L ? &scales[i] : nullptr;
    const Var* s_in = i > 0 ? &scales[i - 1] : nullptr;
    out.weights.push_back(scale_block(feat.weights[i], feat.shapes[i], s_out, s_in));
    out.biases.push_back(s_out ? scale_block(feat.biases[i], {feat.shapes[i].n_out, 1, 1}, s_out, nullptr)
                               : feat.biases[i]);
  }
  return out;
}

Var invariant_pool(const WeightFeature& feat, PoolDiagnostics* diag) {
  feat.validate();
  const auto L = feat.depth();
  std::vector<Var> parts;
  for (std::size_t i = 0; i < L; ++i) {
    const auto& sh = feat.shapes[i];
    const bool out_hidden = i + 1 < L, in_hidden = i > 0;
    parts.push_back(pool_block(feat.weights[i], sh.n_out, sh.n_in, sh.w, out_hidden, in_hidden, diag));
    parts.push_back(pool_block(feat.biases[i], sh.n_out, 1, 1, out_hidden, false, diag));
  }
  return ad::concat(parts);
}

Var path_invariants(const WeightFeature& feat) {
  feat.validate();
  const auto L = feat.depth();
  std::vector<Var> parts;
  for (std::size_t k = 0; k < feat.channels(); ++k) {
    std::vector<Var> m;
    for (std::size_t i = 0; i < L; ++i) m.push_back(channel_matrix(feat, i, k));
    Var prod = m[0];
    for (std::size_t i = 1; i < L; ++i) prod = ad::matmul(m[i], prod);
    parts.push_back(prod);
    for (std::size_t i = 0; i < L; ++i) {
      const auto n = feat.shapes[i].n_out;
      Var v = ad::slice(feat.biases[i], k * n, {n, 1});
      for (std::size_t j = i + 1; j < L; ++j) v = ad::matmul(m[j], v);
      parts.push_back(v);
    }
  }
  return ad::asinh(ad::concat(parts));
}

std::size_t pooled_size(const std::vector<LayerShape>& shapes, std::size_t channels) {
  const auto L = shapes.size();
  std::size_t total = 0;
  for (std::size_t i = 0; i < L; ++i) {
    const auto& sh = shapes[i];
    const bool out_hidden = i + 1 < L, in_hidden = i > 0;
    total += channels * (out_hidden ? 1 : sh.n_out) * (in_hidden ? 1 : sh.n_in) * sh.w;
    total += channels * (out_hidden ? 1 : sh.n_out);
  }
  return total;
}

std::size_t path_size(const std::vector<LayerShape>& shapes, std::size_t channels) {
  const auto n_out = shapes.back().n_out;
  return channels * (n_out * shapes.front().n_in + shapes.size() * n_out);
}

MhaInvariantFeature mha_invariants(const MhaBlockParams& params) {
  params.validate();
  MhaInvariantFeature inv;
  for (std::size_t i = 0; i < params.heads(); ++i) {
    inv.a.push_back(matmul(params.wq[i], params.wk[i].transposed()));
    inv.b.push_back(matmul(params.wv[i], params.wo[i].transposed()));
  }
  return inv;
}

Tensor head_pool(const MhaInvariantFeature& inv, PoolMode mode) {
  if (inv.a.empty() || inv.a.size() != inv.b.size()) throw ShapeError("head_pool needs h >= 1");
  const auto dd = inv.a[0].size();
  std::vector<double> out(2 * dd, 0.0);
  for (std::size_t i = 0; i < inv.a.size(); ++i) {
    for (std::size_t e = 0; e < dd; ++e) {
      out[e] += inv.a[i][e];
      out[dd + e] += inv.b[i][e];
    }
  }
  if (mode == PoolMode::kMean) {
    for (auto& v : out) v /= static_cast<double>(inv.a.size());
  }
  return Tensor::vector(std::move(out));
}

Var head_pool_var(const MhaBlockParams& params, const std::vector<Var>& u, const std::vector<Var>& v) {
  params.validate();
  const auto h = params.heads();
  const bool transformed = !u.empty();
  if (transformed && (u.size() != h || v.size() != h)) throw ShapeError("head_pool_var: one U, V per head");
  std::vector<Var> a_parts, b_parts;
  for (std::size_t i = 0; i < h; ++i) {
    Var q = Var::constant(params.wq[i]), k = Var::constant(params.wk[i]);
    Var val = Var::constant(params.wv[i]), o = Var::constant(params.wo[i]);
    if (transformed) {
      q = ad::matmul(q, ad::transpose(u[i]));
      k = ad::matmul(k, ad::inverse(u[i]));
      val = ad::matmul(val, ad::transpose(v[i]));
      o = ad::matmul(o, ad::inverse(v[i]));
    }
    a_parts.push_back(ad::matmul(q, ad::transpose(k)));
    b_parts.push_back(ad::matmul(val, ad::transpose(o)));
  }
  auto mean_of = [h](const std::vector<Var>& parts) {
    Var acc = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) acc = ad::add(acc, parts[i]);
    return ad::scale(acc, 1.0 / static_cast<double>(h));
  };
  return ad::concat({mean_of(a_parts), mean_of(b_parts)});
}

double feature_norm(const WeightFeature& f) {
  double s = 0.0;
  for (const auto* list : {&f.weights, &f.biases})
    for (const auto& v : *list) {
      const double n = frobenius_norm(v.value());
      s += n * n;
    }
  return std::sqrt(s);
}

double feature_residual(const WeightFeature& a, const WeightFeature& b) {
  if (a.shapes != b.shapes || a.channels() != b.channels()) throw ShapeError("feature_residual: shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.depth(); ++i) {
    for (const auto& [x, y] : {std::pair{&a.weights[i], &b.weights[i]}, std::pair{&a.biases[i], &b.biases[i]}}) {
      const auto xv = x->value().data(), yv = y->value().data();
      for (std::size_t e = 0; e < xv.size(); ++e) s += (xv[e] - yv[e]) * (xv[e] - yv[e]);
    }
  }
  return std::sqrt(s) / std::max(feature_norm(b), 1e-12);
}

}  // namespace wsym
