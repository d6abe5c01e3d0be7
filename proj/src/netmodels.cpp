#include "wsym/netmodels.hpp"

#include <algorithm>
#include <cmath>

namespace wsym {

namespace {

void expect(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

std::vector<std::size_t> MlpParams::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(layers[0].weight.dim(1));
  for (const auto& l : layers) d.push_back(l.weight.dim(0));
  return d;
}

void MlpParams::validate() const {
  expect(!layers.empty(), "mlp needs at least one layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    expect(l.weight.rank() == 2, "mlp weight must be a matrix");
    expect(l.bias.rank() == 1 && l.bias.dim(0) == l.weight.dim(0),
           "mlp bias length must equal weight rows at layer " + std::to_string(i + 1));
    if (i > 0) {
      expect(l.weight.dim(1) == layers[i - 1].weight.dim(0),
             "mlp layer " + std::to_string(i + 1) + " input does not chain");
    }
  }
}

std::vector<std::size_t> Conv1dParams::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(layers[0].filter.dim(1));
  for (const auto& l : layers) d.push_back(l.filter.dim(0));
  return d;
}

std::vector<std::size_t> Conv1dParams::windows() const {
  std::vector<std::size_t> w;
  for (const auto& l : layers) w.push_back(l.window());
  return w;
}

void Conv1dParams::validate() const {
  expect(!layers.empty(), "conv1d needs at least one layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    expect(l.filter.rank() == 3, "conv1d filter must be [out x in x w]");
    expect(l.bias.rank() == 1 && l.bias.dim(0) == l.filter.dim(0), "conv1d bias length");
    if (i > 0) expect(l.filter.dim(1) == layers[i - 1].filter.dim(0), "conv1d channels chain");
  }
}

void MhaBlockParams::validate() const {
  const auto h = wq.size();
  expect(h >= 1, "mha needs at least one head");
  expect(wk.size() == h && wv.size() == h && wo.size() == h,
         "mha projection lists must all have one entry per head");
  const auto d = wq[0].dim(0), dh = wq[0].dim(1);
  for (const auto* list : {&wq, &wk, &wv, &wo}) {
    for (const auto& w : *list) {
      expect(w.rank() == 2 && w.dim(0) == d && w.dim(1) == dh,
             "mha projections must all be [d x d_h]");
    }
  }
  if (ff) {
    const auto df = ff->w_a.dim(0);
    expect(ff->w_a.rank() == 2 && ff->w_a.dim(1) == d, "feedforward W_A must be [d_f x d]");
    expect(ff->b_a.rank() == 1 && ff->b_a.dim(0) == df, "feedforward b_A length");
    expect(ff->w_b.rank() == 2 && ff->w_b.dim(0) == d && ff->w_b.dim(1) == df,
           "feedforward W_B must be [d x d_f]");
    expect(ff->b_b.rank() == 1 && ff->b_b.dim(0) == d, "feedforward b_B length");
  }
}

Arch arch_of(const Params& p) { return static_cast<Arch>(p.index()); }

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::kMlp: return "mlp";
    case Arch::kConv1d: return "conv1d";
    case Arch::kMha: return "mha";
  }
  return "?";
}

Arch parse_arch(const std::string& name) {
  if (name == "mlp") return Arch::kMlp;
  if (name == "conv1d") return Arch::kConv1d;
  if (name == "mha") return Arch::kMha;
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

std::vector<std::size_t> signature(const Params& p) {
  std::vector<std::size_t> sig{p.index()};
  if (const auto* m = std::get_if<MlpParams>(&p)) {
    auto d = m->dims();
    sig.insert(sig.end(), d.begin(), d.end());
  } else if (const auto* c = std::get_if<Conv1dParams>(&p)) {
    auto d = c->dims();
    auto w = c->windows();
    sig.insert(sig.end(), d.begin(), d.end());
    sig.insert(sig.end(), w.begin(), w.end());
  } else {
    const auto& a = std::get<MhaBlockParams>(p);
    sig.insert(sig.end(), {a.heads(), a.model_dim(), a.head_dim(), a.ff_dim()});
  }
  return sig;
}

Tensor mlp_forward(const MlpParams& params, const Tensor& x) {
  params.validate();
  if (x.size() != params.layers[0].weight.dim(1)) {
    throw ShapeError("mlp_forward: input has " + std::to_string(x.size()) + " entries, expected " +
                     std::to_string(params.layers[0].weight.dim(1)));
  }
  const auto out = mlp_forward_batch(params, x.reshaped({1, x.size()}));
  return out.reshaped({out.size()});
}

Tensor mlp_forward_batch(const MlpParams& params, const Tensor& x) {
  params.validate();
  if (x.rank() != 2 || x.dim(1) != params.layers[0].weight.dim(1)) {
    throw ShapeError("mlp_forward_batch: input shape " + shape_str(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Tensor z = matmul(h, l.weight.transposed());
    const auto cols = z.dim(1);
    auto zd = z.data();
    const bool last = i + 1 == params.layers.size();
    for (std::size_t r = 0; r < z.dim(0); ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        double& v = zd[r * cols + c];
        v += l.bias[c];
        if (!last && v < 0.0) v = 0.0;
      }
    }
    h = std::move(z);
  }
  return h;
}

Tensor conv1d_forward(const Conv1dParams& params, const Tensor& x) {
  params.validate();
  if (x.rank() != 2 || x.dim(0) != params.layers[0].filter.dim(1)) {
    throw ShapeError("conv1d_forward: input must be [n_0 x T], got " + shape_str(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    const auto nout = l.filter.dim(0), nin = l.filter.dim(1), w = l.filter.dim(2);
    const auto t = h.dim(1);
    if (t < w) {
      throw ShapeError("conv1d_forward: sequence length " + std::to_string(t) +
                       " shorter than window " + std::to_string(w) + " at layer " +
                       std::to_string(i + 1));
    }
    const auto tout = t - w + 1;
    Tensor out({nout, tout});
    const bool last = i + 1 == params.layers.size();
    for (std::size_t o = 0; o < nout; ++o) {
      for (std::size_t p = 0; p < tout; ++p) {
        double acc = l.bias[o];
        for (std::size_t c = 0; c < nin; ++c)
          for (std::size_t k = 0; k < w; ++k)
            acc += l.filter[(o * nin + c) * w + k] * h.at(c, p + k);
        out.at(o, p) = (!last && acc < 0.0) ? 0.0 : acc;
      }
    }
    h = std::move(out);
  }
  return h;
}

Tensor mha_forward(const MhaBlockParams& params, const Tensor& x, MhaOptions options) {
  params.validate();
  const auto d = params.model_dim();
  if (x.rank() != 2 || x.dim(1) != d) {
    throw ShapeError("mha_forward: tokens must be [L x " + std::to_string(d) + "], got " +
                     shape_str(x.shape()));
  }
  const double temp = options.temperature ? 1.0 / std::sqrt(static_cast<double>(params.head_dim()))
                                          : 1.0;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < params.heads(); ++i) {
    const Tensor q = matmul(x, params.wq[i]);
    const Tensor k = matmul(x, params.wk[i]);
    const Tensor v = matmul(x, params.wv[i]);
    const Tensor attn = softmax_rows(temp * matmul(q, k.transposed()));
    out = out + matmul(matmul(attn, v), params.wo[i].transposed());
  }
  if (!params.ff) return out;

  const auto& ff = *params.ff;
  Tensor hidden = matmul(out, ff.w_a.transposed());
  for (std::size_t r = 0; r < hidden.dim(0); ++r)
    for (std::size_t c = 0; c < hidden.dim(1); ++c)
      hidden.at(r, c) = std::max(0.0, hidden.at(r, c) + ff.b_a[c]);
  Tensor y = matmul(hidden, ff.w_b.transposed());
  for (std::size_t r = 0; r < y.dim(0); ++r)
    for (std::size_t c = 0; c < y.dim(1); ++c) y.at(r, c) += ff.b_b[c];
  return y;
}

Tensor random_normal(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = stddev * rng.normal();
  return t;
}

MlpParams random_mlp(const std::vector<std::size_t>& dims, Rng& rng, double init_scale) {
  if (dims.size() < 2) throw ShapeError("random_mlp needs at least input and output dims");
  MlpParams p;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    const double sd = init_scale / std::sqrt(static_cast<double>(dims[i - 1]));
    p.layers.push_back({random_normal({dims[i], dims[i - 1]}, rng, sd),
                        random_normal({dims[i]}, rng, 0.1 * init_scale)});
  }
  return p;
}

Conv1dParams random_conv1d(const std::vector<std::size_t>& channels,
                           const std::vector<std::size_t>& windows, Rng& rng, double init_scale) {
  if (channels.size() < 2 || windows.size() + 1 != channels.size()) {
    throw ShapeError("random_conv1d: need one window per layer");
  }
  Conv1dParams p;
  for (std::size_t i = 1; i < channels.size(); ++i) {
    const auto w = windows[i - 1];
    if (w == 0) throw ShapeError("conv1d window must be >= 1");
    const double sd = init_scale / std::sqrt(static_cast<double>(channels[i - 1] * w));
    p.layers.push_back({random_normal({channels[i], channels[i - 1], w}, rng, sd),
                        random_normal({channels[i]}, rng, 0.1 * init_scale)});
  }
  return p;
}

MhaBlockParams random_mha(std::size_t heads, std::size_t model_dim, std::size_t head_dim,
                          std::size_t ff_dim, Rng& rng, double init_scale) {
  MhaBlockParams p;
  const double sd = init_scale / std::sqrt(static_cast<double>(model_dim));
  for (auto* list : {&p.wq, &p.wk, &p.wv, &p.wo}) {
    for (std::size_t i = 0; i < heads; ++i) list->push_back(random_normal({model_dim, head_dim}, rng, sd));
  }
  if (ff_dim > 0) {
    p.ff = FeedForward{random_normal({ff_dim, model_dim}, rng, sd),
                       random_normal({ff_dim}, rng, 0.1 * init_scale),
                       random_normal({model_dim, ff_dim}, rng,
                                     init_scale / std::sqrt(static_cast<double>(ff_dim))),
                       random_normal({model_dim}, rng, 0.1 * init_scale)};
  }
  p.validate();
  return p;
}

std::vector<double> flatten_params(const Params& p) {
  std::vector<double> out;
  auto put = [&](const Tensor& t) { out.insert(out.end(), t.data().begin(), t.data().end()); };
  if (const auto* m = std::get_if<MlpParams>(&p)) {
    for (const auto& l : m->layers) {
      put(l.weight);
      put(l.bias);
    }
  } else if (const auto* c = std::get_if<Conv1dParams>(&p)) {
    for (const auto& l : c->layers) {
      put(l.filter);
      put(l.bias);
    }
  } else {
    const auto& a = std::get<MhaBlockParams>(p);
    for (const auto* list : {&a.wq, &a.wk, &a.wv, &a.wo})
      for (const auto& t : *list) put(t);
    if (a.ff) {
      for (const auto* t : {&a.ff->w_a, &a.ff->b_a, &a.ff->w_b, &a.ff->b_b}) put(*t);
    }
  }
  return out;
}

double params_rel_diff(const Params& a, const Params& b) {
  if (signature(a) != signature(b)) throw ShapeError("params_rel_diff: architectures differ");
  const auto x = flatten_params(a), y = flatten_params(b);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - y[i]) * (x[i] - y[i]);
    den += y[i] * y[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace wsym
