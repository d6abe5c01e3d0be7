#include "wsym/zoogen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wsym/autodiff.hpp"
#include "wsym/symmetry.hpp"

namespace wsym {

namespace {

constexpr std::uint64_t kDataSalt = 0xDA7A;
constexpr std::uint64_t kInitSalt = 1;
constexpr std::uint64_t kNoiseSalt = 2;
constexpr double kClipNorm = 10.0;

bool is_classification(const std::string& task) {
  if (task == "2d-two-class") return true;
  if (task == "1d-regression") return false;
  throw std::invalid_argument("unknown mlp task '" + task + "'");
}

Hyper sample_hyper(const HyperRanges& r, Rng& rng) {
  Hyper h;
  h.learning_rate = rng.log_uniform(r.lr_low, r.lr_high);
  h.epochs = r.epochs_low + rng.below(r.epochs_high - r.epochs_low + 1);
  h.label_noise = rng.uniform(r.noise_low, r.noise_high);
  h.init_scale = rng.uniform(r.init_low, r.init_high);
  h.seed = rng.next();
  return h;
}

// Row-major batch data for the toy tasks.
struct Dataset {
  std::vector<double> x;  // [n x in]
  std::vector<double> y;  // class index or target
  std::size_t n = 0, in = 0;
};

Dataset mlp_task_data(const std::string& task, std::size_t n, Rng& rng) {
  Dataset d;
  d.n = n;
  if (is_classification(task)) {
    d.in = 2;
    const double r2 = 2.0 / M_PI;  // disc area 2 of the square's 4
    for (std::size_t i = 0; i < n; ++i) {
      const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
      d.x.insert(d.x.end(), {a, b});
      d.y.push_back(a * a + b * b < r2 ? 1.0 : 0.0);
    }
  } else {
    d.in = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = rng.uniform(-1.0, 1.0);
      d.x.push_back(a);
      d.y.push_back(std::sin(3.0 * a));
    }
  }
  return d;
}

// Full-batch forward/backward of a ReLU MLP on raw arrays.
struct MlpTrainer {
  MlpParams& p;
  std::vector<std::vector<double>> acts;  // per layer input, [n x n_{i-1}]
  std::vector<std::vector<double>> pre;   // per layer pre-activation

  std::vector<double> forward(const std::vector<double>& x, std::size_t n) {
    acts.assign(1, x);
    pre.clear();
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      const auto& l = p.layers[i];
      const auto no = l.weight.dim(0), ni = l.weight.dim(1);
      const auto& h = acts.back();
      std::vector<double> z(n * no);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t r = 0; r < no; ++r) {
          double acc = l.bias[r];
          for (std::size_t c = 0; c < ni; ++c) acc += l.weight.at(r, c) * h[s * ni + c];
          z[s * no + r] = acc;
        }
      pre.push_back(z);
      if (i + 1 < p.layers.size()) {
        for (auto& v : z) v = std::max(v, 0.0);
        acts.push_back(std::move(z));
      } else {
        return z;
      }
    }
    return {};
  }

  // dout is dLoss/d(output) [n x n_L]; returns weight and bias grads per layer.
  std::vector<std::pair<Tensor, Tensor>> backward(std::vector<double> dout, std::size_t n) {
    std::vector<std::pair<Tensor, Tensor>> grads(p.layers.size());
    for (std::size_t i = p.layers.size(); i-- > 0;) {
      const auto& l = p.layers[i];
      const auto no = l.weight.dim(0), ni = l.weight.dim(1);
      if (i + 1 < p.layers.size()) {
        for (std::size_t e = 0; e < dout.size(); ++e)
          if (pre[i][e] <= 0.0) dout[e] = 0.0;
      }
      Tensor gw({no, ni}), gb({no});
      std::vector<double> din(n * ni, 0.0);
      const auto& h = acts[i];
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t r = 0; r < no; ++r) {
          const double g = dout[s * no + r];
          if (g == 0.0) continue;
          gb[r] += g;
          for (std::size_t c = 0; c < ni; ++c) {
            gw.at(r, c) += g * h[s * ni + c];
            din[s * ni + c] += g * l.weight.at(r, c);
          }
        }
      grads[i] = {std::move(gw), std::move(gb)};
      dout = std::move(din);
    }
    return grads;
  }
};

template <typename Grads>
double clip_factor(const Grads& norms_sq) {
  const double norm = std::sqrt(norms_sq);
  return norm > kClipNorm ? kClipNorm / norm : 1.0;
}

void certify(const Params& a, const Params& b, const EquivOptions& opts, Rng& rng,
             const std::string& id) {
  const auto r = check_functional_equiv(a, b, opts, rng);
  if (!r.equivalent) {
    std::ostringstream ss;
    ss << "augmented copy of " << id << " is not functionally equivalent (max abs diff "
       << r.max_abs_diff << ", rel " << r.max_rel_diff << "); the group action is broken";
    throw CertificationError(ss.str());
  }
}

}  // namespace

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw SchemaError("unknown split '" + name + "'");
}

void HyperRanges::validate() const {
  if (!(lr_low > 0.0) || !(lr_high >= lr_low) || epochs_high < epochs_low || !(noise_low >= 0.0) ||
      !(noise_high >= noise_low) || noise_high >= 0.5 || !(init_low > 0.0) || !(init_high >= init_low)) {
    throw std::invalid_argument("degenerate hyperparameter ranges");
  }
}

std::vector<Split> assign_splits(std::size_t n, Rng& rng) {
  const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(n)));
  const auto order = rng.permutation(n);
  std::vector<Split> s(n, Split::kTest);
  for (std::size_t k = 0; k < n; ++k) {
    s[order[k]] = k < n_train ? Split::kTrain : (k < n_train + n_val ? Split::kVal : Split::kTest);
  }
  return s;
}

MlpParams train_mlp_entry(const MlpZooOptions& o, const Hyper& hyper, std::uint64_t task_seed,
                          double* label) {
  const bool classify = is_classification(o.task);
  Rng data_rng = Rng::stream(task_seed, kDataSalt);
  const Dataset train = mlp_task_data(o.task, o.train_points, data_rng);
  const Dataset test = mlp_task_data(o.task, o.test_points, data_rng);

  std::vector<std::size_t> dims{train.in};
  dims.insert(dims.end(), o.hidden.begin(), o.hidden.end());
  dims.push_back(classify ? 2 : 1);
  Rng init_rng = Rng::stream(hyper.seed, kInitSalt);
  MlpParams p = random_mlp(dims, init_rng, hyper.init_scale);

  Rng noise_rng = Rng::stream(hyper.seed, kNoiseSalt);
  std::vector<double> targets = train.y;
  for (auto& t : targets) {
    if (classify) {
      if (noise_rng.uniform() < hyper.label_noise) t = 1.0 - t;
    } else {
      t += hyper.label_noise * noise_rng.normal();
    }
  }

  MlpTrainer trainer{p, {}, {}};
  const auto n = train.n;
  const auto nout = dims.back();
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto out = trainer.forward(train.x, n);
    std::vector<double> dout(out.size());
    for (std::size_t s = 0; s < n; ++s) {
      if (classify) {
        const double m = std::max(out[2 * s], out[2 * s + 1]);
        const double e0 = std::exp(out[2 * s] - m), e1 = std::exp(out[2 * s + 1] - m);
        const double p1 = e1 / (e0 + e1);
        dout[2 * s] = ((1.0 - p1) - (1.0 - targets[s])) / static_cast<double>(n);
        dout[2 * s + 1] = (p1 - targets[s]) / static_cast<double>(n);
      } else {
        dout[s * nout] = 2.0 * (out[s] - targets[s]) / static_cast<double>(n);
      }
    }
    auto grads = trainer.backward(std::move(dout), n);
    double sq = 0.0;
    for (const auto& [gw, gb] : grads) {
      sq += frobenius_norm(gw) * frobenius_norm(gw) + frobenius_norm(gb) * frobenius_norm(gb);
    }
    const double step = hyper.learning_rate * clip_factor(sq);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      p.layers[i].weight = p.layers[i].weight - step * grads[i].first;
      p.layers[i].bias = p.layers[i].bias - step * grads[i].second;
    }
  }

  const auto out = trainer.forward(test.x, test.n);
  double score = 0.0;
  if (classify) {
    for (std::size_t s = 0; s < test.n; ++s) {
      const double pred = out[2 * s + 1] > out[2 * s] ? 1.0 : 0.0;
      score += pred == test.y[s] ? 1.0 : 0.0;
    }
    score /= static_cast<double>(test.n);
  } else {
    double mse = 0.0;
    for (std::size_t s = 0; s < test.n; ++s) mse += (out[s] - test.y[s]) * (out[s] - test.y[s]);
    score = 1.0 / (1.0 + mse / static_cast<double>(test.n));
  }
  if (label) *label = score;
  return p;
}

namespace {

struct SeqData {
  std::vector<Tensor> x;
  std::vector<double> y;
};

SeqData mha_task_data(const MhaZooOptions& o, std::size_t n, Rng& rng) {
  const bool majority = o.task == "sequence-majority";
  if (!majority && o.task != "sum-sign") throw std::invalid_argument("unknown mha task '" + o.task + "'");
  SeqData d;
  for (std::size_t s = 0; s < n; ++s) {
    Tensor x({o.seq_len, o.model_dim});
    double total = 0.0;
    for (std::size_t t = 0; t < o.seq_len; ++t) {
      const double v = majority ? (rng.uniform() < 0.5 ? -1.0 : 1.0) : rng.normal();
      total += v;
      x.at(t, 0) = v;
      for (std::size_t c = 1; c < o.model_dim; ++c) x.at(t, c) = 0.5 * rng.normal();
    }
    d.x.push_back(std::move(x));
    d.y.push_back(total > 0.0 ? 1.0 : 0.0);
  }
  return d;
}

ad::Var mha_logit(const std::vector<ad::Var>& q, const std::vector<ad::Var>& k,
                  const std::vector<ad::Var>& v, const std::vector<ad::Var>& o,
                  const std::vector<ad::Var>& ff, const Tensor& x) {
  const auto X = ad::Var::constant(x);
  ad::Var out;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto attn = ad::softmax_rows(ad::matmul(ad::matmul(X, q[i]), ad::transpose(ad::matmul(X, k[i]))));
    const auto head = ad::matmul(ad::matmul(attn, ad::matmul(X, v[i])), ad::transpose(o[i]));
    out = i == 0 ? head : ad::add(out, head);
  }
  if (!ff.empty()) {
    const auto hidden = ad::relu(ad::add_row_broadcast(ad::matmul(out, ad::transpose(ff[0])), ff[1]));
    out = ad::add_row_broadcast(ad::matmul(hidden, ad::transpose(ff[2])), ff[3]);
  }
  const auto d = x.dim(1);
  Tensor e0({d, 1});
  e0[0] = 1.0;
  return ad::mean(ad::matmul(out, ad::Var::constant(e0)));
}

}  // namespace

MhaBlockParams train_mha_entry(const MhaZooOptions& o, const Hyper& hyper, std::uint64_t task_seed,
                               double* label) {
  Rng data_rng = Rng::stream(task_seed, kDataSalt);
  const SeqData train = mha_task_data(o, o.train_points, data_rng);
  const SeqData test = mha_task_data(o, o.test_points, data_rng);

  Rng init_rng = Rng::stream(hyper.seed, kInitSalt);
  MhaBlockParams p = random_mha(o.heads, o.model_dim, o.head_dim, o.ff_dim, init_rng, hyper.init_scale);

  Rng noise_rng = Rng::stream(hyper.seed, kNoiseSalt);
  std::vector<double> targets = train.y;
  for (auto& t : targets)
    if (noise_rng.uniform() < hyper.label_noise) t = 1.0 - t;
  const Tensor target_t = Tensor::vector(targets);

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::vector<ad::Var> q, k, v, out, ff;
    for (std::size_t i = 0; i < o.heads; ++i) {
      q.push_back(ad::Var::param(p.wq[i]));
      k.push_back(ad::Var::param(p.wk[i]));
      v.push_back(ad::Var::param(p.wv[i]));
      out.push_back(ad::Var::param(p.wo[i]));
    }
    if (p.ff) {
      ff = {ad::Var::param(p.ff->w_a), ad::Var::param(p.ff->b_a), ad::Var::param(p.ff->w_b),
            ad::Var::param(p.ff->b_b)};
    }
    std::vector<ad::Var> preds;
    for (const auto& x : train.x) preds.push_back(ad::sigmoid(mha_logit(q, k, v, out, ff, x)));
    const auto loss = ad::bce_loss(ad::concat(preds), target_t);
    ad::backward(loss);

    double sq = 0.0;
    for (const auto* list : {&q, &k, &v, &out, &ff})
      for (const auto& w : *list) sq += std::pow(frobenius_norm(w.grad()), 2);
    const double step = hyper.learning_rate * clip_factor(sq);
    for (std::size_t i = 0; i < o.heads; ++i) {
      p.wq[i] = p.wq[i] - step * q[i].grad();
      p.wk[i] = p.wk[i] - step * k[i].grad();
      p.wv[i] = p.wv[i] - step * v[i].grad();
      p.wo[i] = p.wo[i] - step * out[i].grad();
    }
    if (p.ff) {
      p.ff->w_a = p.ff->w_a - step * ff[0].grad();
      p.ff->b_a = p.ff->b_a - step * ff[1].grad();
      p.ff->w_b = p.ff->w_b - step * ff[2].grad();
      p.ff->b_b = p.ff->b_b - step * ff[3].grad();
    }
  }

  double correct = 0.0;
  for (std::size_t s = 0; s < test.x.size(); ++s) {
    const Tensor y = mha_forward(p, test.x[s]);
    double logit = 0.0;
    for (std::size_t t = 0; t < y.dim(0); ++t) logit += y.at(t, 0);
    correct += ((logit > 0.0 ? 1.0 : 0.0) == test.y[s]) ? 1.0 : 0.0;
  }
  if (label) *label = correct / static_cast<double>(test.x.size());
  return p;
}

Zoo gen_mlp_zoo(const MlpZooOptions& o, std::uint64_t seed) {
  if (o.n < 10) throw std::invalid_argument("gen_mlp_zoo: need at least 10 entries");
  o.ranges.validate();
  is_classification(o.task);
  Rng rng(seed);
  Zoo zoo;
  zoo.task = o.task;
  zoo.arch = Arch::kMlp;
  const auto splits = assign_splits(o.n, rng);
  for (std::size_t i = 0; i < o.n; ++i) {
    ZooEntry e;
    e.id = "m" + std::to_string(i);
    e.split = splits[i];
    e.hyper = sample_hyper(o.ranges, rng);
    e.params = train_mlp_entry(o, e.hyper, seed, &e.label);
    zoo.entries.push_back(std::move(e));
  }
  return zoo;
}

Zoo gen_mha_zoo(const MhaZooOptions& o, std::uint64_t seed) {
  if (o.n < 10) throw std::invalid_argument("gen_mha_zoo: need at least 10 entries");
  o.ranges.validate();
  Rng rng(seed);
  Zoo zoo;
  zoo.task = o.task;
  zoo.arch = Arch::kMha;
  const auto splits = assign_splits(o.n, rng);
  for (std::size_t i = 0; i < o.n; ++i) {
    ZooEntry e;
    e.id = "t" + std::to_string(i);
    e.split = splits[i];
    e.hyper = sample_hyper(o.ranges, rng);
    e.params = train_mha_entry(o, e.hyper, seed, &e.label);
    zoo.entries.push_back(std::move(e));
  }
  return zoo;
}

Zoo augment_zoo(const Zoo& zoo, const AugmentOptions& o, std::uint64_t seed) {
  if (o.factor < 2) throw std::invalid_argument("augment_zoo: factor must be >= 2");
  if (o.scale_exp < 1 || o.scale_exp > 4) throw std::invalid_argument("augment_zoo: scale exponent in 1..4");
  if (!(o.gl_spread > 0.0)) throw std::invalid_argument("augment_zoo: GL spread must be positive");
  Rng rng(seed);
  Zoo out = zoo;
  const double high = std::pow(10.0, o.scale_exp);
  EquivOptions eq;
  eq.tol = 1e-6 * high;
  EquivOptions eq_gl;
  eq_gl.samples = 20;
  eq_gl.relative = true;
  eq_gl.tol = 1e-6;
  for (std::size_t copy = 1; copy < o.factor; ++copy) {
    for (const auto& src : zoo.entries) {
      ZooEntry e = src;
      e.id = src.id + "-a" + std::to_string(copy);
      json element;
      if (const auto* m = std::get_if<MlpParams>(&src.params)) {
        const auto g = sample_monomial(hidden_dims(*m), 1.0, high, o.permute, rng);
        e.params = monomial_act(g, *m);
        element = group_to_json(g);
        if (o.certify) certify(src.params, e.params, eq, rng, src.id);
      } else if (const auto* c = std::get_if<Conv1dParams>(&src.params)) {
        const auto g = sample_monomial(hidden_dims(*c), 1.0, high, o.permute, rng);
        e.params = monomial_act(g, *c);
        element = group_to_json(g);
        if (o.certify) certify(src.params, e.params, eq, rng, src.id);
      } else {
        const auto& a = std::get<MhaBlockParams>(src.params);
        const auto g = sample_gl(a.heads(), a.head_dim(), o.gl_spread, rng, o.permute);
        e.params = gl_act(g, a);
        element = group_to_json(g);
        if (o.certify) certify(src.params, e.params, eq_gl, rng, src.id);
      }
      e.provenance = "augmented-from:" + src.id + ":" + hex64(fnv1a64(dump_json(element)));
      out.entries.push_back(std::move(e));
    }
  }
  return out;
}

json zoo_to_json(const Zoo& zoo) {
  json entries = json::array();
  for (const auto& e : zoo.entries) {
    entries.push_back(json{{"id", e.id},
                           {"split", split_name(e.split)},
                           {"label", e.label},
                           {"hyper",
                            {{"learning_rate", e.hyper.learning_rate},
                             {"epochs", e.hyper.epochs},
                             {"label_noise", e.hyper.label_noise},
                             {"init_scale", e.hyper.init_scale},
                             {"seed", e.hyper.seed}}},
                           {"provenance", e.provenance},
                           {"params", params_to_json(e.params)}});
  }
  return json{{"version", kSchemaVersion},
              {"kind", "zoo"},
              {"task", zoo.task},
              {"arch", arch_name(zoo.arch)},
              {"entries", std::move(entries)}};
}

Zoo zoo_from_json(const json& j) {
  require_version(j);
  try {
    if (j.at("kind") != "zoo") throw SchemaError("expected a zoo document");
    Zoo zoo;
    zoo.task = j.at("task").get<std::string>();
    zoo.arch = parse_arch(j.at("arch").get<std::string>());
    for (const auto& je : j.at("entries")) {
      ZooEntry e;
      e.id = je.at("id").get<std::string>();
      e.split = parse_split(je.at("split").get<std::string>());
      e.label = je.at("label").get<double>();
      const auto& h = je.at("hyper");
      e.hyper = {h.at("learning_rate").get<double>(), h.at("epochs").get<std::size_t>(),
                 h.at("label_noise").get<double>(), h.at("init_scale").get<double>(),
                 h.at("seed").get<std::uint64_t>()};
      e.provenance = je.at("provenance").get<std::string>();
      e.params = params_from_json(je.at("params"));
      if (arch_of(e.params) != zoo.arch) throw SchemaError("entry " + e.id + " has the wrong architecture");
      if (!(e.label >= 0.0 && e.label <= 1.0)) throw SchemaError("entry " + e.id + " label outside [0, 1]");
      zoo.entries.push_back(std::move(e));
    }
    return zoo;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed zoo: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("malformed zoo: ") + e.what());
  }
}

void save_zoo(const Zoo& zoo, const std::filesystem::path& path) {
  write_file(path, dump_json(zoo_to_json(zoo)));
}

Zoo load_zoo(const std::filesystem::path& path) { return zoo_from_json(parse_json(read_file(path))); }

std::string zoo_manifest_csv(const Zoo& zoo) {
  std::ostringstream ss;
  ss << "id,split,label,provenance\n";
  char buf[32];
  for (const auto& e : zoo.entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.label);
    ss << e.id << ',' << split_name(e.split) << ',' << buf << ',' << e.provenance << '\n';
  }
  return ss.str();
}

std::vector<const ZooEntry*> select(const Zoo& zoo, Split split, bool originals_only, double threshold) {
  std::vector<const ZooEntry*> out;
  for (const auto& e : zoo.entries) {
    if (e.split != split) continue;
    if (originals_only && !e.original()) continue;
    if (e.label < threshold) continue;
    out.push_back(&e);
  }
  return out;
}

}  // namespace wsym
