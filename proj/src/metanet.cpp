#include "wsym/metanet.hpp"

#include <cmath>
#include <sstream>

#include "wsym/metrics.hpp"
#include "wsym/optim.hpp"
#include "wsym/statfeat.hpp"

namespace wsym {

namespace {

using ad::Var;

constexpr std::uint64_t kQuasiSalt = 0x9A51;
constexpr std::uint64_t kShuffleSalt = 0x5F1E;

Var zeros(std::size_t n) { return Var::param(Tensor({n})); }

std::string loss_name(Loss l) { return l == Loss::kBce ? "bce" : "mse"; }

Loss parse_loss(const std::string& s) {
  if (s == "bce") return Loss::kBce;
  if (s == "mse") return Loss::kMse;
  throw SchemaError("unknown loss '" + s + "'");
}

MlpParams feedforward_as_mlp(const MhaBlockParams& p) {
  MlpParams m;
  m.layers.push_back({p.ff->w_a, p.ff->b_a});
  m.layers.push_back({p.ff->w_b, p.ff->b_b});
  return m;
}

Var monomial_readout(const WeightFeature& f) {
  return ad::concat({invariant_pool(f), path_invariants(f)});
}

void require_target(const Metanet& model, const Params& params) {
  if (signature(params) != model.target) {
    throw std::invalid_argument("metanet input does not match the model's architecture target");
  }
}

}  // namespace

MetanetConfig MetanetConfig::desk() {
  MetanetConfig c;
  c.channels = {8, 8, 4};
  c.head = {64};
  return c;
}

void MetanetConfig::validate() const {
  if (channels.empty()) throw std::invalid_argument("metanet needs at least one equivariant layer");
  for (auto c : channels)
    if (c == 0) throw std::invalid_argument("channel widths must be positive");
  for (auto h : head)
    if (h == 0) throw std::invalid_argument("head widths must be positive");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (batch == 0) throw std::invalid_argument("batch size must be positive");
  if (!(eps_init >= 0.0 && eps_init <= kScaleEpsMax)) throw std::invalid_argument("eps_init out of range");
}

json config_to_json(const MetanetConfig& c) {
  return json{{"arch", arch_name(c.arch)}, {"channels", c.channels},   {"quasi", c.quasi},
              {"head", c.head},            {"loss", loss_name(c.loss)}, {"learning_rate", c.learning_rate},
              {"batch", c.batch},          {"epochs", c.epochs},        {"seed", c.seed},
              {"eps_init", c.eps_init},    {"freeze_eps", c.freeze_eps}};
}

MetanetConfig config_from_json(const json& j, const MetanetConfig& base) {
  if (!j.is_object()) throw SchemaError("config must be a JSON object");
  MetanetConfig c = base;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "arch") c.arch = parse_arch(v.get<std::string>());
      else if (k == "channels") c.channels = v.get<std::vector<std::size_t>>();
      else if (k == "quasi") c.quasi = v.get<bool>();
      else if (k == "head") c.head = v.get<std::vector<std::size_t>>();
      else if (k == "loss") c.loss = parse_loss(v.get<std::string>());
      else if (k == "learning_rate") c.learning_rate = v.get<double>();
      else if (k == "batch") c.batch = v.get<std::size_t>();
      else if (k == "epochs") c.epochs = v.get<std::size_t>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "eps_init") c.eps_init = v.get<double>();
      else if (k == "freeze_eps") c.freeze_eps = v.get<bool>();
      else if (k != "version") throw SchemaError("unknown config field '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_hash(const MetanetConfig& c) { return hex64(fnv1a64(dump_json(config_to_json(c)))); }

std::vector<Var> Metanet::parameters() const {
  std::vector<Var> p;
  p.insert(p.end(), mixes.begin(), mixes.end());
  p.insert(p.end(), mix_biases.begin(), mix_biases.end());
  if (scale_net) {
    auto q = scale_net->parameters();
    p.insert(p.end(), q.begin(), q.end());
  }
  if (gl_net) {
    auto q = gl_net->parameters();
    p.insert(p.end(), q.begin(), q.end());
  }
  p.insert(p.end(), head_w.begin(), head_w.end());
  p.insert(p.end(), head_b.begin(), head_b.end());
  return p;
}

Metanet with_parameters(const Metanet& model, const std::vector<Var>& params) {
  if (params.size() != model.parameters().size()) throw std::invalid_argument("with_parameters: count mismatch");
  Metanet m = model;
  std::size_t i = 0;
  auto take = [&](Var& v) {
    if (params[i].shape() != v.shape()) throw ShapeError("with_parameters: shape mismatch");
    v = params[i++];
  };
  for (auto& v : m.mixes) take(v);
  for (auto& v : m.mix_biases) take(v);
  if (m.scale_net) {
    for (auto& n : m.scale_net->nets)
      for (auto* v : {&n.w1, &n.b1, &n.wg, &n.bg, &n.w2, &n.b2}) take(*v);
    if (!m.scale_net->freeze_eps)
      for (auto& v : m.scale_net->eps) take(v);
  }
  if (m.gl_net) {
    for (auto* v : {&m.gl_net->w1, &m.gl_net->b1, &m.gl_net->w2, &m.gl_net->b2}) take(*v);
    if (!m.gl_net->freeze_eps) take(m.gl_net->eps);
  }
  for (auto& v : m.head_w) take(v);
  for (auto& v : m.head_b) take(v);
  return m;
}

std::size_t Metanet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : parameters()) n += v.size();
  return n;
}

Metanet build(const MetanetConfig& config, const Params& example) {
  config.validate();
  if (arch_of(example) != config.arch) {
    throw std::invalid_argument("config architecture " + arch_name(config.arch) +
                                " does not match the example " + arch_name(arch_of(example)));
  }
  Metanet m;
  m.config = config;
  m.target = signature(example);
  Rng rng(config.seed);

  std::size_t invariant_dim = 0;
  const auto* mha = std::get_if<MhaBlockParams>(&example);
  if (mha) {
    invariant_dim = 2 * mha->model_dim() * mha->model_dim();
    if (mha->ff) m.shapes = lift(feedforward_as_mlp(*mha)).shapes;
  } else if (const auto* p = std::get_if<MlpParams>(&example)) {
    m.shapes = lift(*p).shapes;
  } else {
    m.shapes = lift(std::get<Conv1dParams>(example)).shapes;
  }

  std::size_t c_in = 1;
  for (auto c : config.channels) {
    m.mixes.push_back(xavier(c, c_in, rng));
    m.mix_biases.push_back(zeros(c));
    c_in = c;
  }
  if (!m.shapes.empty()) invariant_dim += pooled_size(m.shapes, c_in) + path_size(m.shapes, c_in);

  std::size_t width = invariant_dim;
  for (auto h : config.head) {
    m.head_w.push_back(xavier(h, width, rng));
    m.head_b.push_back(zeros(h));
    width = h;
  }
  m.head_w.push_back(xavier(1, width, rng));
  m.head_b.push_back(zeros(1));

  if (config.quasi) {
    Rng qrng = Rng::stream(config.seed, kQuasiSalt);
    const auto stats = stat_feature_size(example);
    if (mha) {
      m.gl_net = make_gl_net(stats, mha->heads(), mha->head_dim(), qrng,
                             std::min(config.eps_init, 0.5 / static_cast<double>(mha->head_dim())));
      m.gl_net->freeze_eps = config.freeze_eps;
    } else {
      std::vector<std::size_t> hidden;
      for (std::size_t i = 0; i + 1 < m.shapes.size(); ++i) hidden.push_back(m.shapes[i].n_out);
      m.scale_net = make_scale_net(stats, hidden, qrng, config.eps_init);
      m.scale_net->freeze_eps = config.freeze_eps;
    }
  }
  return m;
}

WeightFeature metanet_backbone(const Metanet& model, const WeightFeature& lifted) {
  WeightFeature f = lifted;
  for (std::size_t i = 0; i < model.mixes.size(); ++i) {
    f = equiv_relu(channel_mix(model.mixes[i], model.mix_biases[i], f));
  }
  return f;
}

WeightFeature metanet_features(const Metanet& model, const Params& params) {
  require_target(model, params);
  WeightFeature lifted;
  if (const auto* p = std::get_if<MlpParams>(&params)) lifted = lift(*p);
  else if (const auto* c = std::get_if<Conv1dParams>(&params)) lifted = lift(*c);
  else throw std::invalid_argument("metanet_features: monomial architectures only");
  WeightFeature f = metanet_backbone(model, lifted);
  if (model.scale_net) {
    f = scale_feature(f, scale_forward(*model.scale_net, Var::constant(stat_features(params))));
  }
  return f;
}

Var metanet_invariants(const Metanet& model, const Params& params) {
  require_target(model, params);
  const auto* mha = std::get_if<MhaBlockParams>(&params);
  if (!mha) return monomial_readout(metanet_features(model, params));

  std::vector<Var> u, v;
  if (model.gl_net) {
    const auto pair = gl_forward(*model.gl_net, Var::constant(mha_stat_features(*mha)));
    u = pair.m;
    for (const auto& n : pair.n) v.push_back(ad::transpose(n));
  }
  std::vector<Var> parts{ad::asinh(head_pool_var(*mha, u, v))};
  if (mha->ff) parts.push_back(monomial_readout(metanet_backbone(model, lift(feedforward_as_mlp(*mha)))));
  return ad::concat(parts);
}

Var predict_var(const Metanet& model, const Params& params) {
  Var x = metanet_invariants(model, params);
  for (std::size_t i = 0; i < model.head_w.size(); ++i) {
    x = ad::add(ad::reshape(ad::matmul(model.head_w[i], ad::reshape(x, {x.size(), 1})), {model.head_b[i].size()}),
                model.head_b[i]);
    if (i + 1 < model.head_w.size()) x = ad::relu(x);
  }
  return model.config.loss == Loss::kBce ? ad::sigmoid(x) : x;
}

double predict(const Metanet& model, const Params& params) { return predict_var(model, params).value()[0]; }

std::vector<double> predict_all(const Metanet& model, const std::vector<const ZooEntry*>& entries) {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto* e : entries) out.push_back(predict(model, e->params));
  return out;
}

Var batch_loss(const Metanet& model, const std::vector<const ZooEntry*>& entries) {
  if (entries.empty()) throw std::invalid_argument("batch_loss on an empty batch");
  std::vector<Var> preds;
  std::vector<double> labels;
  for (const auto* e : entries) {
    preds.push_back(predict_var(model, e->params));
    labels.push_back(e->label);
  }
  const Var p = ad::concat(preds);
  const Tensor t = Tensor::vector(std::move(labels));
  return model.config.loss == Loss::kBce ? ad::bce_loss(p, t) : ad::mse_loss(p, t);
}

TrainReport train(Metanet& model, const Zoo& zoo) {
  const auto entries = select(zoo, Split::kTrain);
  if (entries.empty()) throw std::invalid_argument("train: the zoo has no training entries");
  if (model.config.loss == Loss::kBce) {
    for (const auto* e : entries)
      if (!(e->label >= 0.0 && e->label <= 1.0)) throw std::invalid_argument("bce labels must lie in [0, 1]");
  }
  auto params = model.parameters();
  std::vector<Tensor> values;
  for (const auto& p : params) values.push_back(p.value());
  AdamState adam(values, AdamOptions{model.config.learning_rate});
  Rng shuffle = Rng::stream(model.config.seed, kShuffleSalt);

  TrainReport report;
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < model.config.epochs; ++epoch) {
    shuffle.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += model.config.batch) {
      std::vector<const ZooEntry*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + model.config.batch); ++k) {
        batch.push_back(entries[order[k]]);
      }
      for (auto& p : params) p.zero_grad();
      const Var loss = batch_loss(model, batch);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) {
        std::ostringstream ss;
        ss << "train: non-finite loss at epoch " << epoch + 1 << ", batch starting " << start;
        throw NumericError(ss.str());
      }
      ad::backward(loss);
      adam.step(params);
      if (model.scale_net) model.scale_net->clamp_eps();
      if (model.gl_net) model.gl_net->clamp_eps();
      total += lv * static_cast<double>(batch.size());
      ++report.steps;
    }
    report.history.push_back(total / static_cast<double>(entries.size()));
  }
  model.history.insert(model.history.end(), report.history.begin(), report.history.end());
  return report;
}

EvalMetrics metrics_from_predictions(const std::vector<double>& pred, const std::vector<double>& labels,
                                     Loss loss) {
  if (pred.size() != labels.size() || pred.empty()) throw std::invalid_argument("metrics: size mismatch");
  EvalMetrics m;
  m.n = pred.size();
  if (m.n >= 2) {
    const auto k = kendall_tau_b(pred, labels);
    m.tau = k.tau;
    m.degenerate = k.degenerate;
  } else {
    m.degenerate = true;
  }
  double total = 0.0, correct = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) {
    if (loss == Loss::kBce) {
      const double p = std::clamp(pred[i], ad::kBceClamp, 1.0 - ad::kBceClamp);
      total -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
      correct += (pred[i] >= 0.5) == (labels[i] >= 0.5) ? 1.0 : 0.0;
    } else {
      total += (pred[i] - labels[i]) * (pred[i] - labels[i]);
    }
  }
  m.loss = total / static_cast<double>(m.n);
  if (loss == Loss::kBce) m.accuracy = correct / static_cast<double>(m.n);
  return m;
}

EvalMetrics evaluate(const Metanet& model, const std::vector<const ZooEntry*>& entries) {
  if (entries.empty()) throw std::invalid_argument("evaluate: no entries");
  std::vector<double> labels;
  for (const auto* e : entries) labels.push_back(e->label);
  return metrics_from_predictions(predict_all(model, entries), labels, model.config.loss);
}

json metanet_to_json(const Metanet& model) {
  json tensors = json::object();
  for (std::size_t i = 0; i < model.mixes.size(); ++i) {
    tensors["mix" + std::to_string(i + 1)] = tensor_to_json(model.mixes[i].value());
    tensors["mix_bias" + std::to_string(i + 1)] = tensor_to_json(model.mix_biases[i].value());
  }
  for (std::size_t i = 0; i < model.head_w.size(); ++i) {
    tensors["head_w" + std::to_string(i + 1)] = tensor_to_json(model.head_w[i].value());
    tensors["head_b" + std::to_string(i + 1)] = tensor_to_json(model.head_b[i].value());
  }
  json shapes = json::array();
  for (const auto& s : model.shapes) shapes.push_back({s.n_out, s.n_in, s.w});
  json j{{"version", kSchemaVersion}, {"kind", "metanet"},  {"config", config_to_json(model.config)},
         {"target", model.target},    {"shapes", shapes},   {"tensors", std::move(tensors)},
         {"history", model.history}};
  if (model.scale_net) j["scale_net"] = scale_net_to_json(*model.scale_net);
  if (model.gl_net) j["gl_net"] = gl_net_to_json(*model.gl_net);
  return j;
}

Metanet metanet_from_json(const json& j) {
  require_version(j);
  try {
    if (j.at("kind") != "metanet") throw SchemaError("expected a metanet checkpoint");
    Metanet m;
    m.config = config_from_json(j.at("config"), MetanetConfig::paper());
    m.target = j.at("target").get<std::vector<std::size_t>>();
    for (const auto& s : j.at("shapes")) m.shapes.push_back({s.at(0), s.at(1), s.at(2)});
    const auto& t = j.at("tensors");
    auto load = [&](const std::string& name) { return Var::param(tensor_from_json(t.at(name))); };
    for (std::size_t i = 1; i <= m.config.channels.size(); ++i) {
      m.mixes.push_back(load("mix" + std::to_string(i)));
      m.mix_biases.push_back(load("mix_bias" + std::to_string(i)));
    }
    for (std::size_t i = 1; i <= m.config.head.size() + 1; ++i) {
      m.head_w.push_back(load("head_w" + std::to_string(i)));
      m.head_b.push_back(load("head_b" + std::to_string(i)));
    }
    m.history = j.at("history").get<std::vector<double>>();
    if (j.contains("scale_net")) m.scale_net = scale_net_from_json(j.at("scale_net"));
    if (j.contains("gl_net")) m.gl_net = gl_net_from_json(j.at("gl_net"));
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace wsym
