#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wsym/autodiff.hpp"
#include "wsym/equivlayers.hpp"
#include "wsym/quasilayers.hpp"
#include "wsym/zoogen.hpp"

namespace wsym {

enum class Loss { kBce, kMse };

struct MetanetConfig {
  Arch arch = Arch::kMlp;
  std::vector<std::size_t> channels{16, 16, 5};
  bool quasi = true;
  std::vector<std::size_t> head{200, 200, 200};
  Loss loss = Loss::kBce;
  double learning_rate = 1e-3;
  std::size_t batch = 8;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  double eps_init = kEpsInit;
  bool freeze_eps = false;

  static MetanetConfig paper() { return {}; }
  // Channels [8, 8, 4], one head layer of 64.
  static MetanetConfig desk();
  void validate() const;
};

json config_to_json(const MetanetConfig& c);
// Fields absent from j keep their value in base.
MetanetConfig config_from_json(const json& j, const MetanetConfig& base = MetanetConfig::desk());
// FNV-1a of the canonical config JSON.
std::string config_hash(const MetanetConfig& c);

struct Metanet {
  MetanetConfig config;
  std::vector<std::size_t> target;  // architecture signature of accepted inputs
  std::vector<LayerShape> shapes;   // monomial pipeline (the feedforward for mha)
  std::vector<ad::Var> mixes, mix_biases;
  std::optional<ScaleNet> scale_net;
  std::optional<GlNet> gl_net;
  std::vector<ad::Var> head_w, head_b;
  std::vector<double> history;  // mean training loss per epoch

  std::vector<ad::Var> parameters() const;
  std::size_t parameter_count() const;
};

// Copy of model whose learned tensors are params, in parameters() order.
Metanet with_parameters(const Metanet& model, const std::vector<ad::Var>& params);

// Deterministic in config.seed. The quasi nets draw from a separate stream,
// so toggling quasi leaves every other initial tensor unchanged.
Metanet build(const MetanetConfig& config, const Params& example);

// Equivariant stack beta on a lifted feature (channel mixes, each followed by ReLU).
WeightFeature metanet_backbone(const Metanet& model, const WeightFeature& lifted);
// F(theta): the backbone output, moved by alpha(theta) when quasi is on.
WeightFeature metanet_features(const Metanet& model, const Params& params);
// Invariant vector fed to the head.
ad::Var metanet_invariants(const Metanet& model, const Params& params);

ad::Var predict_var(const Metanet& model, const Params& params);
double predict(const Metanet& model, const Params& params);
std::vector<double> predict_all(const Metanet& model, const std::vector<const ZooEntry*>& entries);

// Mean loss over the given entries.
ad::Var batch_loss(const Metanet& model, const std::vector<const ZooEntry*>& entries);

struct TrainReport {
  std::vector<double> history;
  std::size_t steps = 0;
};

// Adam over shuffled mini-batches of the train split. Non-finite loss aborts.
TrainReport train(Metanet& model, const Zoo& zoo);

struct EvalMetrics {
  double tau = 0.0;
  bool degenerate = false;
  double loss = 0.0;
  double accuracy = -1.0;  // at 0.5, bce only
  std::size_t n = 0;
};

EvalMetrics evaluate(const Metanet& model, const std::vector<const ZooEntry*>& entries);
EvalMetrics metrics_from_predictions(const std::vector<double>& pred,
                                     const std::vector<double>& labels, Loss loss);

json metanet_to_json(const Metanet& model);
Metanet metanet_from_json(const json& j);

}  // namespace wsym
