#pragma once

#include <functional>
#include <vector>

#include "wsym/autodiff.hpp"
#include "wsym/equivlayers.hpp"
#include "wsym/serialize.hpp"
#include "wsym/symmetry.hpp"

namespace wsym {

inline constexpr double kEpsInit = 0.01;
inline constexpr double kScaleEpsMax = 0.5;
inline constexpr std::size_t kAlphaHidden = 32;

// Gated perceptron x -> W2 ((W1 x + b1) * sigmoid(Wg x + bg)) + b2.
struct GatedPerceptron {
  ad::Var w1, b1, wg, bg, w2, b2;  // weights are [out x in]
  ad::Var forward(const ad::Var& x) const;  // x is [in]
  std::vector<ad::Var> parameters() const { return {w1, b1, wg, bg, w2, b2}; }
};

// One gated perceptron per hidden layer; s_i = 1 + eps_i sin(net_i(stats)).
struct ScaleNet {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::vector<GatedPerceptron> nets;
  std::vector<ad::Var> eps;  // one-element each, kept in [0, kScaleEpsMax]
  bool freeze_eps = false;

  std::vector<ad::Var> parameters() const;
  void clamp_eps();
  void set_eps(double value);
};

ScaleNet make_scale_net(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims, Rng& rng,
                        double eps_init = kEpsInit);

// Per hidden layer the positive vector s_i in [1 - eps_i, 1 + eps_i].
std::vector<ad::Var> scale_forward(const ScaleNet& net, const ad::Var& stats);
std::vector<Tensor> scale_forward(const ScaleNet& net, const Tensor& stats);
// Diagonal s_i with identity permutations.
MonomialElement scale_as_group_element(const std::vector<Tensor>& scales);

// Tanh perceptron whose 2 h d_h^2 outputs become per-head M_i and N_i,
// each I + eps sin(.). eps <= 1 / (2 d_h) makes both strictly diagonally dominant.
struct GlNet {
  std::size_t input_dim = 0, heads = 0, head_dim = 0;
  ad::Var w1, b1, w2, b2;
  ad::Var eps;
  bool freeze_eps = false;

  double eps_max() const { return 0.5 / static_cast<double>(head_dim); }
  std::vector<ad::Var> parameters() const;
  void clamp_eps();
  void set_eps(double value);
};

GlNet make_gl_net(std::size_t input_dim, std::size_t heads, std::size_t head_dim, Rng& rng,
                  double eps_init = kEpsInit);

struct GlPair {
  std::vector<ad::Var> m, n;  // per head, [d_h x d_h]
};
GlPair gl_forward(const GlNet& net, const ad::Var& stats);
// The element whose Eq. (11) action equals the quasi transform
// (Wq M^T, Wk M^-1, Wv N, N^-1 Wo): U_i = M_i, V_i = N_i^T.
GlMhaElement gl_forward(const GlNet& net, const Tensor& stats);

using Backbone = std::function<WeightFeature(const WeightFeature&)>;

// F(theta) = alpha(theta) beta(lift(theta)) with alpha from the scale net on stats(theta).
WeightFeature quasi_apply_mlp(const ScaleNet& net, const MlpParams& params, const Backbone& beta);
WeightFeature quasi_apply_conv1d(const ScaleNet& net, const Conv1dParams& params,
                                 const Backbone& beta);
// Group element alpha(theta) built from the parameter statistics.
MonomialElement alpha_monomial(const ScaleNet& net, const Params& params);
GlMhaElement alpha_gl(const GlNet& net, const MhaBlockParams& params);
MhaBlockParams quasi_apply_mha(const GlNet& net, const MhaBlockParams& params);

// g' = alpha(g theta) g alpha(theta)^-1.
MonomialElement quasi_witness(const ScaleNet& net, const Params& params, const MonomialElement& g);
GlMhaElement quasi_witness(const GlNet& net, const MhaBlockParams& params, const GlMhaElement& g);

json scale_net_to_json(const ScaleNet& net);
ScaleNet scale_net_from_json(const json& j);
json gl_net_to_json(const GlNet& net);
GlNet gl_net_from_json(const json& j);

// Xavier-uniform [out x in] leaf.
ad::Var xavier(std::size_t out, std::size_t in, Rng& rng);

}  // namespace wsym
