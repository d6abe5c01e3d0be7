#pragma once

#include <limits>
#include <vector>

#include "wsym/autodiff.hpp"
#include "wsym/netmodels.hpp"
#include "wsym/symmetry.hpp"

namespace wsym {

// Neuron dimensions of one layer; w = 1 for dense layers.
struct LayerShape {
  std::size_t n_out = 0, n_in = 0, w = 1;
  std::size_t weight_size() const { return n_out * n_in * w; }
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

// Channelized weight space. weights[i] is [c x (n_out n_in w)] in row-major
// (r, col, k) order, biases[i] is [c x n_out]. Layers share the channel count.
struct WeightFeature {
  std::vector<LayerShape> shapes;
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;

  std::size_t depth() const { return shapes.size(); }
  std::size_t channels() const { return weights.empty() ? 0 : weights[0].shape()[0]; }
  std::vector<std::size_t> hidden_dims() const;
  void validate() const;
};

WeightFeature lift(const MlpParams& params);
WeightFeature lift(const Conv1dParams& params);
// Channel `channel` as a parameter point of the source architecture.
MlpParams read_back_mlp(const WeightFeature& feat, std::size_t channel = 0);
Conv1dParams read_back_conv1d(const WeightFeature& feat, std::size_t channel = 0);

// out[c', ...] = sum_c mix[c', c] in[c, ...]. The bias lands on the last
// layer's bias feature only; that layer is not acted on.
WeightFeature channel_mix(const ad::Var& mix, const ad::Var& bias, const WeightFeature& feat);
WeightFeature equiv_relu(const WeightFeature& feat);

// Group action on every channel (values only; the result holds constants).
WeightFeature act_feature(const MonomialElement& g, const WeightFeature& feat);

// Differentiable diagonal action: scales[i] is the [n_i] positive vector of
// hidden layer i + 1. Rows of layer i+1 scale by s_i, columns of layer i+2 by 1/s_i.
WeightFeature scale_feature(const WeightFeature& feat, const std::vector<ad::Var>& scales);

struct PoolDiagnostics {
  std::size_t zero_slices = 0;
  double min_nonzero_norm = std::numeric_limits<double>::infinity();
};

// Per layer: every slice that fixes the hidden indices is divided by its norm
// over channels and the remaining axes, then slices are averaged over the
// hidden indices. First layer pools rows, last layer pools columns,
// intermediate layers pool both, hidden biases pool neurons. Layers without a
// hidden axis are normalized as one slice. Zero-norm slices contribute 0.
ad::Var invariant_pool(const WeightFeature& feat, PoolDiagnostics* diag = nullptr);

// Per channel: W_L ... W_1, W_L ... W_{i+1} b_i for i < L, and b_L, with
// filters summed over the spatial axis first; asinh-compressed.
ad::Var path_invariants(const WeightFeature& feat);

std::size_t pooled_size(const std::vector<LayerShape>& shapes, std::size_t channels);
std::size_t path_size(const std::vector<LayerShape>& shapes, std::size_t channels);

// A_i = Wq_i Wk_i^T, B_i = Wv_i Wo_i^T.
struct MhaInvariantFeature {
  std::vector<Tensor> a, b;
};

MhaInvariantFeature mha_invariants(const MhaBlockParams& params);

enum class PoolMode { kSum, kMean };

// [2 d d]: pooled flatten(A) then pooled flatten(B).
Tensor head_pool(const MhaInvariantFeature& inv, PoolMode mode = PoolMode::kSum);

// Differentiable head products under an optional per-head (U_i, V_i) pair:
// A_i = (Wq U^T)(Wk U^-1)^T, B_i = (Wv V^T)(Wo V^-1)^T, mean-pooled over heads.
ad::Var head_pool_var(const MhaBlockParams& params, const std::vector<ad::Var>& u,
                      const std::vector<ad::Var>& v);

// ||a - b|| / max(||b||, 1e-12) over all weight and bias features.
double feature_residual(const WeightFeature& a, const WeightFeature& b);
// Frobenius norm over all features.
double feature_norm(const WeightFeature& f);

}  // namespace wsym
