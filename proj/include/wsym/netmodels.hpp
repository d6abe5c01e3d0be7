#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "wsym/rng.hpp"
#include "wsym/tensor.hpp"

namespace wsym {

struct DenseLayer {
  Tensor weight;  // [n_i x n_{i-1}]
  Tensor bias;    // [n_i]
};

// Feedforward ReLU network x -> W_L s(... s(W_1 x + b_1) ...) + b_L.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t depth() const { return layers.size(); }
  // [n_0, n_1, ..., n_L]
  std::vector<std::size_t> dims() const;
  void validate() const;
};

struct ConvLayer {
  Tensor filter;  // [n_i x n_{i-1} x w]
  Tensor bias;    // [n_i]
  std::size_t window() const { return filter.dim(2); }
};

// Stack of valid (unpadded, stride 1) 1-D cross-correlations with ReLU between layers.
struct Conv1dParams {
  std::vector<ConvLayer> layers;

  std::size_t depth() const { return layers.size(); }
  std::vector<std::size_t> dims() const;  // channel counts [n_0 .. n_L]
  std::vector<std::size_t> windows() const;
  void validate() const;
};

struct FeedForward {
  Tensor w_a;  // [d_f x d]
  Tensor b_a;  // [d_f]
  Tensor w_b;  // [d x d_f]
  Tensor b_b;  // [d]
};

// Multihead attention block; each head projection is [d x d_h].
struct MhaBlockParams {
  std::vector<Tensor> wq, wk, wv, wo;
  std::optional<FeedForward> ff;

  std::size_t heads() const { return wq.size(); }
  std::size_t model_dim() const { return wq.at(0).dim(0); }
  std::size_t head_dim() const { return wq.at(0).dim(1); }
  std::size_t ff_dim() const { return ff ? ff->w_a.dim(0) : 0; }
  void validate() const;
};

using Params = std::variant<MlpParams, Conv1dParams, MhaBlockParams>;

enum class Arch { kMlp, kConv1d, kMha };
Arch arch_of(const Params& p);
std::string arch_name(Arch a);
Arch parse_arch(const std::string& name);

// Architecture signature used to check two parameter points share a space.
std::vector<std::size_t> signature(const Params& p);

Tensor mlp_forward(const MlpParams& params, const Tensor& x);
// Row-batched: X [B x n_0] -> [B x n_L].
Tensor mlp_forward_batch(const MlpParams& params, const Tensor& x);

// x [n_0 x T] -> [n_L x T'] with T' = T - sum(w_i - 1).
Tensor conv1d_forward(const Conv1dParams& params, const Tensor& x);

struct MhaOptions {
  // Divide attention logits by sqrt(d_h). Off: the block follows the plain
  // softmax((xWq)(xWk)^T) form.
  bool temperature = false;
};

// X [L x d] -> [L x d]: sum over heads of softmax((X Wq)(X Wk)^T) (X Wv) Wo^T,
// then the per-token ReLU feedforward when present.
Tensor mha_forward(const MhaBlockParams& params, const Tensor& x, MhaOptions options = {});

MlpParams random_mlp(const std::vector<std::size_t>& dims, Rng& rng, double init_scale = 1.0);
Conv1dParams random_conv1d(const std::vector<std::size_t>& channels,
                           const std::vector<std::size_t>& windows, Rng& rng,
                           double init_scale = 1.0);
MhaBlockParams random_mha(std::size_t heads, std::size_t model_dim, std::size_t head_dim,
                          std::size_t ff_dim, Rng& rng, double init_scale = 1.0);

Tensor random_normal(Shape shape, Rng& rng, double stddev = 1.0);

// All tensors of a parameter point in serialization order.
std::vector<double> flatten_params(const Params& p);
// ||a - b|| / max(||b||, 1e-12) over the flattened points.
double params_rel_diff(const Params& a, const Params& b);

}  // namespace wsym
