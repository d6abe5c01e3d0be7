#pragma once

#include <optional>
#include <vector>

#include "wsym/netmodels.hpp"
#include "wsym/serialize.hpp"

namespace wsym {

// Positive monomial matrix D P on one hidden layer, acting on a vector as
// (g x)[r] = scale[r] * x[perm^-1(r)], i.e. perm[j] is the image of neuron j.
struct LayerMonomial {
  std::vector<std::size_t> perm;
  std::vector<double> scale;

  std::size_t size() const { return perm.size(); }
  void validate() const;
};

// Element of the product of positive monomial groups over hidden layers
// 1..L-1. The input and output layers are fixed to the identity.
struct MonomialElement {
  std::vector<LayerMonomial> layers;  // layers[i-1] acts on hidden layer i

  std::vector<std::size_t> hidden_dims() const;
  void validate() const;
};

// Head permutation sigma and per-head invertible pairs (U_i, V_i), acting as
// (Wq_sigma(i) U_i^T, Wk_sigma(i) U_i^-1, Wv_sigma(i) V_i^T, Wo_sigma(i) V_i^-1).
struct GlMhaElement {
  std::vector<std::size_t> head_perm;
  std::vector<Tensor> u, v;

  std::size_t heads() const { return head_perm.size(); }
  std::size_t head_dim() const { return u.at(0).dim(0); }
  void validate() const;
};

inline constexpr double kMinAbsDet = 1e-10;

class GroupError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Hidden-layer sizes of a parameter point (n_1 .. n_{L-1}).
std::vector<std::size_t> hidden_dims(const MlpParams& p);
std::vector<std::size_t> hidden_dims(const Conv1dParams& p);

MonomialElement monomial_identity(const std::vector<std::size_t>& hidden_dims);
MonomialElement compose(const MonomialElement& g1, const MonomialElement& g2);
MonomialElement inverse(const MonomialElement& g);

GlMhaElement gl_identity(std::size_t heads, std::size_t head_dim);
GlMhaElement compose(const GlMhaElement& g1, const GlMhaElement& g2);
GlMhaElement inverse(const GlMhaElement& g);

// act(compose(g1, g2), x) == act(g1, act(g2, x)).
MlpParams monomial_act(const MonomialElement& g, const MlpParams& params);
Conv1dParams monomial_act(const MonomialElement& g, const Conv1dParams& params);
MhaBlockParams gl_act(const GlMhaElement& g, const MhaBlockParams& params);

// Entrywise action on a [n_out x n_in x w] block (w = 1 for dense weights):
// out[r][c][k] = s_out[r] * in[perm_out^-1 r][perm_in^-1 c][k] / s_in[c].
// Null layers stand for the identity.
Tensor act_block(const Tensor& block, std::size_t n_out, std::size_t n_in, std::size_t w,
                 const LayerMonomial* out, const LayerMonomial* in);
std::vector<double> act_vector(const LayerMonomial& g, std::span<const double> x);

MonomialElement sample_monomial(const std::vector<std::size_t>& hidden_dims, double scale_low,
                                double scale_high, bool permute, Rng& rng);
GlMhaElement sample_gl(std::size_t heads, std::size_t head_dim, double spread, Rng& rng,
                       bool permute_heads = true);

// Max relative difference of scales; infinity when permutations differ.
double element_distance(const MonomialElement& a, const MonomialElement& b);
double element_distance(const GlMhaElement& a, const GlMhaElement& b);

struct EquivResult {
  bool equivalent = false;
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;  // max_abs_diff / max |f|
};

struct EquivOptions {
  std::size_t samples = 200;
  double input_scale = 1.0;
  double tol = 1e-8;
  bool relative = false;  // compare max_rel_diff instead of max_abs_diff to tol
  std::size_t seq_len = 5;
};

// Sampled surrogate of functional equivalence: both networks on the same
// standard-normal inputs times input_scale.
EquivResult check_functional_equiv(const Params& a, const Params& b, const EquivOptions& options,
                                   Rng& rng);

// Every projection has numerical rank d_h and the head products Wq_i Wk_i^T
// are pairwise distinct (max-norm gap above rank_tol).
bool check_genericity(const MhaBlockParams& params, double rank_tol = 1e-8);

json group_to_json(const MonomialElement& g);
json group_to_json(const GlMhaElement& g);
MonomialElement monomial_from_json(const json& j);
GlMhaElement gl_from_json(const json& j);

// Deliberate action bugs for mutation testing of the verification suite.
enum class ActionFault {
  kNone,
  kDropMonomialInverse,  // columns multiplied by the previous layer's scale
  kDropGlInverse,        // keys multiplied by U_i instead of U_i^-1
};

ActionFault active_fault();

// Installs a fault on the current thread for the guard's lifetime.
class ScopedActionFault {
 public:
  explicit ScopedActionFault(ActionFault fault);
  ~ScopedActionFault();
  ScopedActionFault(const ScopedActionFault&) = delete;
  ScopedActionFault& operator=(const ScopedActionFault&) = delete;

 private:
  ActionFault previous_;
};

}  // namespace wsym
