#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wsym/metanet.hpp"
#include "wsym/quasilayers.hpp"
#include "wsym/symmetry.hpp"

namespace wsym {

// pass is always max_residual < tolerance.
struct PropertyReport {
  std::string name;
  std::size_t samples = 0;
  double max_residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

PropertyReport make_report(std::string name, std::size_t samples, double max_residual, double tolerance);

// Relative residual with the 1e-12 absolute floor.
inline double rel_residual(double diff, double scale) { return diff / std::max(scale, 1e-12); }

// --- quasi-equivariance witnesses -------------------------------------------

struct MonomialWitness {
  MonomialElement g_prime;
  double residual = 0.0;  // ||F(g theta) - g' F(theta)|| / ||F(theta)||
};
// F is the model's quasi layer: alpha(theta) beta(lift(theta)).
MonomialWitness witness_quasi_equivariance(const Metanet& model, const MlpParams& theta,
                                           const MonomialElement& g);

struct GlWitness {
  GlMhaElement g_prime;
  double residual = 0.0;
};
GlWitness witness_quasi_equivariance(const GlNet& net, const MhaBlockParams& theta, const GlMhaElement& g);

// --- cocycles ---------------------------------------------------------------

using MonomialCocycle = std::function<MonomialElement(const MonomialElement&, const MlpParams&)>;
using MonomialGauge = std::function<MonomialElement(const MlpParams&)>;
using GlCocycle = std::function<GlMhaElement(const GlMhaElement&, const MhaBlockParams&)>;
using GlGauge = std::function<GlMhaElement(const MhaBlockParams&)>;

// (g, theta) -> alpha_hat(g theta) g alpha_hat(theta)^-1.
MonomialCocycle lifted_cocycle(const ScaleNet& net);
GlCocycle lifted_cocycle(const GlNet& net);
// (g, theta) -> g.
MonomialCocycle trivial_monomial_cocycle();
GlCocycle trivial_gl_cocycle();
// Drops the alpha_hat(theta)^-1 factor.
MonomialCocycle broken_cocycle(const ScaleNet& net);
GlCocycle broken_cocycle(const GlNet& net);

// (g, theta) -> beta_hat(g theta) alpha(g, theta) beta_hat(theta)^-1.
MonomialCocycle gauge_transform(const MonomialCocycle& alpha, const MonomialGauge& beta_hat);
GlCocycle gauge_transform(const GlCocycle& alpha, const GlGauge& beta_hat);

MonomialGauge scale_gauge(const ScaleNet& net);
GlGauge gl_gauge(const GlNet& net);

struct MonomialSampling {
  std::vector<std::size_t> dims{3, 6, 5, 2};
  double scale_high = 10.0;
  bool permute = true;
};

struct GlSampling {
  std::size_t heads = 2, model_dim = 8, head_dim = 4, ff_dim = 16;
  double spread = 2.0;
  bool permute = true;
};

MlpParams sample_theta(const MonomialSampling& s, Rng& rng);
MonomialElement sample_element(const MonomialSampling& s, Rng& rng);
MhaBlockParams sample_theta(const GlSampling& s, Rng& rng);
GlMhaElement sample_element(const GlSampling& s, Rng& rng);

// alpha(e, theta) = e and alpha(g1 g2, theta) = alpha(g1, g2 theta) alpha(g2, theta),
// measured with element_distance.
PropertyReport check_cocycle(const MonomialCocycle& alpha, const MonomialSampling& s, std::size_t samples,
                             Rng& rng, double tol = 1e-9);
PropertyReport check_cocycle(const GlCocycle& alpha, const GlSampling& s, std::size_t samples, Rng& rng,
                             double tol = 1e-9);

// The gauge-transformed cocycle passes check_cocycle.
PropertyReport check_gauge(const MonomialCocycle& alpha, const MonomialGauge& beta_hat,
                           const MonomialSampling& s, std::size_t samples, Rng& rng, double tol = 1e-9);
PropertyReport check_gauge(const GlCocycle& alpha, const GlGauge& beta_hat, const GlSampling& s,
                           std::size_t samples, Rng& rng, double tol = 1e-9);

// F'(theta) = alpha_hat(theta)^-1 F(theta) satisfies F'(g theta) = g F'(theta).
PropertyReport check_coboundary(const Metanet& model, const MonomialSampling& s, std::size_t samples,
                                Rng& rng, double tol = 1e-10);
PropertyReport check_coboundary(const GlNet& net, const GlSampling& s, std::size_t samples, Rng& rng,
                                double tol = 1e-10);

// --- stabilizers ------------------------------------------------------------

// theta with neuron b of hidden layer `layer` (1-based) a bit-identical copy of neuron a.
MlpParams duplicate_neuron(const MlpParams& theta, std::size_t layer, std::size_t a, std::size_t b);
// The transposition of neurons a and b on hidden layer `layer`.
MonomialElement neuron_swap(const std::vector<std::size_t>& hidden_dims, std::size_t layer, std::size_t a,
                            std::size_t b);
// Candidates h with h theta == theta bit for bit.
std::vector<MonomialElement> filter_stabilizers(const MlpParams& theta,
                                                const std::vector<MonomialElement>& candidates);

// For each h: ||F(h theta) - F(theta)|| and ||g' F(theta) - F(theta)||, relative.
// Throws std::invalid_argument when some h does not fix theta.
PropertyReport check_stabilizer_consistency(const Metanet& model, const MlpParams& theta,
                                            const std::vector<MonomialElement>& stabilizers,
                                            double tol = 1e-10);

// --- stacked quasi layers ---------------------------------------------------

// F2(feat) = alpha2(feat) relu(mix feat + bias), alpha2 from the statistics of
// each layer's weight and bias features.
struct FeatureQuasiLayer {
  ScaleNet alpha;
  ad::Var mix, bias;

  WeightFeature apply(const WeightFeature& feat) const;
  MonomialElement alpha_of(const WeightFeature& feat) const;
};

FeatureQuasiLayer make_feature_quasi_layer(const std::vector<LayerShape>& shapes, std::size_t c_in,
                                           std::size_t c_out, double eps, Rng& rng);
Tensor feature_stats(const WeightFeature& feat);

// Residual of F2(F1(g theta)) = g'' F2(F1(theta)) with
// g'' = alpha2(F1(g theta)) g' alpha2(F1(theta))^-1.
double two_layer_witness_residual(const Metanet& first, const FeatureQuasiLayer& second,
                                  const MlpParams& theta, const MonomialElement& g);

// --- suite ------------------------------------------------------------------

struct SuiteConfig {
  std::size_t samples = 100;
  std::uint64_t seed = 1;
  std::vector<std::string> properties;  // empty runs every property
  double scale_high = 1e3;
  double gl_spread = 10.0;
  double eps = 0.3;  // quasi eps for witness checks; large enough to be visible
};

const std::vector<std::string>& suite_property_names();

// Reports sorted by name. Unknown property names or zero samples throw
// std::invalid_argument.
std::vector<PropertyReport> run_suite(const SuiteConfig& config);

std::string reports_csv(const std::vector<PropertyReport>& reports);
std::string reports_text(const std::vector<PropertyReport>& reports);
bool all_pass(const std::vector<PropertyReport>& reports);

}  // namespace wsym
