#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "wsym/autodiff.hpp"

namespace wsym {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState(const std::vector<Tensor>& params, AdamOptions options = {});

  // In-place bias-corrected Adam update of `params` given `grads`.
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);
  // Convenience for leaf Vars: reads their grads and assigns new values.
  void step(std::vector<ad::Var>& params);

  std::uint64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor>& first_moment() const { return m_; }
  const std::vector<Tensor>& second_moment() const { return v_; }

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

// Max over coordinates of |analytic - central| / (|analytic| + |central| + floor)
// for a scalar function of several tensors.
using ScalarFn = std::function<ad::Var(const std::vector<ad::Var>&)>;
double grad_check(const ScalarFn& fn, const std::vector<Tensor>& point, double step = 1e-5,
                  double floor = 1e-12);
double grad_check(const std::function<ad::Var(const ad::Var&)>& fn, const Tensor& point,
                  double step = 1e-5);

struct GradCheckDetail {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};
GradCheckDetail grad_check_detail(const ScalarFn& fn, const std::vector<Tensor>& point,
                                  double step = 1e-5, double floor = 1e-12);

}  // namespace wsym
