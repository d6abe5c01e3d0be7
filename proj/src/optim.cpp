#include "wsym/optim.hpp"

#include <cmath>

namespace wsym {

AdamState::AdamState(const std::vector<Tensor>& params, AdamOptions options)
    : options_(options) {
  if (!(options_.learning_rate >= 0.0) || !(options_.beta1 > 0.0) || !(options_.beta2 > 0.0) ||
      !(options_.eps > 0.0)) {
    throw std::invalid_argument("invalid Adam hyperparameters");
  }
  for (const auto& p : params) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void AdamState::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("Adam step: parameter count mismatch");
  }
  ++step_;
  const auto& o = options_;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].shape() != m_[k].shape() || grads[k].shape() != m_[k].shape()) {
      throw ShapeError("Adam step: shape mismatch at parameter " + std::to_string(k));
    }
    auto p = params[k].data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    const auto g = grads[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= o.learning_rate * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

void AdamState::step(std::vector<ad::Var>& params) {
  std::vector<Tensor> values, grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (const auto& p : params) {
    values.push_back(p.value());
    grads.push_back(p.grad());
  }
  step(values, grads);
  for (std::size_t k = 0; k < params.size(); ++k) params[k].assign(std::move(values[k]));
}

GradCheckDetail grad_check_detail(const ScalarFn& fn, const std::vector<Tensor>& point,
                                  double step, double floor) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check step must be positive");
  if (!(floor > 0.0)) throw std::invalid_argument("grad_check floor must be positive");
  std::vector<ad::Var> params;
  for (const auto& t : point) params.push_back(ad::Var::param(t));
  ad::Var out = fn(params);
  ad::backward(out);

  auto eval = [&](std::vector<Tensor> values) {
    std::vector<ad::Var> cs;
    for (auto& t : values) cs.push_back(ad::Var::constant(std::move(t)));
    return fn(cs).value().item();
  };

  GradCheckDetail d;
  for (std::size_t k = 0; k < point.size(); ++k) {
    const Tensor analytic = params[k].grad();
    for (std::size_t i = 0; i < point[k].size(); ++i) {
      auto plus = point;
      auto minus = point;
      plus[k][i] += step;
      minus[k][i] -= step;
      const double numeric = (eval(plus) - eval(minus)) / (2.0 * step);
      const double a = analytic[i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        throw NumericError("grad_check: non-finite gradient");
      }
      const double err = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + floor);
      if (err > d.max_rel_error) d = {err, k, i, a, numeric};
    }
  }
  return d;
}

double grad_check(const ScalarFn& fn, const std::vector<Tensor>& point, double step, double floor) {
  return grad_check_detail(fn, point, step, floor).max_rel_error;
}

double grad_check(const std::function<ad::Var(const ad::Var&)>& fn, const Tensor& point,
                  double step) {
  return grad_check([&](const std::vector<ad::Var>& v) { return fn(v[0]); },
                    std::vector<Tensor>{point}, step);
}

}  // namespace wsym
