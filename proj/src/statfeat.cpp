#include "wsym/statfeat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wsym {

namespace {

struct QuantileTap {
  std::size_t lo, hi;  // positions in sorted order
  double frac;
};

QuantileTap tap(double q, std::size_t n) {
  const double pos = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, n - 1);
  return {lo, hi, pos - static_cast<double>(lo)};
}

std::vector<std::size_t> sorted_order(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  return idx;
}

void append(std::vector<double>& out, const Tensor& t) {
  const auto s = tensor_stats(t);
  out.insert(out.end(), s.data().begin(), s.data().end());
}

Tensor pooled(const std::vector<Tensor>& parts) {
  std::vector<double> all;
  for (const auto& p : parts) all.insert(all.end(), p.data().begin(), p.data().end());
  return Tensor::vector(std::move(all));
}

}  // namespace

Tensor tensor_stats(std::span<const double> v) {
  if (v.empty()) throw ShapeError("tensor_stats of an empty tensor");
  const auto n = v.size();
  // Sums run in sorted order, so the result is bit-identical under any shuffle.
  const auto order = sorted_order(v);
  double mean = 0.0;
  for (auto i : order) mean += v[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (auto i : order) var += (v[i] - mean) * (v[i] - mean);
  var /= static_cast<double>(n);
  std::vector<double> out{mean, var};
  for (double q : kQuantileLevels) {
    const auto t = tap(q, n);
    const double a = v[order[t.lo]], b = v[order[t.hi]];
    out.push_back(t.frac == 0.0 ? a : a + t.frac * (b - a));
  }
  return Tensor::vector(std::move(out));
}

ad::Var tensor_stats(const ad::Var& t) {
  Tensor value = tensor_stats(t.value());
  return ad::make_op(std::move(value), {t}, [](ad::Node& n) {
    ad::Node& p = *n.parents[0];
    const auto x = p.value.data();
    const auto count = x.size();
    const double inv = 1.0 / static_cast<double>(count);
    const double mean = n.value[0];
    auto g = p.grad_buffer().data();
    for (std::size_t i = 0; i < count; ++i) {
      g[i] += n.grad[0] * inv + n.grad[1] * 2.0 * (x[i] - mean) * inv;
    }
    const auto order = sorted_order(x);
    for (std::size_t k = 0; k < 5; ++k) {
      const auto tp = tap(kQuantileLevels[k], count);
      const double gq = n.grad[2 + k];
      if (tp.frac == 0.0) {
        g[order[tp.lo]] += gq;
      } else {
        g[order[tp.lo]] += gq * (1.0 - tp.frac);
        g[order[tp.hi]] += gq * tp.frac;
      }
    }
  });
}

Tensor mlp_stat_features(const MlpParams& params) {
  params.validate();
  std::vector<double> out;
  for (const auto& l : params.layers) {
    append(out, l.weight);
    append(out, l.bias);
  }
  return Tensor::vector(std::move(out));
}

Tensor conv1d_stat_features(const Conv1dParams& params) {
  params.validate();
  std::vector<double> out;
  for (const auto& l : params.layers) {
    append(out, l.filter);
    append(out, l.bias);
  }
  return Tensor::vector(std::move(out));
}

Tensor mha_stat_features(const MhaBlockParams& params) {
  params.validate();
  std::vector<double> out;
  for (const auto* role : {&params.wq, &params.wk, &params.wv, &params.wo}) {
    append(out, pooled(*role));
  }
  if (params.ff) {
    for (const auto* t : {&params.ff->w_a, &params.ff->b_a, &params.ff->w_b, &params.ff->b_b}) {
      append(out, *t);
    }
  }
  return Tensor::vector(std::move(out));
}

Tensor stat_features(const Params& params) {
  return std::visit(
      [](const auto& p) -> Tensor {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, MlpParams>) return mlp_stat_features(p);
        else if constexpr (std::is_same_v<T, Conv1dParams>) return conv1d_stat_features(p);
        else return mha_stat_features(p);
      },
      params);
}

std::size_t stat_feature_size(const Params& params) {
  if (const auto* m = std::get_if<MlpParams>(&params)) return 14 * m->depth();
  if (const auto* c = std::get_if<Conv1dParams>(&params)) return 14 * c->depth();
  return std::get<MhaBlockParams>(params).ff ? 56 : 28;
}

}  // namespace wsym
