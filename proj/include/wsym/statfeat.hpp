#pragma once

#include <span>

#include "wsym/autodiff.hpp"
#include "wsym/netmodels.hpp"

namespace wsym {

// Per source tensor: (mean, variance, q0, q0.25, q0.5, q0.75, q1).
inline constexpr std::size_t kStatsPerTensor = 7;
inline constexpr double kQuantileLevels[] = {0.0, 0.25, 0.5, 0.75, 1.0};

// Population variance; quantiles interpolate linearly at rank q (n - 1).
Tensor tensor_stats(std::span<const double> values);
inline Tensor tensor_stats(const Tensor& t) { return tensor_stats(t.data()); }

// Same statistics as a graph node. Quantile gradients go to the one or two
// order statistics that define them; ties resolve by first index.
ad::Var tensor_stats(const ad::Var& t);

// 14 L: per layer stats(weight) then stats(bias), in forward order.
Tensor mlp_stat_features(const MlpParams& params);
Tensor conv1d_stat_features(const Conv1dParams& params);
// 56 with the feedforward (WQ, WK, WV, WO, WA, bA, WB, bB), 28 without.
// Head projections of one role are pooled into a single tensor first.
Tensor mha_stat_features(const MhaBlockParams& params);
Tensor stat_features(const Params& params);

std::size_t stat_feature_size(const Params& params);

}  // namespace wsym
