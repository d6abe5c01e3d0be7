#include "wsym/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace wsym {

namespace {

using Count = std::int64_t;

// Pairs tied within runs of equal keys, for an already sorted sequence.
template <typename Eq>
Count tied_pairs(std::size_t n, Eq equal) {
  Count total = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && equal(i - 1, i)) {
      ++run;
    } else {
      total += static_cast<Count>(run) * static_cast<Count>(run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

// Stable merge sort of `ys` that counts inversions (strictly decreasing pairs).
Count sort_count_swaps(std::vector<double>& ys, std::vector<double>& buf, std::size_t lo,
                       std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  Count swaps = sort_count_swaps(ys, buf, lo, mid) + sort_count_swaps(ys, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (ys[j] < ys[i]) {
      swaps += static_cast<Count>(mid - i);
      buf[k++] = ys[j++];
    } else {
      buf[k++] = ys[i++];
    }
  }
  while (i < mid) buf[k++] = ys[i++];
  while (j < hi) buf[k++] = ys[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, ys.begin() + lo);
  return swaps;
}

}  // namespace

KendallResult kendall_tau_b(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("kendall_tau: length mismatch");
  const std::size_t n = pred.size();
  if (n < 2) throw std::invalid_argument("kendall_tau: need at least two items");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return pred[a] < pred[b] || (pred[a] == pred[b] && target[a] < target[b]);
  });
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = pred[idx[i]];
    ys[i] = target[idx[i]];
  }

  const Count n0 = static_cast<Count>(n) * static_cast<Count>(n - 1) / 2;
  const Count n1 = tied_pairs(n, [&](std::size_t a, std::size_t b) { return xs[a] == xs[b]; });
  const Count n3 = tied_pairs(
      n, [&](std::size_t a, std::size_t b) { return xs[a] == xs[b] && ys[a] == ys[b]; });

  std::vector<double> buf(n);
  const Count swaps = sort_count_swaps(ys, buf, 0, n);
  const Count n2 = tied_pairs(n, [&](std::size_t a, std::size_t b) { return ys[a] == ys[b]; });

  if (n1 == n0 || n2 == n0) return {0.0, true};
  // concordant - discordant
  const Count num = n0 - n1 - n2 + n3 - 2 * swaps;
  const double tau = static_cast<double>(num) /
                     std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
  return {tau, false};
}

}  // namespace wsym
