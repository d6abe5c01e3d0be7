#pragma once

#include <span>

namespace wsym {

struct KendallResult {
  double tau = 0.0;
  // Set when either list is constant; tau is reported as 0 in that case.
  bool degenerate = false;
};

// Kendall tau-b (tie-corrected), O(n log n). Lengths must match and be >= 2.
KendallResult kendall_tau_b(std::span<const double> pred, std::span<const double> target);

inline double kendall_tau(std::span<const double> pred, std::span<const double> target) {
  return kendall_tau_b(pred, target).tau;
}

}  // namespace wsym
