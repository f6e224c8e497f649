#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace collab {

struct AucResult {
  double auc = 0.0;
  double ci95 = 0.0;  // normal-approximation half-width
  std::uint64_t n = 0;
};

/// Heaviside value assigned to a zero score difference.
enum class TieRule { kHalf, kZero };

/// AUC over per-triplet score differences (positive minus negative). Wins
/// and ties are counted as integers, so the mean is exact and independent
/// of summation order.
inline AucResult auc_from_differences(std::span<const double> differences,
                                      TieRule ties = TieRule::kHalf) {
  if (differences.empty()) throw std::invalid_argument("AUC of an empty triplet set");
  std::uint64_t wins = 0;
  std::uint64_t draws = 0;
  for (const double d : differences) {
    if (std::isnan(d)) throw std::invalid_argument("NaN score difference");
    if (d > 0.0) {
      ++wins;
    } else if (d == 0.0) {
      ++draws;
    }
  }
  const auto n = static_cast<double>(differences.size());
  const double tie_value = ties == TieRule::kHalf ? 0.5 : 0.0;
  const double sum = static_cast<double>(wins) + tie_value * static_cast<double>(draws);
  const double sum_sq = static_cast<double>(wins) + tie_value * tie_value * static_cast<double>(draws);
  AucResult r;
  r.n = differences.size();
  r.auc = sum / n;
  if (differences.size() > 1) {
    const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
    r.ci95 = 1.96 * std::sqrt(var / n);
  }
  return r;
}

}  // namespace collab
