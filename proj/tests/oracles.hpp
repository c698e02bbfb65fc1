#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracles {

// Every midpoint between sorted distinct scores plus both ends is tried as a
// threshold (decision: score >= threshold); the one with the smallest
// |FAR - FRR| wins, lowest threshold on ties, and (FAR + FRR) / 2 is returned.
inline double brute_force_eer(const std::vector<double>& s, const std::vector<std::uint8_t>& l) {
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> thresholds = {sorted.front() - 1.0};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    thresholds.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  }
  thresholds.push_back(sorted.back() + 1.0);
  double pos = 0, neg = 0;
  for (auto v : l) (v ? pos : neg) += 1;
  double best_gap = 1e300, best = 0.0;
  for (double t : thresholds) {
    double fa = 0, fr = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!l[i] && s[i] >= t) fa += 1;
      if (l[i] && s[i] < t) fr += 1;
    }
    const double far = fa / neg, frr = fr / pos;
    if (std::abs(far - frr) < best_gap - 1e-15) {
      best_gap = std::abs(far - frr);
      best = 0.5 * (far + frr);
    }
  }
  return best;
}

// A_b[i][j] as the literal product over the closed index range, 1 on the diagonal.
inline std::uint8_t adjacency_entry(const std::vector<std::uint8_t>& b, std::size_t i,
                                    std::size_t j) {
  if (i == j) return 1;
  int prod = 1;
  for (std::size_t n = std::min(i, j); n <= std::max(i, j); ++n) prod *= 1 - b[n];
  return static_cast<std::uint8_t>(prod);
}

inline std::vector<std::uint8_t> bit_pattern(unsigned pattern, std::size_t t) {
  std::vector<std::uint8_t> b(t);
  for (std::size_t k = 0; k < t; ++k) b[k] = (pattern >> k) & 1u;
  return b;
}

}  // namespace oracles
