#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "bam/nn.hpp"

namespace testing {

inline bam::Tensor random_tensor(bam::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                 double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(bam::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return bam::Tensor::from_vector(std::move(shape), std::move(v), requires_grad);
}

// Central differences of a scalar function of `x`'s data, independent of the
// library's own checker. Returns the worst |a - n| / max(|a|, |n|, 1e-5).
inline double finite_difference_error(const std::function<double()>& loss, bam::Tensor x,
                                      const std::vector<double>& analytic, double h = 1e-5) {
  double worst = 0.0;
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + h;
    const double up = loss();
    data[i] = saved - h;
    const double down = loss();
    data[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-5});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
  }
  return worst;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace testing
