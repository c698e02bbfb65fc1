#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bam/nn.hpp"

namespace bam {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;
// Gradients smaller than this are compared in absolute terms.
inline constexpr double kGradcheckFloor = 1e-5;

struct GradcheckEntry {
  std::string suite;  // "op" or "module"
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, floor).
double gradcheck_relative_error(double analytic, double numeric);

// Compares d/dx of sum(f() * R) against central differences for every
// element of every tensor in `wrt`, which f() must read on each call.
// `discrete` (optional) fingerprints any thresholded state inside f; a
// coordinate whose +-h perturbation changes it throws DiscreteFlip.
struct DiscreteFlip : std::runtime_error {
  using std::runtime_error::runtime_error;
};
double gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& wrt, Rng& rng,
                 std::size_t* coordinates = nullptr,
                 const std::function<std::vector<double>()>& discrete = {});

// Every registered differentiable op once, then module and end-to-end
// suites at T=4, D=4.
std::vector<GradcheckEntry> run_gradcheck(std::uint64_t seed = 7);

}  // namespace bam
