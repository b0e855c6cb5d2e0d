#pragma once

#include <string>
#include <vector>

namespace aseg {

// Operation-level checks run at tolerance 1e-4, composed loss-graph checks at
// 1e-3; all of it in 64-bit evaluation mode.
constexpr double kOpGradTolerance = 1e-4;
constexpr double kGraphGradTolerance = 1e-3;

struct GradCheckCase {
  std::string name;
  double max_rel_error = 0;
  double tolerance = 0;
  bool passed() const { return max_rel_error <= tolerance; }
};

// Finite-difference verification of every differentiable operation plus the
// composed generator and discriminator loss graphs at 8x8 scale.
std::vector<GradCheckCase> run_grad_check_suite();

double max_error(const std::vector<GradCheckCase>& cases, double tolerance_class);

}  // namespace aseg
