#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "trajsel/autodiff/graph.hpp"

namespace trajsel::ad {

/// Builds a scalar loss from leaves placed on a fresh graph.
using LossBuilder = std::function<Var(Graph&, std::span<const Var>)>;

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one per leaf
  double tolerance = 0.0;
  bool passed = false;

  double worst() const;
  std::string summary() const;
};

/// Compares reverse-mode gradients with central differences of step `h`.
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-3).
GradCheckReport grad_check(const std::vector<Tensor>& leaves, const LossBuilder& builder,
                           double tolerance, double h = 1e-5);

}  // namespace trajsel::ad
