#pragma once

#include <optional>
#include <span>

#include "trajsel/autodiff/ops.hpp"

namespace trajsel::loss {

inline constexpr double kVarianceEps = 1e-6;

/// Mean over predicted steps of the squared L2 error; pred and truth are (P, 2).
ad::Var trajectory_loss(ad::Var pred, ad::Var truth);
double trajectory_loss(const Tensor& pred, const Tensor& truth);

/// -log(population variance + eps). nullopt for fewer than 2 scores.
std::optional<ad::Var> variance_loss(ad::Var scores, double eps = kVarianceEps);
std::optional<double> variance_loss(std::span<const double> scores, double eps = kVarianceEps);

struct LossBreakdown {
  double trajectory = 0.0;
  double variance_term = 0.0;
  double total = 0.0;
  double alpha = 1.0;
};

LossBreakdown total_loss(double trajectory, double variance_term, double alpha = 1.0);
/// Graph version; a missing variance term contributes nothing.
ad::Var total_loss(ad::Var trajectory, const std::optional<ad::Var>& variance_term, double alpha = 1.0);

/// Average / final L2 displacement error over (P, 2) trajectories.
double ade(const Tensor& pred, const Tensor& truth);
double fde(const Tensor& pred, const Tensor& truth);

}  // namespace trajsel::loss
