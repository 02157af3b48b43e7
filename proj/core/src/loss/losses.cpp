#include "trajsel/loss/losses.hpp"

#include <cmath>
#include <string>

namespace trajsel::loss {

namespace {

void check_pair(const char* op, const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape() || pred.rank() != 2 || pred.cols() != 2) {
    throw ContractError(std::string(op) + ": expected matching (P, 2) trajectories, got " +
                        shape_to_string(pred.shape()) + " and " + shape_to_string(truth.shape()));
  }
}

double step_error(const Tensor& pred, const Tensor& truth, std::size_t t) {
  return std::hypot(pred.at(t, 0) - truth.at(t, 0), pred.at(t, 1) - truth.at(t, 1));
}

}  // namespace

ad::Var trajectory_loss(ad::Var pred, ad::Var truth) {
  check_pair("trajectory_loss", pred.value(), truth.value());
  ad::Var d = ad::sub(pred, truth);
  return ad::scale(ad::sum(ad::mul(d, d)), 1.0 / static_cast<double>(pred.value().rows()));
}

double trajectory_loss(const Tensor& pred, const Tensor& truth) {
  check_pair("trajectory_loss", pred, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.rows());
}

std::optional<ad::Var> variance_loss(ad::Var scores, double eps) {
  if (!scores.valid() || scores.value().size() < 2) return std::nullopt;
  if (!(eps > 0.0)) throw ContractError("variance_loss: epsilon must be > 0");
  return ad::scale(ad::log(ad::add_scalar(ad::variance(scores), eps)), -1.0);
}

std::optional<double> variance_loss(std::span<const double> scores, double eps) {
  if (scores.size() < 2) return std::nullopt;
  if (!(eps > 0.0)) throw ContractError("variance_loss: epsilon must be > 0");
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores.size());
  return -std::log(var + eps);
}

LossBreakdown total_loss(double trajectory, double variance_term, double alpha) {
  if (!(alpha >= 0.0)) throw ContractError("total_loss: alpha must be >= 0");
  return {trajectory, variance_term, trajectory + alpha * variance_term, alpha};
}

ad::Var total_loss(ad::Var trajectory, const std::optional<ad::Var>& variance_term, double alpha) {
  if (!(alpha >= 0.0)) throw ContractError("total_loss: alpha must be >= 0");
  if (!variance_term || alpha == 0.0) return trajectory;
  return ad::add(trajectory, ad::scale(*variance_term, alpha));
}

double ade(const Tensor& pred, const Tensor& truth) {
  check_pair("ade", pred, truth);
  double s = 0.0;
  for (std::size_t t = 0; t < pred.rows(); ++t) s += step_error(pred, truth, t);
  return s / static_cast<double>(pred.rows());
}

double fde(const Tensor& pred, const Tensor& truth) {
  check_pair("fde", pred, truth);
  return step_error(pred, truth, pred.rows() - 1);
}

}  // namespace trajsel::loss
