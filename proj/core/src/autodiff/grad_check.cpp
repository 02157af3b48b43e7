#include "trajsel/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace trajsel::ad {

namespace {

double evaluate(const std::vector<Tensor>& leaves, const LossBuilder& builder) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(leaves.size());
  for (const auto& t : leaves) vars.push_back(g.constant(t));
  return builder(g, vars).value().item();
}

}  // namespace

double GradCheckReport::worst() const {
  double w = 0.0;
  for (double e : max_rel_error) w = std::max(w, e);
  return w;
}

std::string GradCheckReport::summary() const {
  std::ostringstream out;
  out << (passed ? "pass" : "FAIL") << " worst=" << worst() << " tol=" << tolerance << " per-leaf=[";
  for (std::size_t i = 0; i < max_rel_error.size(); ++i) out << (i ? "," : "") << max_rel_error[i];
  out << ']';
  return out.str();
}

GradCheckReport grad_check(const std::vector<Tensor>& leaves, const LossBuilder& builder,
                           double tolerance, double h) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(leaves.size());
  for (const auto& t : leaves) vars.push_back(g.leaf(t));
  Var loss = builder(g, vars);
  g.backward(loss);

  GradCheckReport report;
  report.tolerance = tolerance;
  std::vector<Tensor> probe = leaves;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const Tensor& analytic = vars[l].grad();
    double worst = 0.0;
    for (std::size_t i = 0; i < leaves[l].size(); ++i) {
      const double x0 = leaves[l][i];
      probe[l][i] = x0 + h;
      const double up = evaluate(probe, builder);
      probe[l][i] = x0 - h;
      const double down = evaluate(probe, builder);
      probe[l][i] = x0;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    report.max_rel_error.push_back(worst);
  }
  report.passed = report.worst() < tolerance;
  return report;
}

}  // namespace trajsel::ad
