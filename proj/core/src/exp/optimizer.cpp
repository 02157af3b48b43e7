#include "trajsel/exp/optimizer.hpp"

#include <cmath>

namespace trajsel::exp {

void OptimizerConfig::validate() const {
  if (kind != "sgd" && kind != "adam") throw ContractError("optimizer: unknown kind '" + kind + "'");
  if (!(learning_rate > 0.0)) throw ContractError("optimizer: learning_rate must be > 0");
  if (kind == "adam" && !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw ContractError("optimizer: adam betas must lie in [0,1) and epsilon > 0");
  }
}

Optimizer::Optimizer(OptimizerConfig config) : config_(std::move(config)) { config_.validate(); }

double Optimizer::step(model::ParameterStore& store) {
  const double norm = store.grad_norm();
  const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
  auto& entries = store.entries();
  const double lr = config_.learning_rate;

  if (config_.kind == "sgd") {
    for (auto& e : entries)
      for (std::size_t i = 0; i < e.value.size(); ++i) e.value[i] -= lr * clip * e.grad[i];
    return norm;
  }

  if (m_.empty()) {
    for (const auto& e : entries) {
      m_.emplace_back(e.value.shape(), 0.0);
      v_.emplace_back(e.value.shape(), 0.0);
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& e = entries[k];
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = clip * e.grad[i];
      m_[k][i] = b1 * m_[k][i] + (1.0 - b1) * g;
      v_[k][i] = b2 * v_[k][i] + (1.0 - b2) * g * g;
      e.value[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + config_.epsilon);
    }
  }
  return norm;
}

}  // namespace trajsel::exp
