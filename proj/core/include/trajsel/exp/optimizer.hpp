#pragma once

#include <string>
#include <vector>

#include "trajsel/model/params.hpp"

namespace trajsel::exp {

struct OptimizerConfig {
  /// "sgd" (plain gradient descent) or "adam".
  std::string kind = "sgd";
  double learning_rate = 1e-3;
  /// Global gradient-norm clip; <= 0 disables.
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  /// Clips the accumulated gradients, applies one update and returns the
  /// pre-clip gradient norm.
  double step(model::ParameterStore& store);

  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace trajsel::exp
