#pragma once

#include <cstdint>

#include "trajsel/autodiff/ops.hpp"
#include "trajsel/model/params.hpp"

namespace trajsel::model {

struct EstimatorConfig {
  std::size_t feature_width = 64;  // must match the predictor's d_model
  std::size_t d_embed = 64;
  std::size_t n_heads = 2;
  std::size_t n_layers = 1;
  std::size_t d_ff = 128;
  /// false: only the primary token queries the neighbors.
  bool full_self_attention = false;
  /// Initial bias of the final score layer (sigmoid of it is the starting score).
  double score_bias_init = 0.0;

  void validate() const;

  friend bool operator==(const EstimatorConfig&, const EstimatorConfig&) = default;
};

struct EstimatorModel {
  EstimatorConfig config;
  ParameterStore params;

  static EstimatorModel initialize(const EstimatorConfig& config, std::uint64_t seed);
};

/// (N, feature_width) person features -> (N-1) neighbor scores in (0,1).
/// Returns an invalid Var for N == 1.
ad::Var estimate_scores(Binding& params, ad::Var features, const EstimatorConfig& config);

/// Tensor-level scoring. Empty for N == 1.
std::vector<double> estimate_scores(const Tensor& features, const EstimatorModel& model);

}  // namespace trajsel::model
