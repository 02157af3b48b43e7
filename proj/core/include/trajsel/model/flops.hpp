#pragma once

#include <cstdint>

#include "trajsel/model/estimator.hpp"
#include "trajsel/model/predictor.hpp"

namespace trajsel::model {

/// Operation counts for one inference at batch size 1.
struct FlopsReport {
  std::uint64_t temporal_encoder = 0;
  std::uint64_t social_encoder = 0;
  std::uint64_t decoder = 0;
  std::uint64_t estimator = 0;
  std::uint64_t total = 0;
  std::size_t n_in = 0;
  std::size_t n_kept = 0;
  /// total relative to the predictor alone on all n_in people.
  double ratio = 1.0;
};

/// Multiply-add cost of an (n, in) x (in, out) product, bias excluded.
std::uint64_t linear_flops(std::uint64_t n, std::uint64_t in, std::uint64_t out);

FlopsReport predictor_flops(const PredictorConfig& config, std::size_t n_people);

/// Estimator cost on n_people (0 for a lone primary).
std::uint64_t estimator_flops(const EstimatorConfig& config, std::size_t n_people);

/// Without the estimator: predictor on n_in. With it: estimator on n_in plus
/// predictor on n_kept.
FlopsReport pipeline_flops(const PredictorConfig& predictor, const EstimatorConfig& estimator, std::size_t n_in,
                           std::size_t n_kept, bool use_estimator);

}  // namespace trajsel::model
