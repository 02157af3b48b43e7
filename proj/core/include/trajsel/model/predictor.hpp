#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trajsel/autodiff/ops.hpp"
#include "trajsel/data/scene.hpp"
#include "trajsel/model/params.hpp"

namespace trajsel::model {

struct PredictorConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_temporal_layers = 2;
  std::size_t n_social_layers = 2;
  std::size_t d_ff = 128;
  std::size_t t_obs = 9;
  std::size_t t_pred = 21;
  /// Multiplier on normalized positions before embedding.
  double offset_scale = 0.2;

  static constexpr std::size_t kInputWidth = 4;  // dx, dy, x, y

  std::size_t horizon() const { return t_pred - t_obs; }
  data::WindowConfig window(double frame_rate = 2.5) const { return {t_obs, t_pred, frame_rate}; }
  void validate() const;

  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

/// Baseline trajectory predictor: per-person temporal transformer, social
/// transformer across people, and a displacement decoder on the primary token.
struct PredictorModel {
  PredictorConfig config;
  ParameterStore params;

  static PredictorModel initialize(const PredictorConfig& config, std::uint64_t seed);
};

/// Per-step tokens (N * t_obs, 4): displacement from the previous step and
/// scaled position, for each person of a normalized scene.
Tensor build_person_inputs(const data::Scene& normalized, const PredictorConfig& config);

/// (N * t_obs, 4) tokens -> (N, d_model) features. Each row depends only on
/// that person's tokens.
ad::Var extract_individual_features(Binding& params, ad::Var inputs, const PredictorConfig& config);
Tensor extract_individual_features(const data::Scene& normalized, const PredictorModel& model);

/// Primary future positions (horizon, 2) in the normalized frame.
/// `key_gate` (length N, entry 0 > 0) restricts attention to gated-on people;
/// an invalid Var means everyone is visible.
ad::Var predict(Binding& params, ad::Var features, ad::Var key_gate, const PredictorConfig& config);

/// Tensor-level prediction with a binary keep mask (mask[0] must be 1).
/// Masked people are excluded as queries and keys, so the result equals
/// predicting on the features with the masked rows removed.
Tensor predict(const Tensor& features, std::span<const std::uint8_t> mask, const PredictorModel& model);

/// Keeps the rows whose mask entry is set.
Tensor select_rows(const Tensor& features, std::span<const std::uint8_t> mask);

/// Normalizes, predicts with everyone visible, and maps back to original coordinates.
std::vector<data::Point> forecast(const data::Scene& scene, const PredictorModel& model);

/// Ground-truth future of the primary in the frame of `scene`, as (horizon, 2).
Tensor primary_future(const data::Scene& scene, const PredictorConfig& config);

}  // namespace trajsel::model
