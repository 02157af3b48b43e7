#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "trajsel/data/scene.hpp"
#include "trajsel/exp/optimizer.hpp"
#include "trajsel/model/estimator.hpp"
#include "trajsel/model/predictor.hpp"
#include "trajsel/select/selection.hpp"

namespace trajsel::exp {

class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Phase { Predictor, Estimator };

struct TrainConfig {
  Phase phase = Phase::Predictor;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  select::GumbelConfig gumbel;
  double alpha = 1.0;
  double variance_eps = 1e-6;
  /// Random rotation of each scene per epoch (same angle for everyone in it).
  bool augment_rotation = false;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double trajectory = 0.0;
  double variance_term = 0.0;
  double score_mean = 0.0;
  double score_std = 0.0;  // mean over scenes of the within-scene std
  double keep_rate = 0.0;  // sampled keep fraction of neighbors
  double grad_norm = 0.0;  // mean pre-clip norm
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  /// Trajectory loss of the very first scene evaluated, before any update.
  double first_trajectory_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Fits the predictor on the primary's future with everyone visible.
model::PredictorModel train_predictor(const std::vector<data::Scene>& scenes, const model::PredictorConfig& config,
                                      const TrainConfig& train, TrainLog* log = nullptr,
                                      const EpochCallback& on_epoch = {});

/// Fits the estimator against a frozen predictor using straight-through
/// Gumbel masks and trajectory + alpha * variance loss.
model::EstimatorModel train_estimator(const std::vector<data::Scene>& scenes, const model::PredictorModel& predictor,
                                      const model::EstimatorConfig& config, const TrainConfig& train,
                                      TrainLog* log = nullptr, const EpochCallback& on_epoch = {});

/// Scene prepared for the models: normalized frame, per-step inputs and the
/// primary's future in that frame.
struct PreparedScene {
  const data::Scene* source = nullptr;
  data::Scene normalized;
  data::SceneTransform transform;
  Tensor inputs;
  Tensor truth;
};
PreparedScene prepare_scene(const data::Scene& scene, const model::PredictorConfig& config);

/// Extrapolates the primary's last observed velocity; (horizon, 2) in the scene's frame.
Tensor constant_velocity_forecast(const data::Scene& scene, const model::PredictorConfig& config);

}  // namespace trajsel::exp
