#pragma once

#include <array>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "trajsel/data/scene.hpp"
#include "trajsel/model/estimator.hpp"
#include "trajsel/model/predictor.hpp"
#include "trajsel/select/selection.hpp"

namespace trajsel::exp {

struct SceneResult {
  std::string scene_id;
  std::size_t n_in = 0;
  std::size_t n_kept = 0;
  double baseline_ade = 0.0;
  double baseline_fde = 0.0;
  double ade = 0.0;
  double fde = 0.0;
  double flops_ratio = 1.0;
  std::vector<double> scores;  // one per neighbor, in track order
};

struct KeepStats {
  std::size_t scenes = 0;
  double keep_rate = 0.0;  // mean fraction of neighbors kept
};

struct EvalReport {
  std::vector<SceneResult> rows;  // sorted by scene_id
  // Mean over scenes.
  double baseline_ade = 0.0, baseline_fde = 0.0, ade = 0.0, fde = 0.0;
  // Mean over all predicted steps (pooled across scenes).
  double pooled_baseline_ade = 0.0, pooled_baseline_fde = 0.0, pooled_ade = 0.0, pooled_fde = 0.0;
  /// Mean kept fraction of neighbors over scenes that have neighbors.
  double keep_rate = 1.0;
  double flops_ratio = 1.0;
  /// Mean within-scene score std over scenes with >= 2 neighbors.
  double score_std = 0.0;
  double score_mean = 0.0;
  std::map<std::size_t, KeepStats> keep_by_n;
  std::array<std::size_t, 10> score_histogram{};
};

/// Baseline (everyone) vs thresholded selection with the dropped people
/// physically removed. Metrics are in original coordinates.
EvalReport evaluate(const std::vector<data::Scene>& scenes, const model::PredictorModel& predictor,
                    const model::EstimatorModel& estimator, const select::GumbelConfig& selection);

/// Predicted primary future in original coordinates after keeping `keep`
/// (entry 0 must be set) and physically dropping the rest.
Tensor predict_kept(const data::Scene& scene, const model::PredictorModel& predictor,
                    const std::vector<std::uint8_t>& keep);

struct OracleRow {
  std::string scene_id;
  std::size_t n_in = 0;
  double baseline_ade = 0.0, baseline_fde = 0.0;
  double oracle_ade = 0.0, oracle_fde = 0.0;
  int removed_person_id = 0;  // 0: the baseline itself was best
};

struct OracleReport {
  std::vector<OracleRow> rows;
  double baseline_ade = 0.0, baseline_fde = 0.0, oracle_ade = 0.0, oracle_fde = 0.0;
  std::size_t improved_scenes = 0;
};

/// Best of the baseline and every single-neighbor removal, per scene, by ADE.
OracleReport oracle_eval(const std::vector<data::Scene>& scenes, const model::PredictorModel& predictor);

struct SweepRow {
  std::size_t n_people = 0;
  double keep_rate = 1.0;
  std::size_t n_kept = 0;
  std::uint64_t baseline_flops = 0;
  std::uint64_t pruned_flops = 0;
  double baseline_ratio = 1.0;
  double pruned_ratio = 1.0;     // estimator + predictor on kept people
  double collapsed_ratio = 1.0;  // estimator + predictor on everyone
};

struct SweepReport {
  std::vector<SweepRow> rows;
  /// Smallest N from which the pruned ratio stays below 1.
  std::optional<std::size_t> crossover;
};

/// Keep rates per N; missing N fall back to `default_keep_rate`.
SweepReport flops_sweep(const model::PredictorConfig& predictor, const model::EstimatorConfig& estimator,
                        std::size_t n_min, std::size_t n_max, const std::map<std::size_t, double>& keep_rates,
                        double default_keep_rate);

/// Neighbors kept out of n-1 at a given keep rate, plus the primary.
std::size_t kept_people(std::size_t n_people, double keep_rate);

// Plain-text outputs. Reals are written with fixed 6 decimals.
void write_metrics_csv(std::ostream& out, const EvalReport& report, bool baseline);
void write_eval_summary(std::ostream& out, const EvalReport& report);
void write_oracle_csv(std::ostream& out, const OracleReport& report);
void write_oracle_summary(std::ostream& out, const OracleReport& report);
void write_sweep_csv(std::ostream& out, const SweepReport& report);
void write_scores(std::ostream& out, const std::vector<data::Scene>& scenes, const model::PredictorModel& predictor,
                  const model::EstimatorModel& estimator);

}  // namespace trajsel::exp
