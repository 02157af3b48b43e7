#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajsel/data/synthetic.hpp"
#include "trajsel/exp/training.hpp"
#include "trajsel/model/estimator.hpp"
#include "trajsel/model/predictor.hpp"

namespace trajsel::exp {

/// Scenes come from `path` when set, otherwise from the synthetic generator.
struct DataSource {
  std::string path;
  data::SyntheticConfig synthetic;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  data::WindowConfig window;
  DataSource train;
  /// Estimator training scenes; the predictor's set when absent.
  std::optional<DataSource> estimator_train;
  DataSource eval;
  model::PredictorConfig predictor;
  model::EstimatorConfig estimator;
  TrainConfig train_tp;
  TrainConfig train_ie;
  select::GumbelConfig gumbel;
  std::size_t sweep_min = 1;
  std::size_t sweep_max = 40;
  std::string out_dir = "out";
  std::string tp_checkpoint;  // default: <out_dir>/tp.ckpt
  std::string ie_checkpoint;  // default: <out_dir>/ie.ckpt

  /// Pushes seed, window and gumbel settings into the nested configs and validates.
  void finalize();

  std::filesystem::path tp_path() const;
  std::filesystem::path ie_path() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

enum class DataRole { Train, EstimatorTrain, Eval };
std::vector<data::Scene> load_data(const ExperimentConfig& config, DataRole role);

}  // namespace trajsel::exp
