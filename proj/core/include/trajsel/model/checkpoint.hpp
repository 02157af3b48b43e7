#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "trajsel/model/estimator.hpp"
#include "trajsel/model/predictor.hpp"

namespace trajsel::model {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCheckpointMagic = "TRAJSEL-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

void to_json(nlohmann::json& j, const PredictorConfig& c);
void from_json(const nlohmann::json& j, PredictorConfig& c);
void to_json(nlohmann::json& j, const EstimatorConfig& c);
void from_json(const nlohmann::json& j, EstimatorConfig& c);

/// Layout: a magic line, a one-line JSON manifest (kind, config, array index),
/// then the arrays as raw little-endian float64 in manifest order.
void write_checkpoint(std::ostream& out, const std::string& kind, const nlohmann::json& config,
                      const ParameterStore& params);

struct RawCheckpoint {
  std::string kind;
  nlohmann::json config;
  ParameterStore params;
};
RawCheckpoint read_checkpoint(std::istream& in);

void save_predictor(const std::string& path, const PredictorModel& model);
PredictorModel load_predictor(const std::string& path);
void save_estimator(const std::string& path, const EstimatorModel& model);
EstimatorModel load_estimator(const std::string& path);

/// Copies `loaded` into `target`, which must hold exactly the same names and shapes.
void assign_parameters(ParameterStore& target, const ParameterStore& loaded);

}  // namespace trajsel::model
