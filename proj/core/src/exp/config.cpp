#include "trajsel/exp/config.hpp"

#include <fstream>
#include <set>

#include "trajsel/model/checkpoint.hpp"

namespace trajsel::exp {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw data::ConfigError(where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw data::ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

data::WindowConfig parse_window(const json& j) {
  only_keys(j, "window", {"t_obs", "t_pred", "frame_rate"});
  data::WindowConfig w;
  read(j, "t_obs", w.t_obs);
  read(j, "t_pred", w.t_pred);
  read(j, "frame_rate", w.frame_rate);
  return w;
}

DataSource parse_source(const json& j, const std::string& where) {
  only_keys(j, where,
            {"path", "scene_count", "min_people", "max_people", "arena_size", "min_speed", "max_speed",
             "repulsion_gain", "repulsion_radius", "relaxation_time", "noise_sigma", "substeps", "far_fraction",
             "far_min_radii", "far_max_radii", "id_prefix"});
  DataSource s;
  auto& c = s.synthetic;
  read(j, "path", s.path);
  read(j, "scene_count", c.scene_count);
  read(j, "min_people", c.min_people);
  read(j, "max_people", c.max_people);
  read(j, "arena_size", c.arena_size);
  read(j, "min_speed", c.min_speed);
  read(j, "max_speed", c.max_speed);
  read(j, "repulsion_gain", c.dynamics.repulsion_gain);
  read(j, "repulsion_radius", c.dynamics.repulsion_radius);
  read(j, "relaxation_time", c.dynamics.relaxation_time);
  read(j, "noise_sigma", c.dynamics.noise_sigma);
  read(j, "substeps", c.dynamics.substeps);
  read(j, "far_fraction", c.far_fraction);
  read(j, "far_min_radii", c.far_min_radii);
  read(j, "far_max_radii", c.far_max_radii);
  read(j, "id_prefix", c.id_prefix);
  return s;
}

json source_json(const DataSource& s) {
  const auto& c = s.synthetic;
  return {{"path", s.path},
          {"scene_count", c.scene_count},
          {"min_people", c.min_people},
          {"max_people", c.max_people},
          {"arena_size", c.arena_size},
          {"min_speed", c.min_speed},
          {"max_speed", c.max_speed},
          {"repulsion_gain", c.dynamics.repulsion_gain},
          {"repulsion_radius", c.dynamics.repulsion_radius},
          {"relaxation_time", c.dynamics.relaxation_time},
          {"noise_sigma", c.dynamics.noise_sigma},
          {"substeps", c.dynamics.substeps},
          {"far_fraction", c.far_fraction},
          {"far_min_radii", c.far_min_radii},
          {"far_max_radii", c.far_max_radii},
          {"id_prefix", c.id_prefix}};
}

TrainConfig parse_train(const json& j, const std::string& where, Phase phase) {
  only_keys(j, where, {"epochs", "batch_size", "optimizer", "learning_rate", "clip_norm", "beta1", "beta2",
                       "epsilon", "alpha", "variance_eps", "augment_rotation"});
  TrainConfig t;
  t.phase = phase;
  read(j, "epochs", t.epochs);
  read(j, "batch_size", t.batch_size);
  read(j, "optimizer", t.optimizer.kind);
  read(j, "learning_rate", t.optimizer.learning_rate);
  read(j, "clip_norm", t.optimizer.clip_norm);
  read(j, "beta1", t.optimizer.beta1);
  read(j, "beta2", t.optimizer.beta2);
  read(j, "epsilon", t.optimizer.epsilon);
  read(j, "alpha", t.alpha);
  read(j, "variance_eps", t.variance_eps);
  read(j, "augment_rotation", t.augment_rotation);
  return t;
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"optimizer", t.optimizer.kind},
          {"learning_rate", t.optimizer.learning_rate},
          {"clip_norm", t.optimizer.clip_norm},
          {"beta1", t.optimizer.beta1},
          {"beta2", t.optimizer.beta2},
          {"epsilon", t.optimizer.epsilon},
          {"alpha", t.alpha},
          {"variance_eps", t.variance_eps},
          {"augment_rotation", t.augment_rotation}};
}

}  // namespace

void ExperimentConfig::finalize() {
  window.validate();
  for (DataSource* s : {&train, &eval}) s->synthetic.window = window;
  if (estimator_train) estimator_train->synthetic.window = window;
  predictor.t_obs = window.t_obs;
  predictor.t_pred = window.t_pred;
  estimator.feature_width = predictor.d_model;
  train_tp.phase = Phase::Predictor;
  train_ie.phase = Phase::Estimator;
  train_tp.seed = train_ie.seed = seed;
  train_tp.gumbel = train_ie.gumbel = gumbel;
  try {
    predictor.validate();
    estimator.validate();
    gumbel.validate();
    train_tp.validate();
    train_ie.validate();
  } catch (const ContractError& e) {
    throw data::ConfigError(e.what());
  }
  if (sweep_min == 0 || sweep_max < sweep_min) throw data::ConfigError("sweep: need 1 <= min <= max");
}

std::filesystem::path ExperimentConfig::tp_path() const {
  return tp_checkpoint.empty() ? std::filesystem::path(out_dir) / "tp.ckpt" : std::filesystem::path(tp_checkpoint);
}

std::filesystem::path ExperimentConfig::ie_path() const {
  return ie_checkpoint.empty() ? std::filesystem::path(out_dir) / "ie.ckpt" : std::filesystem::path(ie_checkpoint);
}

ExperimentConfig parse_experiment_config(const json& j) {
  ExperimentConfig c;
  try {
    only_keys(j, "experiment config", {"seed", "window", "data", "predictor", "estimator", "train_tp", "train_ie", "gumbel",
                            "alpha", "threshold", "sweep", "out_dir", "tp_checkpoint", "ie_checkpoint"});
    read(j, "seed", c.seed);
    if (j.contains("window")) c.window = parse_window(j.at("window"));
    c.eval.synthetic.id_prefix = "eval";
    c.eval.synthetic.min_people = 8;
    c.eval.synthetic.max_people = 40;
    if (j.contains("data")) {
      const json& d = j.at("data");
      only_keys(d, "data", {"train", "estimator_train", "eval"});
      if (d.contains("train")) c.train = parse_source(d.at("train"), "data.train");
      if (d.contains("estimator_train")) c.estimator_train = parse_source(d.at("estimator_train"), "data.estimator_train");
      if (d.contains("eval")) {
        json merged = source_json(c.eval);
        merged.update(d.at("eval"));
        c.eval = parse_source(merged, "data.eval");
      }
    }
    if (j.contains("predictor")) c.predictor = j.at("predictor").get<model::PredictorConfig>();
    if (j.contains("estimator")) c.estimator = j.at("estimator").get<model::EstimatorConfig>();
    if (j.contains("train_tp")) c.train_tp = parse_train(j.at("train_tp"), "train_tp", Phase::Predictor);
    if (j.contains("train_ie")) c.train_ie = parse_train(j.at("train_ie"), "train_ie", Phase::Estimator);
    if (j.contains("gumbel")) {
      const json& g = j.at("gumbel");
      only_keys(g, "gumbel", {"temperature", "anneal", "threshold", "min_keep"});
      read(g, "temperature", c.gumbel.temperature);
      read(g, "anneal", c.gumbel.anneal);
      read(g, "threshold", c.gumbel.threshold);
      read(g, "min_keep", c.gumbel.min_keep);
    }
    if (j.contains("alpha")) c.train_ie.alpha = j.at("alpha").get<double>();
    if (j.contains("threshold")) c.gumbel.threshold = j.at("threshold").get<double>();
    if (j.contains("sweep")) {
      const json& s = j.at("sweep");
      only_keys(s, "sweep", {"min_people", "max_people"});
      read(s, "min_people", c.sweep_min);
      read(s, "max_people", c.sweep_max);
    }
    read(j, "out_dir", c.out_dir);
    read(j, "tp_checkpoint", c.tp_checkpoint);
    read(j, "ie_checkpoint", c.ie_checkpoint);
  } catch (const json::exception& e) {
    throw data::ConfigError(std::string("config: ") + e.what());
  }
  c.finalize();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data::ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw data::ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_experiment_config(j);
}

json to_json(const ExperimentConfig& c) {
  json data{{"train", source_json(c.train)}, {"eval", source_json(c.eval)}};
  if (c.estimator_train) data["estimator_train"] = source_json(*c.estimator_train);
  return {{"seed", c.seed},
          {"window", {{"t_obs", c.window.t_obs}, {"t_pred", c.window.t_pred}, {"frame_rate", c.window.frame_rate}}},
          {"data", data},
          {"predictor", json(c.predictor)},
          {"estimator", json(c.estimator)},
          {"train_tp", train_json(c.train_tp)},
          {"train_ie", train_json(c.train_ie)},
          {"gumbel",
           {{"temperature", c.gumbel.temperature},
            {"anneal", c.gumbel.anneal},
            {"threshold", c.gumbel.threshold},
            {"min_keep", c.gumbel.min_keep}}},
          {"sweep", {{"min_people", c.sweep_min}, {"max_people", c.sweep_max}}},
          {"out_dir", c.out_dir},
          {"tp_checkpoint", c.tp_checkpoint},
          {"ie_checkpoint", c.ie_checkpoint}};
}

std::vector<data::Scene> load_data(const ExperimentConfig& c, DataRole role) {
  const DataSource* src = &c.train;
  std::uint64_t stream = 1;
  if (role == DataRole::EstimatorTrain && c.estimator_train) {
    src = &*c.estimator_train;
    stream = 3;
  } else if (role == DataRole::Eval) {
    src = &c.eval;
    stream = 2;
  }
  if (!src->path.empty()) return data::load_scenes(src->path, c.window).scenes;
  return data::generate_synthetic(src->synthetic, derive_seed(c.seed, stream));
}

}  // namespace trajsel::exp
