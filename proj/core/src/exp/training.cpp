#include "trajsel/exp/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include "trajsel/loss/losses.hpp"

namespace trajsel::exp {

void TrainConfig::validate() const {
  if (epochs == 0) throw data::ConfigError("train config: epochs must be >= 1");
  if (batch_size == 0) throw data::ConfigError("train config: batch_size must be >= 1");
  if (!(alpha >= 0.0)) throw data::ConfigError("train config: alpha must be >= 0");
  if (!(variance_eps > 0.0)) throw data::ConfigError("train config: variance_eps must be > 0");
  optimizer.validate();
  gumbel.validate();
}

PreparedScene prepare_scene(const data::Scene& scene, const model::PredictorConfig& config) {
  PreparedScene p;
  p.source = &scene;
  auto [norm, tf] = data::normalize_scene(scene, config.window(scene.frame_rate));
  p.normalized = std::move(norm);
  p.transform = tf;
  p.inputs = model::build_person_inputs(p.normalized, config);
  p.truth = model::primary_future(p.normalized, config);
  return p;
}

Tensor constant_velocity_forecast(const data::Scene& scene, const model::PredictorConfig& config) {
  const auto& pos = scene.primary().positions;
  const data::Point last = pos[config.t_obs - 1];
  const data::Point prev = config.t_obs >= 2 ? pos[config.t_obs - 2] : last;
  Tensor out({config.horizon(), 2}, 0.0);
  for (std::size_t t = 0; t < config.horizon(); ++t) {
    const double k = static_cast<double>(t + 1);
    out.at(t, 0) = last.x + k * (last.x - prev.x);
    out.at(t, 1) = last.y + k * (last.y - prev.y);
  }
  return out;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x6f72646572ull, epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, i - 1)]);
  return order;
}

void check_finite(double v, const char* phase, std::size_t epoch) {
  if (!std::isfinite(v)) {
    throw TrainingDivergence(std::string(phase) + " training diverged: non-finite loss in epoch " +
                             std::to_string(epoch + 1));
  }
}

void require_scenes(const std::vector<data::Scene>& scenes) {
  if (scenes.empty()) throw data::ConfigError("training needs at least one scene");
}

}  // namespace

model::PredictorModel train_predictor(const std::vector<data::Scene>& scenes, const model::PredictorConfig& config,
                                      const TrainConfig& train, TrainLog* log, const EpochCallback& on_epoch) {
  if (train.phase != Phase::Predictor) throw data::ConfigError("train_predictor: phase must be tp");
  train.validate();
  require_scenes(scenes);
  model::PredictorModel m = model::PredictorModel::initialize(config, train.seed);
  Optimizer opt(train.optimizer);

  std::vector<PreparedScene> prepared;
  prepared.reserve(scenes.size());
  for (const auto& s : scenes) prepared.push_back(prepare_scene(s, config));

  TrainLog local;
  bool first = true;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    const auto order = epoch_order(prepared.size(), train.seed, epoch);
    EpochLog el;
    el.epoch = epoch + 1;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < order.size(); b += train.batch_size) {
      const std::size_t end = std::min(order.size(), b + train.batch_size);
      const double weight = 1.0 / static_cast<double>(end - b);
      m.params.zero_grad();
      for (std::size_t k = b; k < end; ++k) {
        const PreparedScene* ps = &prepared[order[k]];
        PreparedScene rotated;
        if (train.augment_rotation) {
          Rng rr(derive_seed(train.seed, 0x726f74ull, epoch * prepared.size() + order[k]));
          const double angle = rr.uniform(0.0, 2.0 * 3.14159265358979323846);
          rotated = prepare_scene(data::rotate_scene(ps->normalized, angle), config);
          ps = &rotated;
        }
        ad::Graph g;
        model::Binding p(g, m.params, true);
        ad::Var features = model::extract_individual_features(p, g.constant(ps->inputs), config);
        ad::Var pred = model::predict(p, features, {}, config);
        ad::Var lt = loss::trajectory_loss(pred, g.constant(ps->truth));
        const double v = lt.value().item();
        check_finite(v, "predictor", epoch);
        if (first) {
          local.first_trajectory_loss = v;
          first = false;
        }
        el.trajectory += v;
        g.backward(ad::scale(lt, weight));
        p.accumulate_grads(m.params);
      }
      el.grad_norm += opt.step(m.params);
      ++steps;
    }
    if (!m.params.all_finite()) throw TrainingDivergence("predictor training diverged: non-finite parameters");
    el.trajectory /= static_cast<double>(prepared.size());
    el.loss = el.trajectory;
    el.grad_norm /= static_cast<double>(steps);
    spdlog::info("tp epoch {}/{} loss {:.6f} grad_norm {:.4f}", el.epoch, train.epochs, el.loss, el.grad_norm);
    local.epochs.push_back(el);
    if (on_epoch) on_epoch(el);
  }
  if (log) *log = std::move(local);
  return m;
}

model::EstimatorModel train_estimator(const std::vector<data::Scene>& scenes, const model::PredictorModel& predictor,
                                      const model::EstimatorConfig& config, const TrainConfig& train, TrainLog* log,
                                      const EpochCallback& on_epoch) {
  if (train.phase != Phase::Estimator) throw data::ConfigError("train_estimator: phase must be ie");
  train.validate();
  require_scenes(scenes);
  if (config.feature_width != predictor.config.d_model) {
    throw data::ConfigError("train_estimator: estimator feature_width " + std::to_string(config.feature_width) +
                            " != predictor d_model " + std::to_string(predictor.config.d_model));
  }
  model::EstimatorModel m = model::EstimatorModel::initialize(config, train.seed);
  Optimizer opt(train.optimizer);

  // The predictor is frozen, so person features are computed once.
  struct Item {
    Tensor features;
    Tensor truth;
  };
  std::vector<Item> items;
  for (const auto& s : scenes) {
    if (s.size() < 2) continue;
    PreparedScene ps = prepare_scene(s, predictor.config);
    items.push_back({model::extract_individual_features(ps.normalized, predictor), ps.truth});
  }
  if (items.empty()) throw data::ConfigError("train_estimator: no scene has a neighbor");

  TrainLog local;
  bool first = true;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    const double temperature = train.gumbel.temperature_at(epoch);
    const auto order = epoch_order(items.size(), train.seed, epoch);
    EpochLog el;
    el.epoch = epoch + 1;
    std::size_t steps = 0, var_scenes = 0, neighbors = 0, kept = 0;
    for (std::size_t b = 0; b < order.size(); b += train.batch_size) {
      const std::size_t end = std::min(order.size(), b + train.batch_size);
      std::size_t contributing = 0;
      for (std::size_t k = b; k < end; ++k) contributing += items[order[k]].features.rows() >= 3;
      const double traj_weight = 1.0 / static_cast<double>(end - b);
      const double var_weight = contributing ? 1.0 / static_cast<double>(contributing) : 0.0;

      m.params.zero_grad();
      for (std::size_t k = b; k < end; ++k) {
        const Item& it = items[order[k]];
        ad::Graph g;
        model::Binding pe(g, m.params, true);
        model::Binding pt(g, predictor.params, false);
        ad::Var features = g.constant(it.features);
        ad::Var scores = model::estimate_scores(pe, features, config);
        Rng rng(derive_seed(train.seed, epoch, order[k]));
        select::GumbelGate gate = select::gumbel_gate(scores, temperature, rng);
        ad::Var pred = model::predict(pt, features, gate.gate, predictor.config);
        ad::Var lt = loss::trajectory_loss(pred, g.constant(it.truth));
        auto lv = loss::variance_loss(scores, train.variance_eps);

        const double tv = lt.value().item();
        check_finite(tv, "estimator", epoch);
        if (first) {
          local.first_trajectory_loss = tv;
          first = false;
        }
        el.trajectory += tv;
        const auto sv = scores.value().data();
        double mean = 0.0, var = 0.0;
        for (double s : sv) mean += s;
        mean /= static_cast<double>(sv.size());
        for (double s : sv) var += (s - mean) * (s - mean);
        el.score_mean += mean;
        el.score_std += std::sqrt(var / static_cast<double>(sv.size()));
        neighbors += sv.size();
        kept += gate.mask.kept_neighbors();

        ad::Var objective = ad::scale(lt, traj_weight);
        if (lv) {
          el.variance_term += lv->value().item();
          ++var_scenes;
          if (train.alpha != 0.0) objective = ad::add(objective, ad::scale(*lv, train.alpha * var_weight));
        }
        g.backward(objective);
        pe.accumulate_grads(m.params);
      }
      el.grad_norm += opt.step(m.params);
      ++steps;
    }
    if (!m.params.all_finite()) throw TrainingDivergence("estimator training diverged: non-finite parameters");
    const double n = static_cast<double>(items.size());
    el.trajectory /= n;
    el.score_mean /= n;
    el.score_std /= n;
    el.variance_term = var_scenes ? el.variance_term / static_cast<double>(var_scenes) : 0.0;
    el.loss = el.trajectory + train.alpha * el.variance_term;
    el.keep_rate = static_cast<double>(kept) / static_cast<double>(neighbors);
    el.grad_norm /= static_cast<double>(steps);
    spdlog::info("ie epoch {}/{} loss {:.6f} traj {:.6f} var {:.4f} score mean {:.4f} std {:.4f} keep {:.3f}",
                 el.epoch, train.epochs, el.loss, el.trajectory, el.variance_term, el.score_mean, el.score_std,
                 el.keep_rate);
    local.epochs.push_back(el);
    if (on_epoch) on_epoch(el);
  }
  if (log) *log = std::move(local);
  return m;
}

}  // namespace trajsel::exp
