#include "trajsel/model/predictor.hpp"

#include <algorithm>
#include <string>

#include "trajsel/model/layers.hpp"

namespace trajsel::model {

void PredictorConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_temporal_layers == 0 || n_social_layers == 0 || d_ff == 0) {
    throw ContractError("predictor config: all widths and counts must be >= 1");
  }
  if (d_model % n_heads != 0) throw ContractError("predictor config: d_model not divisible by n_heads");
  if (t_obs == 0 || t_obs >= t_pred) throw ContractError("predictor config: need 0 < t_obs < t_pred");
}

PredictorModel PredictorModel::initialize(const PredictorConfig& config, std::uint64_t seed) {
  config.validate();
  PredictorModel m{config, {}};
  Rng rng(derive_seed(seed, 0x7072656469ull));
  auto& s = m.params;
  const std::size_t d = config.d_model;
  init_linear(s, "temporal.embed", PredictorConfig::kInputWidth, d, rng);
  Tensor pos({config.t_obs, d}, 0.0);
  for (auto& x : pos.data()) x = 0.1 * rng.normal();
  s.add("temporal.position", std::move(pos));
  for (std::size_t l = 0; l < config.n_temporal_layers; ++l)
    init_encoder_layer(s, "temporal.layer" + std::to_string(l), d, config.d_ff, rng);
  init_layer_norm(s, "temporal.ln_f", d);

  Tensor primary({1, d}, 0.0);
  for (auto& x : primary.data()) x = 0.1 * rng.normal();
  s.add("social.primary", std::move(primary));
  for (std::size_t l = 0; l < config.n_social_layers; ++l)
    init_encoder_layer(s, "social.layer" + std::to_string(l), d, config.d_ff, rng);
  init_layer_norm(s, "social.ln_f", d);

  init_linear(s, "decoder.hidden", d, d, rng);
  init_linear(s, "decoder.out", d, 2 * config.horizon(), rng, 0.1);
  return m;
}

Tensor build_person_inputs(const data::Scene& normalized, const PredictorConfig& config) {
  const std::size_t n = normalized.size();
  const std::size_t t_obs = config.t_obs;
  if (n == 0) throw ContractError("build_person_inputs: empty scene");
  for (const auto& t : normalized.tracks) {
    if (t.positions.size() != config.t_pred) {
      throw ContractError("build_person_inputs: track length " + std::to_string(t.positions.size()) +
                          " does not match t_pred " + std::to_string(config.t_pred));
    }
  }
  Tensor in({n * t_obs, PredictorConfig::kInputWidth}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pos = normalized.tracks[i].positions;
    for (std::size_t t = 0; t < t_obs; ++t) {
      const std::size_t row = i * t_obs + t;
      if (t > 0) {
        in.at(row, 0) = pos[t].x - pos[t - 1].x;
        in.at(row, 1) = pos[t].y - pos[t - 1].y;
      }
      in.at(row, 2) = pos[t].x * config.offset_scale;
      in.at(row, 3) = pos[t].y * config.offset_scale;
    }
  }
  return in;
}

ad::Var extract_individual_features(Binding& p, ad::Var inputs, const PredictorConfig& config) {
  const Tensor& in = inputs.value();
  if (in.rank() != 2 || in.cols() != PredictorConfig::kInputWidth || in.rows() % config.t_obs != 0) {
    throw ContractError("extract_individual_features: inputs " + shape_to_string(in.shape()) +
                        " are not (N*t_obs, 4) for t_obs=" + std::to_string(config.t_obs));
  }
  const std::size_t n = in.rows() / config.t_obs;
  ad::Var x = linear(p, "temporal.embed", inputs);
  std::vector<ad::Var> tiled(n, p("temporal.position"));
  x = ad::add(x, ad::concat_rows(tiled));
  for (std::size_t l = 0; l < config.n_temporal_layers; ++l)
    x = encoder_layer(p, "temporal.layer" + std::to_string(l), x, config.t_obs, config.n_heads);
  x = layer_norm(p, "temporal.ln_f", x);
  return ad::mean_pool(x, config.t_obs);
}

Tensor extract_individual_features(const data::Scene& normalized, const PredictorModel& model) {
  ad::Graph g;
  Binding p(g, model.params, false);
  return extract_individual_features(p, g.constant(build_person_inputs(normalized, model.config)), model.config)
      .value();
}

ad::Var predict(Binding& p, ad::Var features, ad::Var key_gate, const PredictorConfig& config) {
  const Tensor& f = features.value();
  if (f.rank() != 2 || f.cols() != config.d_model) {
    throw ContractError("predict: features " + shape_to_string(f.shape()) + " do not have width " +
                        std::to_string(config.d_model));
  }
  const std::size_t n = f.rows();
  if (key_gate.valid()) {
    const Tensor& gv = key_gate.value();
    if (gv.size() != n) {
      throw ContractError("predict: gate length " + std::to_string(gv.size()) + " != " + std::to_string(n) +
                          " people");
    }
    if (!(gv[0] > 0.0)) throw ContractError("predict: the primary person cannot be masked");
  }
  ad::Graph& g = p.graph();
  ad::Var marker = p("social.primary");
  if (n > 1) marker = ad::concat_rows({marker, g.constant(Tensor({n - 1, config.d_model}, 0.0))});
  ad::Var x = ad::add(features, marker);
  for (std::size_t l = 0; l < config.n_social_layers; ++l)
    x = encoder_layer(p, "social.layer" + std::to_string(l), x, n, config.n_heads, key_gate);
  x = layer_norm(p, "social.ln_f", x);

  ad::Var primary = ad::slice_rows(x, 0, 1);
  ad::Var hidden = ad::relu(linear(p, "decoder.hidden", primary));
  ad::Var steps = ad::reshape(linear(p, "decoder.out", hidden), {config.horizon(), 2});
  return ad::cumsum_rows(steps);
}

Tensor predict(const Tensor& features, std::span<const std::uint8_t> mask, const PredictorModel& model) {
  if (mask.size() != features.rows()) {
    throw ContractError("predict: mask length " + std::to_string(mask.size()) + " != " +
                        std::to_string(features.rows()) + " people");
  }
  if (mask.empty() || mask[0] == 0) throw ContractError("predict: mask[0] must be 1 (primary is never dropped)");
  ad::Graph g;
  Binding p(g, model.params, false);
  ad::Var gate;
  if (std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m == 0; })) {
    Tensor gv({mask.size()}, 0.0);
    for (std::size_t i = 0; i < mask.size(); ++i) gv[i] = mask[i] ? 1.0 : 0.0;
    gate = g.constant(std::move(gv));
  }
  return predict(p, g.constant(features), gate, model.config).value();
}

Tensor select_rows(const Tensor& features, std::span<const std::uint8_t> mask) {
  if (mask.size() != features.rows()) throw ContractError("select_rows: mask length mismatch");
  const std::size_t cols = features.cols();
  std::vector<double> out;
  std::size_t rows = 0;
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (!mask[r]) continue;
    ++rows;
    out.insert(out.end(), features.data().begin() + static_cast<std::ptrdiff_t>(r * cols),
               features.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  }
  if (rows == 0) throw ContractError("select_rows: nothing selected");
  return Tensor({rows, cols}, std::move(out));
}

std::vector<data::Point> forecast(const data::Scene& scene, const PredictorModel& model) {
  auto [norm, tf] = data::normalize_scene(scene, model.config.window(scene.frame_rate));
  Tensor features = extract_individual_features(norm, model);
  std::vector<std::uint8_t> all(features.rows(), 1);
  Tensor out = predict(features, all, model);
  std::vector<data::Point> pts;
  for (std::size_t t = 0; t < out.rows(); ++t) pts.push_back(tf.to_original({out.at(t, 0), out.at(t, 1)}));
  return pts;
}

Tensor primary_future(const data::Scene& scene, const PredictorConfig& config) {
  const auto& pos = scene.primary().positions;
  if (pos.size() != config.t_pred) throw ContractError("primary_future: track length mismatch");
  Tensor out({config.horizon(), 2}, 0.0);
  for (std::size_t t = 0; t < config.horizon(); ++t) {
    out.at(t, 0) = pos[config.t_obs + t].x;
    out.at(t, 1) = pos[config.t_obs + t].y;
  }
  return out;
}

}  // namespace trajsel::model
