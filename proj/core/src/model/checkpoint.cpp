#include "trajsel/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace trajsel::model {

using nlohmann::json;

void to_json(json& j, const PredictorConfig& c) {
  j = json{{"d_model", c.d_model},
           {"n_heads", c.n_heads},
           {"n_temporal_layers", c.n_temporal_layers},
           {"n_social_layers", c.n_social_layers},
           {"d_ff", c.d_ff},
           {"t_obs", c.t_obs},
           {"t_pred", c.t_pred},
           {"offset_scale", c.offset_scale}};
}

void from_json(const json& j, PredictorConfig& c) {
  const PredictorConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.n_temporal_layers = j.value("n_temporal_layers", d.n_temporal_layers);
  c.n_social_layers = j.value("n_social_layers", d.n_social_layers);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.t_obs = j.value("t_obs", d.t_obs);
  c.t_pred = j.value("t_pred", d.t_pred);
  c.offset_scale = j.value("offset_scale", d.offset_scale);
}

void to_json(json& j, const EstimatorConfig& c) {
  j = json{{"feature_width", c.feature_width},
           {"d_embed", c.d_embed},
           {"n_heads", c.n_heads},
           {"n_layers", c.n_layers},
           {"d_ff", c.d_ff},
           {"full_self_attention", c.full_self_attention},
           {"score_bias_init", c.score_bias_init}};
}

void from_json(const json& j, EstimatorConfig& c) {
  const EstimatorConfig d;
  c.feature_width = j.value("feature_width", d.feature_width);
  c.d_embed = j.value("d_embed", d.d_embed);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.full_self_attention = j.value("full_self_attention", d.full_self_attention);
  c.score_bias_init = j.value("score_bias_init", d.score_bias_init);
}

namespace {

void put_f64(std::string& buf, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  return in;
}

template <class Model, class Config>
Model load_model(const std::string& path, const std::string& kind) {
  auto in = open_in(path);
  RawCheckpoint raw = read_checkpoint(in);
  if (raw.kind != kind) throw CheckpointError(path + ": expected a " + kind + " checkpoint, found " + raw.kind);
  Config config;
  try {
    config = raw.config.get<Config>();
    config.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(path + ": invalid config: " + e.what());
  }
  Model m = Model::initialize(config, 0);
  assign_parameters(m.params, raw.params);
  return m;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::string& kind, const json& config, const ParameterStore& params) {
  json arrays = json::array();
  std::size_t offset = 0;
  std::string data;
  for (const auto& e : params.entries()) {
    arrays.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"offset", offset}, {"count", e.value.size()}});
    offset += e.value.size();
    for (double v : e.value.data()) put_f64(data, v);
  }
  json manifest{{"format_version", kCheckpointVersion},
                {"kind", kind},
                {"config", config},
                {"arrays", arrays},
                {"data_bytes", data.size()}};
  out << kCheckpointMagic << " v" << kCheckpointVersion << '\n' << manifest.dump() << '\n';
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw CheckpointError("checkpoint write failed");
}

RawCheckpoint read_checkpoint(std::istream& in) {
  std::string magic, manifest_line;
  if (!std::getline(in, magic) || magic != std::string(kCheckpointMagic) + " v" + std::to_string(kCheckpointVersion)) {
    throw CheckpointError("not a version " + std::to_string(kCheckpointVersion) + " checkpoint (bad header)");
  }
  if (!std::getline(in, manifest_line)) throw CheckpointError("missing manifest");
  json manifest;
  try {
    manifest = json::parse(manifest_line);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("unreadable manifest: ") + e.what());
  }
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  RawCheckpoint raw;
  try {
    if (manifest.at("format_version").get<int>() != kCheckpointVersion) throw CheckpointError("unsupported version");
    raw.kind = manifest.at("kind").get<std::string>();
    raw.config = manifest.at("config");
    const auto bytes = manifest.at("data_bytes").get<std::size_t>();
    if (bytes != data.size()) {
      throw CheckpointError("data section is " + std::to_string(data.size()) + " bytes, manifest says " +
                            std::to_string(bytes));
    }
    std::size_t expected_offset = 0;
    for (const auto& a : manifest.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto shape = a.at("shape").get<Shape>();
      const auto offset = a.at("offset").get<std::size_t>();
      const auto count = a.at("count").get<std::size_t>();
      if (shape.empty() || shape_numel(shape) != count) {
        throw CheckpointError("array " + name + ": shape " + shape_to_string(shape) + " does not hold " +
                              std::to_string(count) + " values");
      }
      if (offset != expected_offset || (offset + count) * 8 > data.size()) {
        throw CheckpointError("array " + name + ": bad offset");
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) values[i] = get_f64(data.data() + (offset + i) * 8);
      raw.params.add(name, Tensor(shape, std::move(values)));
      expected_offset += count;
    }
    if (expected_offset * 8 != data.size()) throw CheckpointError("trailing bytes after last array");
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  } catch (const ContractError& e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  }
  return raw;
}

void assign_parameters(ParameterStore& target, const ParameterStore& loaded) {
  if (target.size() != loaded.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(loaded.size()) + " arrays, model expects " +
                          std::to_string(target.size()));
  }
  for (auto& e : target.entries()) {
    if (!loaded.contains(e.name)) throw CheckpointError("checkpoint is missing array " + e.name);
    const Tensor& v = loaded.get(e.name);
    if (v.shape() != e.value.shape()) {
      throw CheckpointError("array " + e.name + " has shape " + shape_to_string(v.shape()) + ", model expects " +
                            shape_to_string(e.value.shape()));
    }
    e.value = v;
  }
  if (!target.all_finite()) throw CheckpointError("checkpoint contains non-finite values");
}

void save_predictor(const std::string& path, const PredictorModel& model) {
  auto out = open_out(path);
  write_checkpoint(out, "predictor", json(model.config), model.params);
}

PredictorModel load_predictor(const std::string& path) {
  return load_model<PredictorModel, PredictorConfig>(path, "predictor");
}

void save_estimator(const std::string& path, const EstimatorModel& model) {
  auto out = open_out(path);
  write_checkpoint(out, "estimator", json(model.config), model.params);
}

EstimatorModel load_estimator(const std::string& path) {
  return load_model<EstimatorModel, EstimatorConfig>(path, "estimator");
}

}  // namespace trajsel::model
