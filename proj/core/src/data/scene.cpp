#include "trajsel/data/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace trajsel::data {

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

void WindowConfig::validate() const {
  if (t_obs == 0 || t_obs >= t_pred) {
    throw ConfigError("window: need 0 < t_obs < t_pred, got t_obs=" + std::to_string(t_obs) +
                      " t_pred=" + std::to_string(t_pred));
  }
  if (!(frame_rate > 0.0)) throw ConfigError("window: frame_rate must be positive");
}

void Scene::validate(const WindowConfig& window) const {
  if (tracks.empty()) throw ConfigError("scene " + scene_id + ": no tracks");
  if (primary_index != 0) throw ConfigError("scene " + scene_id + ": primary must be index 0");
  if (!(frame_rate > 0.0)) throw ConfigError("scene " + scene_id + ": frame_rate must be positive");
  for (const auto& t : tracks) {
    if (t.positions.size() != window.t_pred) {
      throw ConfigError("scene " + scene_id + ": track " + std::to_string(t.person_id) + " has " +
                        std::to_string(t.positions.size()) + " steps, expected " +
                        std::to_string(window.t_pred));
    }
    for (const auto& p : t.positions) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw ConfigError("scene " + scene_id + ": non-finite coordinate");
      }
    }
  }
}

namespace {

double read_number(const nlohmann::json& j, std::size_t line, const char* what) {
  if (!j.is_number()) throw ParseError(line, std::string(what) + " is not numeric: " + j.dump());
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(line, std::string(what) + " is not finite");
  return v;
}

}  // namespace

LoadResult parse_scenes(std::istream& in, const WindowConfig& window) {
  window.validate();
  LoadResult result;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_array() || record.size() != 3) {
      throw ParseError(line_no, "expected [scene_id, frame_rate, tracks]");
    }
    Scene scene;
    if (!record[0].is_string()) throw ParseError(line_no, "scene_id must be a string");
    scene.scene_id = record[0].get<std::string>();
    scene.frame_rate = read_number(record[1], line_no, "frame_rate");
    if (!(scene.frame_rate > 0.0)) throw ParseError(line_no, "frame_rate must be positive");
    if (!record[2].is_array()) throw ParseError(line_no, "tracks must be an array");

    bool primary_ok = true;
    std::size_t dropped_here = 0;
    int person_id = 0;
    for (const auto& jt : record[2]) {
      ++person_id;
      if (!jt.is_array()) throw ParseError(line_no, "track " + std::to_string(person_id) + " is not an array");
      if (jt.size() > window.t_pred) {
        throw ParseError(line_no, "track " + std::to_string(person_id) + " has " + std::to_string(jt.size()) +
                                      " points, more than t_pred=" + std::to_string(window.t_pred));
      }
      PersonTrack track{person_id, {}};
      for (const auto& jp : jt) {
        if (!jp.is_array() || jp.size() != 2) throw ParseError(line_no, "point must be [x, y]");
        track.positions.push_back({read_number(jp[0], line_no, "x"), read_number(jp[1], line_no, "y")});
      }
      if (track.positions.size() < window.t_pred) {
        ++dropped_here;
        if (person_id == 1) primary_ok = false;
        continue;
      }
      scene.tracks.push_back(std::move(track));
    }
    result.dropped_tracks += dropped_here;
    if (!primary_ok || scene.tracks.empty()) {
      ++result.dropped_scenes;
      continue;
    }
    result.scenes.push_back(std::move(scene));
  }
  if (result.dropped_tracks > 0) {
    spdlog::warn("dropped {} short track(s) and {} scene(s) without a full primary window",
                 result.dropped_tracks, result.dropped_scenes);
  }
  if (result.scenes.empty()) throw EmptyInputError("no valid scenes in input");
  std::stable_sort(result.scenes.begin(), result.scenes.end(),
                   [](const Scene& a, const Scene& b) { return a.scene_id < b.scene_id; });
  return result;
}

LoadResult load_scenes(const std::filesystem::path& path, const WindowConfig& window) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file " + path.string());
  return parse_scenes(in, window);
}

std::string format_scene_line(const Scene& scene) {
  std::string out = "[" + nlohmann::json(scene.scene_id).dump() + ",";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", scene.frame_rate);
  out += buf;
  out += ",[";
  for (std::size_t t = 0; t < scene.tracks.size(); ++t) {
    if (t) out += ',';
    out += '[';
    const auto& pos = scene.tracks[t].positions;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s[%.6f,%.6f]", i ? "," : "", pos[i].x, pos[i].y);
      out += buf;
    }
    out += ']';
  }
  out += "]]";
  return out;
}

void write_scenes(std::ostream& out, const std::vector<Scene>& scenes) {
  for (const auto& s : scenes) out << format_scene_line(s) << '\n';
}

void save_scenes(const std::filesystem::path& path, const std::vector<Scene>& scenes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write scene file " + path.string());
  write_scenes(out, scenes);
}

std::pair<Scene, SceneTransform> normalize_scene(const Scene& scene, const WindowConfig& window) {
  const Point origin = scene.primary().positions.at(window.t_obs - 1);
  SceneTransform tf{origin};
  Scene out = scene;
  for (auto& t : out.tracks)
    for (auto& p : t.positions) p = tf.to_normalized(p);
  return {std::move(out), tf};
}

Scene denormalize_scene(const Scene& scene, const SceneTransform& transform) {
  Scene out = scene;
  for (auto& t : out.tracks)
    for (auto& p : t.positions) p = transform.to_original(p);
  return out;
}

Scene rotate_scene(const Scene& scene, double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  Scene out = scene;
  for (auto& t : out.tracks)
    for (auto& p : t.positions) p = {c * p.x - s * p.y, s * p.x + c * p.y};
  return out;
}

Scene select_tracks(const Scene& scene, const std::vector<std::uint8_t>& keep) {
  if (keep.size() != scene.tracks.size()) {
    throw std::invalid_argument("select_tracks: mask length " + std::to_string(keep.size()) +
                                " != " + std::to_string(scene.tracks.size()) + " tracks");
  }
  Scene out;
  out.scene_id = scene.scene_id;
  out.frame_rate = scene.frame_rate;
  out.tracks.push_back(scene.tracks.front());
  for (std::size_t i = 1; i < keep.size(); ++i)
    if (keep[i]) out.tracks.push_back(scene.tracks[i]);
  return out;
}

}  // namespace trajsel::data
