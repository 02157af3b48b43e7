#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajsel::data {

/// Malformed scene file content. Carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Input produced no usable scenes.
class EmptyInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Observation window: t_obs observed steps followed by t_pred - t_obs future steps.
struct WindowConfig {
  std::size_t t_obs = 9;
  std::size_t t_pred = 21;
  double frame_rate = 2.5;

  std::size_t horizon() const { return t_pred - t_obs; }
  void validate() const;

  friend bool operator==(const WindowConfig&, const WindowConfig&) = default;
};

struct PersonTrack {
  /// 1-based position of the track in its source record; the primary is 1.
  int person_id = 0;
  std::vector<Point> positions;

  friend bool operator==(const PersonTrack&, const PersonTrack&) = default;
};

/// N people over one window. The primary person is always tracks[0].
struct Scene {
  std::string scene_id;
  std::vector<PersonTrack> tracks;
  std::size_t primary_index = 0;
  double frame_rate = 2.5;

  std::size_t size() const { return tracks.size(); }
  const PersonTrack& primary() const { return tracks.front(); }
  void validate(const WindowConfig& window) const;

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct LoadResult {
  std::vector<Scene> scenes;
  std::size_t dropped_tracks = 0;
  std::size_t dropped_scenes = 0;
};

/// Parses the line-delimited scene format. Each non-empty line is a JSON array
///   ["scene_id", frame_rate, [[[x, y], ...], ...]]
/// whose first track is the primary. Tracks shorter than t_pred are dropped
/// (counted); a scene whose primary is dropped is skipped. Scenes come back
/// sorted by scene_id.
LoadResult parse_scenes(std::istream& in, const WindowConfig& window);
LoadResult load_scenes(const std::filesystem::path& path, const WindowConfig& window);

/// One scene per line, coordinates with exactly 6 fractional digits.
std::string format_scene_line(const Scene& scene);
void write_scenes(std::ostream& out, const std::vector<Scene>& scenes);
void save_scenes(const std::filesystem::path& path, const std::vector<Scene>& scenes);

/// Translation taking normalized coordinates back to the original frame.
struct SceneTransform {
  Point origin;

  Point to_original(Point p) const { return {p.x + origin.x, p.y + origin.y}; }
  Point to_normalized(Point p) const { return {p.x - origin.x, p.y - origin.y}; }
};

/// Translates every position so the primary at step t_obs (last observed) is the origin.
std::pair<Scene, SceneTransform> normalize_scene(const Scene& scene, const WindowConfig& window);
Scene denormalize_scene(const Scene& scene, const SceneTransform& transform);

/// Rotates every track of the scene by `radians` about the coordinate origin.
Scene rotate_scene(const Scene& scene, double radians);

/// Keeps the primary plus the neighbors whose flag is set (flags indexed by track).
Scene select_tracks(const Scene& scene, const std::vector<std::uint8_t>& keep);

}  // namespace trajsel::data
