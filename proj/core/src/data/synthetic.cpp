#include "trajsel/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

namespace trajsel::data {

std::vector<std::vector<Point>> simulate(const std::vector<AgentState>& initial, const Dynamics& dyn,
                                         std::size_t frames, double frame_rate, Rng& rng) {
  const std::size_t n = initial.size();
  const std::size_t sub = std::max<std::size_t>(dyn.substeps, 1);
  const double dt = 1.0 / (frame_rate * static_cast<double>(sub));
  const double noise_scale = dyn.noise_sigma * std::sqrt(dt);
  std::vector<AgentState> state = initial;
  std::vector<std::vector<Point>> tracks(n);
  for (std::size_t i = 0; i < n; ++i) tracks[i].push_back(state[i].position);

  std::vector<Point> accel(n);
  for (std::size_t f = 1; f < frames; ++f) {
    for (std::size_t s = 0; s < sub; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto& a = state[i];
        Point acc{(a.desired_velocity.x - a.velocity.x) / dyn.relaxation_time,
                  (a.desired_velocity.y - a.velocity.y) / dyn.relaxation_time};
        if (dyn.repulsion_gain != 0.0) {
          for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = a.position.x - state[j].position.x;
            const double dy = a.position.y - state[j].position.y;
            const double d = std::hypot(dx, dy);
            if (d < dyn.repulsion_radius && d > 1e-9) {
              const double mag = dyn.repulsion_gain * (dyn.repulsion_radius - d) / d;
              acc.x += mag * dx;
              acc.y += mag * dy;
            }
          }
        }
        accel[i] = acc;
      }
      for (std::size_t i = 0; i < n; ++i) {
        auto& a = state[i];
        a.velocity.x += dt * accel[i].x;
        a.velocity.y += dt * accel[i].y;
        if (noise_scale > 0.0) {
          a.velocity.x += noise_scale * rng.normal();
          a.velocity.y += noise_scale * rng.normal();
        }
        a.position.x += dt * a.velocity.x;
        a.position.y += dt * a.velocity.y;
      }
    }
    for (std::size_t i = 0; i < n; ++i) tracks[i].push_back(state[i].position);
  }
  return tracks;
}

void SyntheticConfig::validate() const {
  window.validate();
  if (min_people < 1) throw ConfigError("synthetic: people range must start at 1 or more");
  if (max_people < min_people) throw ConfigError("synthetic: max_people < min_people");
  if (!(min_speed > 0.0) || max_speed < min_speed) throw ConfigError("synthetic: invalid speed range");
  if (!(arena_size > 0.0)) throw ConfigError("synthetic: arena_size must be positive");
  if (dynamics.repulsion_gain < 0.0 || !(dynamics.repulsion_radius > 0.0)) {
    throw ConfigError("synthetic: repulsion gain must be >= 0 and radius > 0");
  }
  if (dynamics.noise_sigma < 0.0) throw ConfigError("synthetic: noise sigma must be >= 0");
  if (!(dynamics.relaxation_time > 0.0)) throw ConfigError("synthetic: relaxation time must be positive");
  if (far_fraction < 0.0 || far_fraction > 1.0) throw ConfigError("synthetic: far_fraction outside [0,1]");
  if (far_min_radii <= 2.0 || far_max_radii < far_min_radii) {
    throw ConfigError("synthetic: far placement must start beyond 2 radii");
  }
}

double min_distance(const std::vector<Point>& a, const std::vector<Point>& b) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t t = 0; t < n; ++t) best = std::min(best, std::hypot(a[t].x - b[t].x, a[t].y - b[t].y));
  return best;
}

namespace {

double quantize(double v) { return std::nearbyint(v * 1e6) / 1e6; }

Point polar(double r, double angle) { return {r * std::cos(angle), r * std::sin(angle)}; }

std::string scene_name(const std::string& prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "-%06zu", index);
  return prefix + buf;
}

}  // namespace

std::vector<Scene> generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  constexpr double kPi = std::numbers::pi;
  const auto& win = cfg.window;
  const double dt = 1.0 / win.frame_rate;
  const double r = cfg.dynamics.repulsion_radius;
  std::vector<Scene> scenes;
  scenes.reserve(cfg.scene_count);

  for (std::size_t s = 0; s < cfg.scene_count; ++s) {
    Rng rng(derive_seed(seed, s));
    const auto n = static_cast<std::size_t>(rng.uniform_int(cfg.min_people, cfg.max_people));
    std::vector<std::vector<Point>> tracks;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 500) {
        throw ConfigError("synthetic: could not place far neighbors clear of the primary; "
                          "widen far_min_radii or lower speeds");
      }
      std::vector<AgentState> agents;
      std::vector<bool> far(n, false);
      const double heading = rng.uniform(-kPi, kPi);
      const Point p0{rng.uniform(-cfg.arena_size / 2, cfg.arena_size / 2),
                     rng.uniform(-cfg.arena_size / 2, cfg.arena_size / 2)};
      const Point v0 = polar(rng.uniform(cfg.min_speed, cfg.max_speed), heading);
      agents.push_back({p0, v0, v0});
      for (std::size_t j = 1; j < n; ++j) {
        far[j] = rng.uniform() < cfg.far_fraction;
        const double speed = rng.uniform(cfg.min_speed, cfg.max_speed);
        if (far[j]) {
          const Point off = polar(rng.uniform(cfg.far_min_radii * r, cfg.far_max_radii * r), rng.uniform(-kPi, kPi));
          const Point v = polar(speed, heading + rng.uniform(-kPi / 4, kPi / 4));
          agents.push_back({{p0.x + off.x, p0.y + off.y}, v, v});
        } else {
          // Route the neighbor through a point near the primary's nominal path.
          const auto lo = static_cast<std::int64_t>(win.t_obs) - 2;
          const auto hi = static_cast<std::int64_t>(win.t_obs) + 5;
          const auto meet_frame = std::clamp<std::int64_t>(
              lo + static_cast<std::int64_t>(rng.uniform_int(0, static_cast<std::uint64_t>(hi - lo))), 1,
              static_cast<std::int64_t>(win.t_pred) - 1);
          const double tc = static_cast<double>(meet_frame) * dt;
          const Point jitter = polar(0.5 * r * std::sqrt(rng.uniform()), rng.uniform(-kPi, kPi));
          const Point meet{p0.x + v0.x * tc + jitter.x, p0.y + v0.y * tc + jitter.y};
          const Point v = polar(speed, rng.uniform(-kPi, kPi));
          agents.push_back({{meet.x - v.x * tc, meet.y - v.y * tc}, v, v});
        }
      }
      tracks = simulate(agents, cfg.dynamics, win.t_pred, win.frame_rate, rng);
      bool ok = true;
      for (std::size_t j = 1; j < n && ok; ++j)
        if (far[j] && min_distance(tracks[0], tracks[j]) <= 2.0 * r) ok = false;
      if (ok) break;
    }

    Scene scene;
    scene.scene_id = scene_name(cfg.id_prefix, s);
    scene.frame_rate = win.frame_rate;
    for (std::size_t j = 0; j < n; ++j) {
      PersonTrack t{static_cast<int>(j + 1), {}};
      for (const auto& p : tracks[j]) t.positions.push_back({quantize(p.x), quantize(p.y)});
      scene.tracks.push_back(std::move(t));
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace trajsel::data
