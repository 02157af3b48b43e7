#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajsel/data/scene.hpp"
#include "trajsel/rng.hpp"

namespace trajsel::data {

/// Social-force style dynamics used by the synthetic generator.
struct Dynamics {
  double repulsion_gain = 3.0;    // m/s^2 per meter of overlap
  double repulsion_radius = 2.0;  // meters
  double relaxation_time = 0.5;   // seconds to recover the desired velocity
  double noise_sigma = 0.05;      // velocity noise, m/s per sqrt(s)
  std::size_t substeps = 4;       // integration steps per frame
};

struct AgentState {
  Point position;
  Point velocity;
  Point desired_velocity;
};

/// Integrates goal-directed velocity relaxation plus pairwise repulsion
///   f_ij = k (r - d_ij) unit(x_i - x_j)  for d_ij < r
/// plus Gaussian velocity noise. Returns `frames` positions per agent
/// (the first is the initial position).
std::vector<std::vector<Point>> simulate(const std::vector<AgentState>& initial, const Dynamics& dynamics,
                                         std::size_t frames, double frame_rate, Rng& rng);

struct SyntheticConfig {
  std::size_t scene_count = 200;
  std::size_t min_people = 2;
  std::size_t max_people = 12;
  double arena_size = 40.0;  // side of the square the primary starts in
  double min_speed = 0.8;
  double max_speed = 1.6;
  Dynamics dynamics;
  /// Probability that a neighbor is a distractor kept beyond 2r of the primary.
  double far_fraction = 0.5;
  /// Far neighbors start between these multiples of the repulsion radius.
  double far_min_radii = 4.0;
  double far_max_radii = 8.0;
  WindowConfig window;
  std::string id_prefix = "syn";

  void validate() const;
};

/// Deterministic in (config, seed). Near neighbors are routed to pass close
/// to the primary during the window; far neighbors start between
/// far_min_radii and far_max_radii repulsion radii away, drift roughly
/// parallel, and never come within 2r of the primary.
/// Coordinates are quantized to 1e-6 m so they survive the text format.
std::vector<Scene> generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

/// Smallest distance between two tracks over all shared steps.
double min_distance(const std::vector<Point>& a, const std::vector<Point>& b);

}  // namespace trajsel::data
