#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trajsel/autodiff/ops.hpp"
#include "trajsel/rng.hpp"

namespace trajsel::select {

struct GumbelConfig {
  double temperature = 1.0;
  /// Multiplicative temperature factor applied once per epoch (1 = off).
  double anneal = 1.0;
  double threshold = 0.5;
  /// If fewer neighbors pass the threshold, keep the top `min_keep` by score (0 = off).
  std::size_t min_keep = 0;

  void validate() const;
  double temperature_at(std::size_t epoch) const;

  friend bool operator==(const GumbelConfig&, const GumbelConfig&) = default;
};

inline constexpr double kScoreClamp = 1e-6;

enum class Mode { Training, Inference };

/// Keep/drop decisions over all N people; slot 0 is the primary and always kept.
struct SelectionMask {
  std::vector<std::uint8_t> hard;
  std::vector<double> soft;
  Mode mode = Mode::Inference;
  std::size_t clamped = 0;

  std::size_t size() const { return hard.size(); }
  std::size_t kept() const;
  std::size_t kept_neighbors() const { return kept() - 1; }
};

/// Binary-concrete sample per neighbor: soft = sigmoid((logit(s) + g) / t)
/// with logistic noise g, hard = soft > 0.5. P(hard = 1) = s for any t.
SelectionMask gumbel_sample(std::span<const double> scores, double temperature, Rng& rng);

struct GumbelGate {
  /// (N) gate for the predictor: 1 for the primary, straight-through hard
  /// values for neighbors, whose gradient flows into the soft sample.
  ad::Var gate;
  SelectionMask mask;
};

/// Graph version of gumbel_sample over a (N-1) score Var. Draws the same
/// noise sequence as gumbel_sample for the same generator state.
GumbelGate gumbel_gate(ad::Var scores, double temperature, Rng& rng);

/// hard = score >= threshold, plus the optional top-k floor.
SelectionMask threshold_select(std::span<const double> scores, const GumbelConfig& config);

}  // namespace trajsel::select
