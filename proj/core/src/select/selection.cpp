#include "trajsel/select/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

namespace trajsel::select {

void GumbelConfig::validate() const {
  if (!(temperature > 0.0)) throw ContractError("gumbel config: temperature must be > 0");
  if (!(anneal > 0.0)) throw ContractError("gumbel config: anneal factor must be > 0");
  // 0 keeps everyone and anything above 1 keeps only the primary.
  if (!(threshold >= 0.0 && std::isfinite(threshold))) throw ContractError("gumbel config: threshold must be >= 0");
}

double GumbelConfig::temperature_at(std::size_t epoch) const {
  return temperature * std::pow(anneal, static_cast<double>(epoch));
}

std::size_t SelectionMask::kept() const {
  return static_cast<std::size_t>(std::count(hard.begin(), hard.end(), std::uint8_t{1}));
}

namespace {

double logistic_noise(Rng& rng) { return rng.gumbel() - rng.gumbel(); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_temperature(double t) {
  if (!(t > 0.0)) throw ContractError("gumbel sample: temperature must be > 0");
}

std::size_t count_clamped(std::span<const double> scores) {
  std::size_t n = 0;
  for (double s : scores)
    if (s < kScoreClamp || s > 1.0 - kScoreClamp) ++n;
  if (n > 0) spdlog::debug("gumbel sample: clamped {} score(s) away from 0/1", n);
  return n;
}

}  // namespace

SelectionMask gumbel_sample(std::span<const double> scores, double temperature, Rng& rng) {
  check_temperature(temperature);
  SelectionMask m;
  m.mode = Mode::Training;
  m.hard.push_back(1);
  m.soft.push_back(1.0);
  m.clamped = count_clamped(scores);
  for (double s : scores) {
    const double c = std::clamp(s, kScoreClamp, 1.0 - kScoreClamp);
    const double l = std::log(c) - std::log1p(-c);
    const double soft = sigmoid((l + logistic_noise(rng)) / temperature);
    m.soft.push_back(soft);
    m.hard.push_back(soft > 0.5 ? 1 : 0);
  }
  return m;
}

GumbelGate gumbel_gate(ad::Var scores, double temperature, Rng& rng) {
  check_temperature(temperature);
  if (!scores.valid()) throw ContractError("gumbel gate: no neighbor scores");
  ad::Graph& g = *scores.graph();
  const std::size_t m = scores.value().size();
  Tensor noise({m}, 0.0);
  for (std::size_t i = 0; i < m; ++i) noise[i] = logistic_noise(rng);
  const ad::Var flat = ad::reshape(scores, {m});
  ad::Var soft = ad::sigmoid(ad::scale(ad::add(ad::logit(flat, kScoreClamp), g.constant(noise)), 1.0 / temperature));

  GumbelGate out;
  out.mask.mode = Mode::Training;
  out.mask.clamped = count_clamped(scores.value().data());
  out.mask.hard.push_back(1);
  out.mask.soft.push_back(1.0);
  Tensor hard({m}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double s = soft.value()[i];
    hard[i] = s > 0.5 ? 1.0 : 0.0;
    out.mask.soft.push_back(s);
    out.mask.hard.push_back(s > 0.5 ? 1 : 0);
  }
  ad::Var st = ad::reshape(ad::straight_through(hard, soft), {1, m});
  out.gate = ad::reshape(ad::concat_cols({g.constant(Tensor({1, 1}, 1.0)), st}), {m + 1});
  return out;
}

SelectionMask threshold_select(std::span<const double> scores, const GumbelConfig& config) {
  SelectionMask m;
  m.mode = Mode::Inference;
  m.hard.push_back(1);
  m.soft.push_back(1.0);
  std::size_t passed = 0;
  for (double s : scores) {
    const bool keep = s >= config.threshold;
    passed += keep;
    m.hard.push_back(keep ? 1 : 0);
    m.soft.push_back(s);
  }
  const std::size_t floor = std::min(config.min_keep, scores.size());
  if (passed < floor) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    for (std::size_t i = 0; i < floor; ++i) m.hard[order[i] + 1] = 1;
  }
  return m;
}

}  // namespace trajsel::select
