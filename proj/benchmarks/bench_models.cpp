#include <benchmark/benchmark.h>

#include "trajsel/data/synthetic.hpp"
#include "trajsel/exp/training.hpp"
#include "trajsel/model/flops.hpp"
#include "trajsel/model/layers.hpp"
#include "trajsel/select/selection.hpp"

using namespace trajsel;

namespace {

data::Scene scene_with(std::size_t n) {
  data::SyntheticConfig c;
  c.scene_count = 1;
  c.min_people = c.max_people = n;
  return data::generate_synthetic(c, n)[0];
}

Tensor features_for(std::size_t n, const model::PredictorModel& m) {
  const auto ps = exp::prepare_scene(scene_with(n), m.config);
  return model::extract_individual_features(ps.normalized, m);
}

void BM_Attention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  model::ParameterStore store;
  Rng rng(1);
  model::init_encoder_layer(store, "layer", 64, 128, rng);
  Tensor x({n, 64}, 0.0);
  for (auto& v : x.data()) v = rng.normal();
  for (auto _ : state) {
    ad::Graph g;
    model::Binding p(g, store, false);
    benchmark::DoNotOptimize(model::encoder_layer(p, "layer", g.constant(x), n, 4).value().data().data());
  }
}
BENCHMARK(BM_Attention)->Arg(8)->Arg(20)->Arg(40);

void BM_PredictorFull(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = model::PredictorModel::initialize({}, 1);
  const auto ps = exp::prepare_scene(scene_with(n), m.config);
  const std::vector<std::uint8_t> all(n, 1);
  for (auto _ : state) {
    const Tensor f = model::extract_individual_features(ps.normalized, m);
    benchmark::DoNotOptimize(model::predict(f, all, m).data().data());
  }
  state.counters["flops"] = static_cast<double>(model::predictor_flops(m.config, n).total);
}
BENCHMARK(BM_PredictorFull)->Arg(8)->Arg(20)->Arg(40);

void BM_SocialOnKept(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto kept = static_cast<std::size_t>(state.range(1));
  const auto m = model::PredictorModel::initialize({}, 1);
  const Tensor f = features_for(n, m);
  std::vector<std::uint8_t> keep(n, 0);
  for (std::size_t i = 0; i < kept; ++i) keep[i] = 1;
  const Tensor reduced = model::select_rows(f, keep);
  const std::vector<std::uint8_t> all(kept, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model::predict(reduced, all, m).data().data());
}
BENCHMARK(BM_SocialOnKept)->Args({40, 40})->Args({40, 20})->Args({40, 5});

void BM_Estimator(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto tp = model::PredictorModel::initialize({}, 1);
  const auto ie = model::EstimatorModel::initialize({}, 2);
  const Tensor f = features_for(n, tp);
  for (auto _ : state) benchmark::DoNotOptimize(model::estimate_scores(f, ie).data());
  state.counters["flops"] = static_cast<double>(model::estimator_flops(ie.config, n));
}
BENCHMARK(BM_Estimator)->Arg(8)->Arg(20)->Arg(40);

void BM_GumbelSample(benchmark::State& state) {
  std::vector<double> scores(static_cast<std::size_t>(state.range(0)), 0.4);
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(select::gumbel_sample(scores, 1.0, rng).hard.data());
}
BENCHMARK(BM_GumbelSample)->Arg(39);

}  // namespace

BENCHMARK_MAIN();
