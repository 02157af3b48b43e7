#include <gtest/gtest.h>

#include <tuple>

#include "trajsel/data/synthetic.hpp"
#include "trajsel/model/flops.hpp"

using namespace trajsel;
using namespace trajsel::model;

namespace {

data::Scene scene_with(std::size_t n) {
  data::SyntheticConfig c;
  c.scene_count = 1;
  c.min_people = n;
  c.max_people = n;
  return data::generate_synthetic(c, 11)[0];
}

struct Measured {
  std::uint64_t predictor = 0;
  std::uint64_t estimator = 0;
};

// Counts every floating-point operation the tape executes in a forward pass.
Measured measure(const PredictorConfig& pc, const EstimatorConfig& ec, std::size_t n) {
  const auto pm = PredictorModel::initialize(pc, 3);
  const auto em = EstimatorModel::initialize(ec, 4);
  const auto [norm, tf] = data::normalize_scene(scene_with(n), pc.window());
  const Tensor inputs = build_person_inputs(norm, pc);
  Measured out;
  ad::Graph g;
  Binding p(g, pm.params, false);
  ad::Var features;
  {
    ad::FlopTally tally;
    features = extract_individual_features(p, g.constant(inputs), pc);
    predict(p, features, {}, pc);
    out.predictor = tally.count();
  }
  {
    ad::FlopTally tally;
    Binding pe(g, em.params, false);
    estimate_scores(pe, features, ec);
    out.estimator = tally.count();
  }
  return out;
}

double rel(std::uint64_t a, std::uint64_t b) {
  return std::abs(static_cast<double>(a) - static_cast<double>(b)) / static_cast<double>(b);
}

}  // namespace

TEST(Flops, LinearLayerCount) {
  EXPECT_EQ(linear_flops(10, 64, 64), 81920u);
  EXPECT_EQ(linear_flops(0, 64, 64), 0u);
}

TEST(Flops, PartsSumToTotal) {
  const auto r = predictor_flops(PredictorConfig{}, 8);
  EXPECT_EQ(r.total, r.temporal_encoder + r.social_encoder + r.decoder);
  EXPECT_EQ(r.estimator, 0u);
  EXPECT_EQ(r.n_in, 8u);
}

TEST(Flops, StrictlyIncreasingInPeople) {
  const PredictorConfig pc;
  const EstimatorConfig ec;
  for (std::size_t n = 1; n < 40; ++n) {
    EXPECT_LT(predictor_flops(pc, n).total, predictor_flops(pc, n + 1).total);
    EXPECT_LE(estimator_flops(ec, n), estimator_flops(ec, n + 1));
  }
  EXPECT_EQ(estimator_flops(ec, 1), 0u);
  EXPECT_EQ(predictor_flops(pc, 8).total, predictor_flops(pc, 8).total);
}

TEST(Flops, EstimatorMarginalCostBelowPredictor) {
  const PredictorConfig pc;
  const EstimatorConfig ec;
  for (std::size_t n = 4; n < 40; ++n) {
    const auto dp = predictor_flops(pc, n + 1).total - predictor_flops(pc, n).total;
    const auto de = estimator_flops(ec, n + 1) - estimator_flops(ec, n);
    EXPECT_LT(de, dp);
  }
}

TEST(Flops, PipelineExamples) {
  const PredictorConfig pc;
  const EstimatorConfig ec;
  const auto off = pipeline_flops(pc, ec, 20, 20, false);
  EXPECT_EQ(off.estimator, 0u);
  EXPECT_DOUBLE_EQ(off.ratio, 1.0);
  EXPECT_GT(pipeline_flops(pc, ec, 20, 20, true).ratio, 1.0);
  EXPECT_LT(pipeline_flops(pc, ec, 20, 5, true).ratio, 1.0);
  for (std::size_t k = 1; k < 20; ++k)
    EXPECT_LE(pipeline_flops(pc, ec, 20, k, true).ratio, pipeline_flops(pc, ec, 20, k + 1, true).ratio);
  const auto r = pipeline_flops(pc, ec, 12, 4, true);
  EXPECT_EQ(r.total, r.estimator + predictor_flops(pc, 4).total);
  EXPECT_THROW(pipeline_flops(pc, ec, 5, 6, true), ContractError);
  EXPECT_THROW(pipeline_flops(pc, ec, 5, 0, true), ContractError);
}

class FlopsOracle : public ::testing::TestWithParam<std::tuple<std::size_t, std::size_t, bool>> {};

TEST_P(FlopsOracle, AnalyticMatchesInstrumentedCount) {
  const auto [layers, n, full] = GetParam();
  PredictorConfig pc;
  pc.n_temporal_layers = layers;
  pc.n_social_layers = layers;
  EstimatorConfig ec;
  ec.n_layers = layers;
  ec.full_self_attention = full;
  const auto measured = measure(pc, ec, n);
  EXPECT_LE(rel(predictor_flops(pc, n).total, measured.predictor), 0.02);
  if (n > 1) EXPECT_LE(rel(estimator_flops(ec, n), measured.estimator), 0.02);
}

INSTANTIATE_TEST_SUITE_P(Configs, FlopsOracle,
                         ::testing::Values(std::make_tuple(std::size_t{2}, std::size_t{8}, false),
                                           std::make_tuple(std::size_t{1}, std::size_t{5}, true),
                                           std::make_tuple(std::size_t{2}, std::size_t{2}, false),
                                           std::make_tuple(std::size_t{1}, std::size_t{1}, false)));
