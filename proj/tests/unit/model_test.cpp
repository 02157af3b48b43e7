#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "trajsel/autodiff/grad_check.hpp"
#include "trajsel/data/synthetic.hpp"
#include "trajsel/model/estimator.hpp"
#include "trajsel/model/layers.hpp"
#include "trajsel/model/predictor.hpp"

using namespace trajsel;
using namespace trajsel::model;

namespace {

using Mask = std::vector<std::uint8_t>;

data::Scene make_scene(std::size_t people, std::uint64_t seed) {
  data::SyntheticConfig cfg;
  cfg.scene_count = 1;
  cfg.min_people = cfg.max_people = people;
  return data::generate_synthetic(cfg, seed)[0];
}

Tensor features_of(const data::Scene& s, const PredictorModel& m) {
  return extract_individual_features(data::normalize_scene(s, m.config.window()).first, m);
}

Tensor random_features(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({rows, cols}, 0.0);
  for (auto& x : t.data()) x = rng.uniform(-2.0, 2.0);
  return t;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tensor out = t;
  for (std::size_t r = 0; r < perm.size(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) out.at(r, c) = t.at(perm[r], c);
  return out;
}

std::vector<std::uint8_t> ones(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

class PredictorTest : public ::testing::Test {
 protected:
  PredictorModel model = PredictorModel::initialize({}, 17);
};

}  // namespace

TEST(PredictorConfigTest, RejectsIndivisibleHeads) {
  PredictorConfig c;
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ContractError);
  c = {};
  c.n_social_layers = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST_F(PredictorTest, InputsAreDisplacementsAndScaledPositions) {
  const auto s = make_scene(3, 1);
  const auto n = data::normalize_scene(s, model.config.window()).first;
  const Tensor in = build_person_inputs(n, model.config);
  ASSERT_EQ(in.shape(), (Shape{27, 4}));
  EXPECT_EQ(in.at(0, 0), 0.0);
  EXPECT_EQ(in.at(0, 1), 0.0);
  const auto& p = n.tracks[1].positions;
  EXPECT_DOUBLE_EQ(in.at(9 + 4, 0), p[4].x - p[3].x);
  EXPECT_DOUBLE_EQ(in.at(9 + 4, 3), p[4].y * model.config.offset_scale);
  EXPECT_EQ(in.at(8, 2), 0.0);  // primary at the last observed step is the origin
}

TEST_F(PredictorTest, WrongObservationLengthIsContractError) {
  ad::Graph g;
  Binding p(g, model.params, false);
  EXPECT_THROW(extract_individual_features(p, g.constant(Tensor({10, 4}, 0.0)), model.config), ContractError);
  auto s = make_scene(2, 1);
  for (auto& t : s.tracks) t.positions.pop_back();
  EXPECT_THROW(build_person_inputs(s, model.config), ContractError);
}

TEST_F(PredictorTest, FeaturesPermuteWithPeople) {
  const auto s = make_scene(5, 2);
  const Tensor f = features_of(s, model);
  ASSERT_EQ(f.shape(), (Shape{5, 64}));
  data::Scene p = s;
  std::swap(p.tracks[1], p.tracks[4]);
  std::swap(p.tracks[2], p.tracks[3]);
  EXPECT_EQ(features_of(p, model), permute_rows(f, {0, 4, 3, 2, 1}));
}

TEST_F(PredictorTest, IdenticalTracksGiveIdenticalFeatures) {
  auto s = make_scene(4, 3);
  s.tracks[3].positions = s.tracks[2].positions;
  const Tensor f = features_of(s, model);
  for (std::size_t c = 0; c < f.cols(); ++c) EXPECT_EQ(f.at(2, c), f.at(3, c));
}

TEST_F(PredictorTest, PerturbingOnePersonChangesOnlyTheirRow) {
  const auto s = make_scene(5, 4);
  const auto n = data::normalize_scene(s, model.config.window()).first;
  const Tensor in = build_person_inputs(n, model.config);
  Tensor zeroed = in;
  for (std::size_t t = 0; t < 9; ++t)
    for (std::size_t c = 0; c < 4; ++c) zeroed.at(2 * 9 + t, c) = 0.0;
  ad::Graph g;
  Binding p(g, model.params, false);
  const Tensor a = extract_individual_features(p, g.constant(in), model.config).value();
  const Tensor b = extract_individual_features(p, g.constant(zeroed), model.config).value();
  for (std::size_t r = 0; r < 5; ++r) {
    bool same = true;
    for (std::size_t c = 0; c < a.cols(); ++c) same = same && a.at(r, c) == b.at(r, c);
    EXPECT_EQ(same, r != 2) << "row " << r;
  }
}

TEST_F(PredictorTest, SinglePersonPrediction) {
  const Tensor f = features_of(make_scene(1, 5), model);
  const Tensor y = predict(f, ones(1), model);
  ASSERT_EQ(y.shape(), (Shape{12, 2}));
  for (double v : y.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST_F(PredictorTest, AllOnesMaskEqualsUngated) {
  const Tensor f = features_of(make_scene(6, 6), model);
  ad::Graph g;
  Binding p(g, model.params, false);
  const Tensor ungated = predict(p, g.constant(f), {}, model.config).value();
  const Tensor gated = predict(p, g.constant(f), g.constant(Tensor({6}, 1.0)), model.config).value();
  EXPECT_EQ(predict(f, ones(6), model), ungated);
  EXPECT_EQ(gated, ungated);
}

TEST_F(PredictorTest, MaskedPredictionEqualsOmission) {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 12));
    const Tensor f = features_of(make_scene(n, 100 + static_cast<std::uint64_t>(trial)), model);
    std::vector<std::uint8_t> mask(n, 1);
    for (std::size_t j = 1; j < n; ++j) mask[j] = rng.uniform() < 0.5;
    const Tensor masked = predict(f, mask, model);
    const Tensor kept = select_rows(f, mask);
    const Tensor omitted = predict(kept, ones(kept.rows()), model);
    EXPECT_LE(max_abs_diff(masked, omitted), 1e-10) << "trial " << trial;
  }
}

TEST_F(PredictorTest, AllNeighborsMaskedEqualsAlone) {
  const Tensor f = features_of(make_scene(4, 7), model);
  const Tensor alone = predict(select_rows(f, Mask{1, 0, 0, 0}), ones(1), model);
  EXPECT_LE(max_abs_diff(predict(f, Mask{1, 0, 0, 0}, model), alone), 1e-10);
}

TEST_F(PredictorTest, MaskingThePrimaryIsContractError) {
  const Tensor f = features_of(make_scene(3, 8), model);
  EXPECT_THROW(predict(f, Mask{0, 1, 1}, model), ContractError);
  EXPECT_THROW(predict(f, Mask{1, 1}, model), ContractError);
}

TEST_F(PredictorTest, NeighborPermutationLeavesPredictionUnchanged) {
  const auto s = make_scene(7, 9);
  data::Scene p = s;
  std::reverse(p.tracks.begin() + 1, p.tracks.end());
  const Tensor a = predict(features_of(s, model), ones(7), model);
  const Tensor b = predict(features_of(p, model), ones(7), model);
  EXPECT_LE(max_abs_diff(a, b), 1e-10);

  const std::vector<std::uint8_t> m{1, 1, 0, 1, 0, 0, 1};
  std::vector<std::uint8_t> rm(m);
  std::reverse(rm.begin() + 1, rm.end());
  EXPECT_LE(max_abs_diff(predict(features_of(s, model), m, model), predict(features_of(p, model), rm, model)), 1e-10);
}

TEST_F(PredictorTest, ForecastIsTranslationCovariant) {
  const auto s = make_scene(5, 10);
  data::Scene shifted = s;
  for (auto& t : shifted.tracks)
    for (auto& q : t.positions) q = {q.x + 12.5, q.y - 7.25};
  const auto a = forecast(s, model);
  const auto b = forecast(shifted, model);
  ASSERT_EQ(a.size(), 12u);
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_NEAR(b[t].x, a[t].x + 12.5, 1e-9);
    EXPECT_NEAR(b[t].y, a[t].y - 7.25, 1e-9);
  }
}

TEST_F(PredictorTest, GateReceivesGradient) {
  const Tensor f = features_of(make_scene(4, 11), model);
  ad::Graph g;
  Binding p(g, model.params, false);
  ad::Var gate = g.leaf(Tensor({4}, 1.0));
  g.backward(ad::sum(predict(p, g.constant(f), gate, model.config)));
  double total = 0.0;
  for (std::size_t j = 1; j < 4; ++j) total += std::abs(gate.grad()[j]);
  EXPECT_GT(total, 0.0);
}

TEST(PredictorGradient, MatchesFiniteDifferences) {
  PredictorConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_temporal_layers = 1;
  c.n_social_layers = 1;
  c.d_ff = 16;
  c.t_obs = 3;
  c.t_pred = 6;
  const PredictorModel m = PredictorModel::initialize(c, 3);
  Rng rng(4);
  Tensor inputs({3 * 3, 4}, 0.0);
  for (auto& x : inputs.data()) x = rng.uniform(-1.0, 1.0);
  Tensor gate({3}, 1.0);
  gate[2] = 0.6;
  const auto report = ad::grad_check(
      {inputs, gate},
      [&](ad::Graph& g, std::span<const ad::Var> leaves) {
        Binding p(g, m.params, false);
        ad::Var f = extract_individual_features(p, leaves[0], c);
        ad::Var y = predict(p, f, leaves[1], c);
        return ad::sum(ad::mul(y, y));
      },
      1e-4);
  EXPECT_TRUE(report.passed) << report.summary();
}

TEST(EstimatorConfigTest, RejectsIndivisibleHeads) {
  EstimatorConfig c;
  c.n_heads = 5;
  EXPECT_THROW(c.validate(), ContractError);
}

class EstimatorTest : public ::testing::TestWithParam<std::pair<std::size_t, bool>> {
 protected:
  EstimatorModel make() const {
    EstimatorConfig c;
    c.n_layers = GetParam().first;
    c.full_self_attention = GetParam().second;
    return EstimatorModel::initialize(c, 21);
  }
};

TEST_P(EstimatorTest, ScoresAreOnePerNeighborInsideUnitInterval) {
  const auto m = make();
  for (std::size_t n : {2u, 5u, 17u}) {
    const auto s = estimate_scores(random_features(n, 64, n), m);
    ASSERT_EQ(s.size(), n - 1);
    for (double v : s) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST_P(EstimatorTest, LonePrimaryHasNoScores) {
  EXPECT_TRUE(estimate_scores(random_features(1, 64, 1), make()).empty());
}

TEST_P(EstimatorTest, ScoresPermuteWithNeighbors) {
  const auto m = make();
  const Tensor f = random_features(8, 64, 5);
  const std::vector<std::size_t> perm{0, 3, 7, 1, 2, 6, 5, 4};
  const auto a = estimate_scores(f, m);
  const auto b = estimate_scores(permute_rows(f, perm), m);
  for (std::size_t j = 1; j < perm.size(); ++j) EXPECT_NEAR(b[j - 1], a[perm[j] - 1], 1e-10);
}

TEST_P(EstimatorTest, DuplicateNeighborsScoreEqually) {
  const auto m = make();
  Tensor f = random_features(6, 64, 6);
  for (std::size_t c = 0; c < 64; ++c) f.at(4, c) = f.at(2, c);
  const auto s = estimate_scores(f, m);
  EXPECT_NEAR(s[1], s[3], 1e-10);
}

TEST_P(EstimatorTest, WidthMismatchIsContractError) {
  EXPECT_THROW(estimate_scores(random_features(4, 32, 1), make()), ContractError);
}

INSTANTIATE_TEST_SUITE_P(Variants, EstimatorTest,
                         ::testing::Values(std::make_pair(std::size_t{1}, false), std::make_pair(std::size_t{2}, false),
                                           std::make_pair(std::size_t{1}, true)));

TEST(EstimatorStructure, ThreeLinearLayersAroundOneBlock) {
  const auto m = EstimatorModel::initialize({}, 1);
  std::size_t linears = 0;
  for (const auto& e : m.params.entries())
    if (e.name.ends_with(".weight") && e.name.find("block") == std::string::npos) ++linears;
  EXPECT_EQ(linears, 3u);
  EXPECT_EQ(m.params.get("input.weight").shape(), (Shape{64, 64}));
  EXPECT_EQ(m.params.get("head.out.weight").shape(), (Shape{64, 1}));
}

TEST(EstimatorStructure, ScoreBiasSetsStartingScore) {
  EstimatorConfig c;
  c.score_bias_init = 3.0;
  const auto m = EstimatorModel::initialize(c, 1);
  EXPECT_EQ(m.params.get("head.out.bias")[0], 3.0);
}

TEST(EstimatorGradient, MatchesFiniteDifferences) {
  for (bool full : {false, true}) {
    EstimatorConfig c;
    c.feature_width = 6;
    c.d_embed = 8;
    c.n_heads = 2;
    c.n_layers = 2;
    c.d_ff = 12;
    c.full_self_attention = full;
    const EstimatorModel m = EstimatorModel::initialize(c, 8);
    const auto report = ad::grad_check(
        {random_features(4, 6, 9)},
        [&](ad::Graph& g, std::span<const ad::Var> leaves) {
          Binding p(g, m.params, false);
          ad::Var s = estimate_scores(p, leaves[0], c);
          return ad::sum(ad::mul(s, s));
        },
        1e-4);
    EXPECT_TRUE(report.passed) << (full ? "full: " : "primary-query: ") << report.summary();
  }
}
