#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "trajsel/data/scene.hpp"
#include "trajsel/data/synthetic.hpp"

using namespace trajsel;
using namespace trajsel::data;

namespace {

std::string track_json(std::size_t points, double x0, double y0, double dx = 0.5) {
  std::string s = "[";
  for (std::size_t i = 0; i < points; ++i) {
    if (i) s += ",";
    s += "[" + std::to_string(x0 + dx * static_cast<double>(i)) + "," + std::to_string(y0) + "]";
  }
  return s + "]";
}

LoadResult parse(const std::string& text, WindowConfig w = {}) {
  std::istringstream in(text);
  return parse_scenes(in, w);
}

}  // namespace

TEST(SceneLoad, TwoTracksGiveOneScene) {
  const auto r = parse("[\"a\", 2.5, [" + track_json(21, 0, 0) + "," + track_json(21, 1, 1) + "]]\n");
  ASSERT_EQ(r.scenes.size(), 1u);
  EXPECT_EQ(r.scenes[0].size(), 2u);
  EXPECT_EQ(r.scenes[0].primary_index, 0u);
  EXPECT_EQ(r.scenes[0].tracks[0].person_id, 1);
  EXPECT_EQ(r.scenes[0].tracks[1].person_id, 2);
  EXPECT_EQ(r.dropped_tracks, 0u);
}

TEST(SceneLoad, ShortTrackIsDroppedAndCounted) {
  const auto r = parse("[\"a\", 2.5, [" + track_json(21, 0, 0) + "," + track_json(20, 1, 1) + "]]\n");
  ASSERT_EQ(r.scenes.size(), 1u);
  EXPECT_EQ(r.scenes[0].size(), 1u);
  EXPECT_EQ(r.dropped_tracks, 1u);
}

TEST(SceneLoad, ShortPrimaryDropsScene) {
  const auto r = parse("[\"a\", 2.5, [" + track_json(20, 0, 0) + "]]\n[\"b\", 2.5, [" + track_json(21, 0, 0) + "]]\n");
  ASSERT_EQ(r.scenes.size(), 1u);
  EXPECT_EQ(r.scenes[0].scene_id, "b");
  EXPECT_EQ(r.dropped_scenes, 1u);
}

TEST(SceneLoad, NonNumericCoordinateCitesLine) {
  std::string bad = track_json(21, 0, 0);
  bad.replace(bad.find("0.000000"), 8, "\"oops\"");
  const std::string text = "[\"a\", 2.5, [" + track_json(21, 0, 0) + "]]\n[\"b\", 2.5, [" + bad + "]]\n";
  try {
    parse(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(SceneLoad, MalformedJsonIsParseError) {
  EXPECT_THROW(parse("[\"a\", 2.5, [[1,2]\n"), ParseError);
  EXPECT_THROW(parse("{\"a\": 1}\n"), ParseError);
}

TEST(SceneLoad, NoValidSceneIsEmptyInput) {
  EXPECT_THROW(parse(""), EmptyInputError);
  EXPECT_THROW(parse("[\"a\", 2.5, [" + track_json(5, 0, 0) + "]]\n"), EmptyInputError);
}

TEST(SceneLoad, ScenesAreSortedById) {
  const auto r = parse("[\"z\", 2.5, [" + track_json(21, 0, 0) + "]]\n[\"m\", 2.5, [" + track_json(21, 0, 0) + "]]\n");
  ASSERT_EQ(r.scenes.size(), 2u);
  EXPECT_EQ(r.scenes[0].scene_id, "m");
  EXPECT_EQ(r.scenes[1].scene_id, "z");
}

TEST(SceneLoad, SaveLoadRoundTripIsExact) {
  SyntheticConfig cfg;
  cfg.scene_count = 25;
  const auto scenes = generate_synthetic(cfg, 11);
  std::stringstream buf;
  write_scenes(buf, scenes);
  const auto back = parse_scenes(buf, cfg.window).scenes;
  ASSERT_EQ(back.size(), scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) EXPECT_EQ(back[i], scenes[i]) << scenes[i].scene_id;

  std::stringstream again;
  write_scenes(again, back);
  EXPECT_EQ(again.str(), buf.str());
}

TEST(Normalize, PrimaryLastObservedBecomesOrigin) {
  Scene s{"s", {{1, std::vector<Point>(21, Point{0, 0})}, {2, std::vector<Point>(21, Point{5, 5})}}, 0, 2.5};
  s.tracks[0].positions[8] = {3, 4};
  auto [n, tf] = normalize_scene(s, {});
  EXPECT_EQ(n.tracks[0].positions[8], (Point{0, 0}));
  EXPECT_EQ(n.tracks[1].positions[0], (Point{2, 1}));
  EXPECT_EQ(n.tracks[0].positions[0], (Point{-3, -4}));
  EXPECT_EQ(tf.origin, (Point{3, 4}));
}

TEST(Normalize, InverseRecoversInput) {
  SyntheticConfig cfg;
  cfg.scene_count = 20;
  for (const auto& s : generate_synthetic(cfg, 3)) {
    auto [n, tf] = normalize_scene(s, cfg.window);
    const Scene back = denormalize_scene(n, tf);
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t t = 0; t < s.tracks[i].positions.size(); ++t) {
        EXPECT_NEAR(back.tracks[i].positions[t].x, s.tracks[i].positions[t].x, 1e-12);
        EXPECT_NEAR(back.tracks[i].positions[t].y, s.tracks[i].positions[t].y, 1e-12);
      }
    }
  }
}

TEST(SceneOps, RotationPreservesDistances) {
  SyntheticConfig cfg;
  cfg.scene_count = 1;
  cfg.min_people = cfg.max_people = 4;
  const Scene s = generate_synthetic(cfg, 5)[0];
  const Scene r = rotate_scene(s, 1.234);
  for (std::size_t t = 0; t < 21; ++t) {
    const auto& a = s.tracks[0].positions[t];
    const auto& b = s.tracks[2].positions[t];
    const auto& ra = r.tracks[0].positions[t];
    const auto& rb = r.tracks[2].positions[t];
    EXPECT_NEAR(std::hypot(a.x - b.x, a.y - b.y), std::hypot(ra.x - rb.x, ra.y - rb.y), 1e-9);
  }
}

TEST(SceneOps, SelectTracksKeepsPrimaryAndIds) {
  SyntheticConfig cfg;
  cfg.scene_count = 1;
  cfg.min_people = cfg.max_people = 5;
  const Scene s = generate_synthetic(cfg, 5)[0];
  const Scene k = select_tracks(s, {1, 0, 1, 0, 1});
  ASSERT_EQ(k.size(), 3u);
  EXPECT_EQ(k.tracks[0].person_id, 1);
  EXPECT_EQ(k.tracks[1].person_id, 3);
  EXPECT_EQ(k.tracks[2].person_id, 5);
}

TEST(Synthetic, SameSeedSameScenes) {
  SyntheticConfig cfg;
  cfg.scene_count = 15;
  EXPECT_EQ(generate_synthetic(cfg, 42), generate_synthetic(cfg, 42));
  EXPECT_NE(generate_synthetic(cfg, 42), generate_synthetic(cfg, 43));
}

TEST(Synthetic, NoGainNoNoiseGivesStraightLines) {
  SyntheticConfig cfg;
  cfg.scene_count = 10;
  cfg.dynamics.repulsion_gain = 0.0;
  cfg.dynamics.noise_sigma = 0.0;
  for (const auto& s : generate_synthetic(cfg, 9)) {
    for (const auto& t : s.tracks) {
      const auto& p = t.positions;
      const double vx = p[1].x - p[0].x, vy = p[1].y - p[0].y;
      for (std::size_t i = 1; i < p.size(); ++i) {
        EXPECT_NEAR(p[i].x - p[i - 1].x, vx, 1e-5);  // quantized to 1e-6
        EXPECT_NEAR(p[i].y - p[i - 1].y, vy, 1e-5);
      }
    }
  }
}

TEST(Synthetic, RepulsionKeepsHeadOnAgentsApart) {
  Dynamics with;
  with.noise_sigma = 0.0;
  Dynamics without = with;
  without.repulsion_gain = 0.0;
  const std::vector<AgentState> agents{{{-6, 0.1}, {1, 0}, {1, 0}}, {{6, -0.1}, {-1, 0}, {-1, 0}}};
  Rng r1(1), r2(1);
  const auto a = simulate(agents, with, 21, 2.5, r1);
  const auto b = simulate(agents, without, 21, 2.5, r2);
  EXPECT_GT(min_distance(a[0], a[1]), min_distance(b[0], b[1]));
}

TEST(Synthetic, FarNeighborsStayClearOfPrimary) {
  SyntheticConfig cfg;
  cfg.scene_count = 30;
  cfg.far_fraction = 1.0;
  const double limit = 2.0 * cfg.dynamics.repulsion_radius;
  for (const auto& s : generate_synthetic(cfg, 4))
    for (std::size_t j = 1; j < s.size(); ++j) EXPECT_GT(min_distance(s.tracks[0].positions, s.tracks[j].positions), limit);
}

TEST(Synthetic, PeopleCountStaysInRange) {
  SyntheticConfig cfg;
  cfg.scene_count = 40;
  cfg.min_people = 3;
  cfg.max_people = 7;
  for (const auto& s : generate_synthetic(cfg, 8)) {
    EXPECT_GE(s.size(), 3u);
    EXPECT_LE(s.size(), 7u);
    s.validate(cfg.window);
  }
}

TEST(Synthetic, RejectsEmptyPeopleRange) {
  SyntheticConfig cfg;
  cfg.min_people = 0;
  EXPECT_THROW(generate_synthetic(cfg, 1), ConfigError);
  cfg.min_people = 5;
  cfg.max_people = 4;
  EXPECT_THROW(generate_synthetic(cfg, 1), ConfigError);
}
