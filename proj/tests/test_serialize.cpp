#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dvislam/errors.hpp"
#include "dvislam/serialize.hpp"
#include "test_util.hpp"

using namespace dvislam;
using namespace dvislam::testing;

TEST_CASE("Serialize.PoseRoundTripIsExact") {
  Rng rng(111);
  const Pose T = random_pose(rng);
  const Pose back = pose_from_json(Json::parse(pose_to_json(T).dump()));
  CHECK_EQ(back.matrix(), T.matrix());
}

TEST_CASE("Serialize.ScenarioRoundTrip") {
  SimConfig c;
  c.horizon = 20;
  c.n_objects = 40;
  c.n_robots = 2;
  const Scenario s = generate_scenario(c);
  const Scenario back = scenario_from_json(Json::parse(scenario_to_json(s).dump()));
  REQUIRE_EQ(back.robots(), s.robots());
  REQUIRE_EQ(back.horizon(), s.horizon());
  REQUIRE_EQ(back.landmarks.size(), s.landmarks.size());
  for (std::size_t k = 0; k < s.landmarks.size(); ++k) {
    CHECK_EQ(back.landmarks[k].position, s.landmarks[k].position);
    CHECK_EQ(back.landmarks[k].kind, s.landmarks[k].kind);
    CHECK_EQ(back.landmarks[k].owner, s.landmarks[k].owner);
  }
  for (std::size_t i = 0; i < s.robots(); ++i) {
    for (std::size_t t = 0; t < s.horizon(); ++t) {
      CHECK_EQ(back.ground_truth[i][t].matrix(), s.ground_truth[i][t].matrix());
      CHECK_EQ(back.steps[i][t].odometry.matrix(), s.steps[i][t].odometry.matrix());
      REQUIRE_EQ(back.steps[i][t].geometric.size(), s.steps[i][t].geometric.size());
      REQUIRE_EQ(back.steps[i][t].objects.size(), s.steps[i][t].objects.size());
      for (std::size_t k = 0; k < s.steps[i][t].objects.size(); ++k) {
        CHECK_EQ(back.steps[i][t].objects[k].pixel, s.steps[i][t].objects[k].pixel);
      }
    }
  }
  CHECK_EQ(sim_config_to_json(back.config), sim_config_to_json(s.config));
}

TEST_CASE("Serialize.NodeSnapshotRoundTrip") {
  Rng rng(112);
  NodeState n = NodeState::initial(random_pose(rng), 4, Matrix6d::Identity() * 0.01);
  n.landmark_ids = {3, 8};
  n.landmarks = {random_vector(rng, 3), random_vector(rng, 3)};
  n.cov = random_spd(rng, n.dim());
  const NodeState back = node_from_snapshot(Json::parse(node_snapshot(n).dump()));
  CHECK_EQ(back.landmark_ids, n.landmark_ids);
  CHECK_EQ(back.stamps, n.stamps);
  CHECK_EQ(back.poses[0].matrix(), n.poses[0].matrix());
  CHECK_EQ(back.cov, n.cov);
}

TEST_CASE("Serialize.LineLookup") {
  const std::string text = "{\n  \"a\": 1,\n  \"b\": {\n    \"c\": 2\n  }\n}\n";
  CHECK_EQ(line_of_key(text, "c"), 4);
  CHECK_EQ(line_of_key(text, "zz"), 0);
  CHECK_EQ(line_of_offset(text, 0), 1);
  CHECK_EQ(line_of_offset(text, text.find("\"b\"")), 3);
}

TEST_CASE("Serialize.ScenarioRejectsWrongFormat") {
  CHECK_THROWS(scenario_from_json(Json{{"format", "something-else"}}));
}
