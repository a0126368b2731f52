#include <random>

#include <gtest/gtest.h>

#include "bridge_fixtures.hpp"

using namespace dnmpc;
using namespace dnmpc::bridge;

TEST(BridgeWorld, ControlSets) {
  const auto orth = control_set(MoveMode::orthogonal);
  EXPECT_EQ(orth, (std::vector<GridControl>{{-1, 0}, {0, -1}, {0, 0}, {0, 1}, {1, 0}}));
  const auto king = control_set(MoveMode::king);
  EXPECT_EQ(king.size(), 9U);
  EXPECT_TRUE(std::is_sorted(king.begin(), king.end()));
}

TEST(BridgeWorld, BridgeCells) {
  EXPECT_TRUE(bridge_ok({0, 0}));
  EXPECT_FALSE(bridge_ok({0, 1}));
  EXPECT_TRUE(bridge_ok({-1, 1}));
  const std::vector<int> wide{0, 1};
  EXPECT_FALSE(bridge_ok({1, -1}, std::span<const int>(wide)));
  EXPECT_TRUE(bridge_ok({2, -1}, std::span<const int>(wide)));
}

TEST(BridgeWorld, SwapRules) {
  // Head-on exchange is forbidden under both rules.
  EXPECT_FALSE(swap_ok({-1, 0}, {1, 0}, {0, 0}, {-1, 0}));
  EXPECT_FALSE(swap_ok({-1, 0}, {1, 0}, {0, 0}, {-1, 0}, SwapRule::strict));
  // Trailing: a follows b into the cell b just left.
  EXPECT_TRUE(swap_ok({-1, 0}, {1, 0}, {0, 0}, {1, 0}));
  EXPECT_FALSE(swap_ok({-1, 0}, {1, 0}, {0, 0}, {1, 0}, SwapRule::strict));
  EXPECT_TRUE(swap_ok({-1, 0}, {0, 0}, {1, 0}, {0, 0}, SwapRule::strict));
}

TEST(BridgeWorld, StageCost) {
  EXPECT_EQ(bridge_cost({-1, 0}, {2, 0}), Rational(9));
  EXPECT_EQ(bridge_cost({-1, 1}, {2, 0}), Rational(10));
  EXPECT_EQ(bridge_cost({2, 0}, {2, 0}), Rational(0));

  BridgeOptions opts;
  opts.cost_weight = Rational(1, 3);
  const auto m = make_agent({AgentId{1}, {0, 0}, {2, 0}, 3}, opts);
  EXPECT_EQ(m.stage_cost({0, 0}, {1, 0}), Rational(13, 3));
  EXPECT_NO_THROW(m.validate());
}

TEST(BridgeWorld, ScenarioBuilders) {
  const auto sc = build_scenario("bridge_default", {}, 5);
  ASSERT_EQ(sc.agents.size(), 2U);
  EXPECT_EQ(sc.initial_states, (std::vector<GridState>{{1, 0}, {-1, 0}}));
  EXPECT_EQ(sc.model(AgentId{2}).reference, (GridState{2, 0}));
  EXPECT_EQ(sc.model(AgentId{1}).horizon, 5);
  ASSERT_EQ(sc.couplings.size(), 2U);
  EXPECT_EQ(sc.couplings[0].kind, CouplingKind::state);
  EXPECT_EQ(sc.couplings[1].kind, CouplingKind::transition);

  const auto corridor = build_scenario("corridor_deadlock");
  EXPECT_FALSE(corridor.agents[0].local_state_ok({-1, 1}));
  EXPECT_THROW(build_scenario("roundabout"), UnknownScenario);

  const auto three = build_custom_scenario(
      {{AgentId{3}, {0, 0}, {1, 0}, 2}, {AgentId{1}, {2, 0}, {2, 0}, 2}, {AgentId{2}, {3, 0}, {3, 0}, 2}}, {});
  EXPECT_EQ(three.ids(), (std::vector<AgentId>{AgentId{1}, AgentId{2}, AgentId{3}}));
  EXPECT_EQ(three.couplings.size(), 6U);
  EXPECT_THROW(build_custom_scenario({{AgentId{1}, {0, 0}, {0, 0}, 2}, {AgentId{1}, {1, 0}, {1, 0}, 2}}, {}),
               std::invalid_argument);
  EXPECT_THROW(build_custom_scenario({{AgentId{1}, {0, 0}, {0, 0}, 0}}, {}), std::invalid_argument);
}

TEST(BridgeWorld, BoundsBox) {
  BridgeOptions opts;
  opts.bounds = Box{-2, 2, -1, 1};
  const auto m = make_agent({AgentId{1}, {0, 0}, {1, 0}, 2}, opts);
  EXPECT_TRUE(m.local_state_ok({2, 1}));
  EXPECT_FALSE(m.local_state_ok({3, 0}));
}

TEST(BridgeWorld, PropertyLowerBoundIsValid) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> coord(-4, 4), steps(0, 6);
  const auto controls = control_set(MoveMode::king);
  std::uniform_int_distribution<std::size_t> pick(0, controls.size() - 1);
  for (int trial = 0; trial < 2000; ++trial) {
    const GridState ref{coord(rng), coord(rng)};
    GridState x{coord(rng), coord(rng)};
    const int s = steps(rng);
    const Rational bound = chebyshev_cost_bound(x, ref, s);
    Rational cost(0);
    for (int k = 0; k < s; ++k) {
      cost += bridge_cost(x, ref);
      x = bridge_dynamics(x, controls[pick(rng)]);
    }
    EXPECT_LE(bound, cost);
  }
}
