#include <random>

#include <gtest/gtest.h>

#include "bridge_fixtures.hpp"
#include "dnmpc/core_model.hpp"

using namespace dnmpc;
using bridge::GridControl;
using bridge::GridState;

namespace {

bridge::Model agent2(int horizon = 4) {
  return bridge::make_agent({AgentId{2}, {-1, 0}, {2, 0}, horizon}, {});
}

NeighborRecord<GridState> record(AgentId q, Time n_q, std::vector<GridState> states) {
  const int horizon = static_cast<int>(states.size()) - 1;
  return {q, n_q, horizon, std::move(states)};
}

Couplings<GridState> bridge_couplings() {
  const std::vector<AgentId> ids{AgentId{1}, AgentId{2}};
  return bridge::make_couplings(ids, bridge::SwapRule::swap_only);
}

}  // namespace

TEST(Rollout, AdditiveDynamics) {
  const auto m = agent2();
  const std::vector<GridControl> left(3, GridControl{-1, 0});
  const auto traj = rollout(m, GridState{1, 0}, std::span<const GridControl>(left));
  const std::vector<GridState> expected{{1, 0}, {0, 0}, {-1, 0}, {-2, 0}};
  EXPECT_EQ(traj.states, expected);

  const auto empty = rollout(m, GridState{3, 3}, std::span<const GridControl>());
  EXPECT_EQ(empty.states, (std::vector<GridState>{GridState{3, 3}}));

  const std::vector<GridControl> up{{0, 1}};
  const auto aside = rollout(m, GridState{-1, 0}, std::span<const GridControl>(up));
  EXPECT_EQ(aside.states.back(), (GridState{-1, 1}));
}

TEST(Rollout, PropertyReplay) {
  std::mt19937_64 rng(3);
  const auto m = agent2();
  std::uniform_int_distribution<std::size_t> pick(0, m.controls.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<GridControl> u(trial % 9);
    for (auto& c : u) c = m.controls[pick(rng)];
    const auto traj = rollout(m, GridState{trial % 5, -trial % 3}, std::span<const GridControl>(u));
    ASSERT_EQ(traj.states.size(), u.size() + 1);
    for (std::size_t k = 0; k < u.size(); ++k) EXPECT_EQ(traj.states[k + 1], m.step(traj.states[k], u[k]));
  }
}

TEST(PredictionIndexSet, Window) {
  InfoSet<GridState> info(AgentId{2});
  EXPECT_TRUE(prediction_index_set(info, 7, 3).empty());
  info.insert(record(AgentId{1}, 0, {{1, 0}, {0, 0}, {-1, 0}, {-2, 0}, {-2, 0}}));
  EXPECT_TRUE(prediction_index_set(info, 2, 3).empty());
  EXPECT_EQ(prediction_index_set(info, 2, 2), std::vector<AgentId>{AgentId{1}});
  EXPECT_THROW(prediction_index_set(info, 2, -1), std::invalid_argument);
}

TEST(PredictionIndexSet, PropertyShrinksWithOffset) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    InfoSet<GridState> info(AgentId{0});
    const Time n = static_cast<Time>(rng() % 6);
    for (int q = 1; q <= 4; ++q) {
      const int horizon = static_cast<int>(rng() % 5);
      info.insert({AgentId{q}, static_cast<Time>(rng() % (n + 1)), horizon,
                   std::vector<GridState>(static_cast<std::size_t>(horizon) + 1)});
    }
    for (int k = 0; k < 8; ++k) {
      const auto now = prediction_index_set(info, n, k);
      const auto later = prediction_index_set(info, n, k + 1);
      EXPECT_TRUE(std::includes(now.begin(), now.end(), later.begin(), later.end()));
    }
  }
}

TEST(Admissible, CollisionNamesInducer) {
  const auto m = agent2(2);
  InfoSet<GridState> info(AgentId{2});
  info.insert(record(AgentId{1}, 0, {{1, 0}, {0, 0}, {-1, 0}}));
  const std::vector<GridControl> straight{{1, 0}, {0, 0}};
  const auto verdict = admissible(m, GridState{-1, 0}, 0, info, bridge_couplings(),
                                  std::span<const GridControl>(straight));
  ASSERT_FALSE(verdict.ok());
  ASSERT_EQ(verdict.violations.size(), 1U);
  EXPECT_EQ(verdict.violations[0], (Violation{1, ViolationKind::coupling, 0, {AgentId{1}}}));
}

TEST(Admissible, DecoupledAgentOnlySeesLocalConstraints) {
  const auto m = agent2(3);
  const InfoSet<GridState> empty(AgentId{2});
  const std::vector<GridControl> go{{1, 0}, {1, 0}, {1, 0}};
  EXPECT_TRUE(admissible(m, GridState{-1, 0}, 0, empty, bridge_couplings(), std::span<const GridControl>(go)).ok());

  // Driving up onto a bridge cell off row 0 is a local violation with no inducers.
  const std::vector<GridControl> bad{{1, 0}, {0, 1}, {0, 0}};
  const auto verdict =
      admissible(m, GridState{-1, 0}, 0, empty, bridge_couplings(), std::span<const GridControl>(bad));
  ASSERT_FALSE(verdict.ok());
  EXPECT_EQ(verdict.violations.front().kind, ViolationKind::local_state);
  EXPECT_TRUE(verdict.violations.front().inducers.empty());
}

TEST(Admissible, ExpiredRecordIsIgnored) {
  const auto m = agent2(4);
  const std::vector<GridControl> wait_then_go{{0, 0}, {1, 0}, {1, 0}, {1, 0}};
  // Car 1 is predicted to reach (0,0) at time 1 and (-1,0) at time 2.
  InfoSet<GridState> short_info(AgentId{2});
  short_info.insert(record(AgentId{1}, 0, {{1, 0}, {0, 0}}));
  EXPECT_TRUE(admissible(m, GridState{-1, 0}, 0, short_info, bridge_couplings(),
                         std::span<const GridControl>(wait_then_go))
                  .ok());

  InfoSet<GridState> long_info(AgentId{2});
  long_info.insert(record(AgentId{1}, 0, {{1, 0}, {0, 0}, {-1, 0}}));
  EXPECT_FALSE(admissible(m, GridState{-1, 0}, 0, long_info, bridge_couplings(),
                          std::span<const GridControl>(wait_then_go))
                   .ok());
}

TEST(Admissible, StaleRecordUsesOriginalSolveTime) {
  // Record solved at n_q = 1, used at n = 2: offset k reads index k + 1.
  const auto m = agent2(1);
  InfoSet<GridState> info(AgentId{2});
  info.insert(record(AgentId{1}, 1, {{5, 5}, {0, 0}, {-1, 0}}));
  const std::vector<GridControl> stay{{0, 0}};
  const auto verdict = admissible(m, GridState{-1, 0}, 2, info, bridge_couplings(), std::span<const GridControl>(stay));
  ASSERT_FALSE(verdict.ok());
  EXPECT_EQ(verdict.violations[0].k, 1);
}

TEST(Admissible, StructuralErrors) {
  const auto m = agent2(1);
  const std::vector<GridControl> stay{{0, 0}};
  InfoSet<GridState> info(AgentId{2});
  info.records[AgentId{1}] = {AgentId{1}, 0, 3, {{1, 0}}};
  EXPECT_THROW(admissible(m, GridState{-1, 0}, 0, info, bridge_couplings(), std::span<const GridControl>(stay)),
               StructuralError);
  EXPECT_THROW(info.insert(record(AgentId{2}, 0, {{0, 0}})), StructuralError);

  InfoSet<GridState> future(AgentId{2});
  future.insert(record(AgentId{1}, 3, {{1, 0}}));
  EXPECT_THROW(admissible(m, GridState{-1, 0}, 0, future, bridge_couplings(), std::span<const GridControl>(stay)),
               StructuralError);
}

TEST(ProjectScope, Examples) {
  const auto couplings = bridge_couplings();
  const std::vector<AgentId> both{AgentId{1}, AgentId{2}};
  EXPECT_EQ(project_scope(couplings, AgentId{1}, both).size(), 2U);
  const std::vector<AgentId> self{AgentId{1}};
  EXPECT_TRUE(project_scope(couplings, AgentId{1}, self).empty());
  EXPECT_TRUE(project_scope(Couplings<GridState>{}, AgentId{1}, both).empty());
}

namespace {

struct RandomInstance {
  bridge::Model model;
  GridState x0;
  Time n;
  InfoSet<GridState> info;
  std::vector<GridControl> controls;
};

RandomInstance random_instance(std::mt19937_64& rng, int agents) {
  std::uniform_int_distribution<int> coord(-3, 3), horizon(1, 5);
  RandomInstance inst{agent2(horizon(rng)), {coord(rng), 0}, static_cast<Time>(rng() % 4), InfoSet<GridState>(AgentId{2}), {}};
  std::uniform_int_distribution<std::size_t> pick(0, inst.model.controls.size() - 1);
  for (int q = 1; q <= agents; ++q) {
    if (q == 2) continue;
    std::vector<GridControl> u(static_cast<std::size_t>(horizon(rng)));
    for (auto& c : u) c = inst.model.controls[pick(rng)];
    const auto traj = rollout(inst.model, GridState{coord(rng), coord(rng)}, std::span<const GridControl>(u));
    inst.info.insert({AgentId{q}, static_cast<Time>(rng() % (inst.n + 1)), static_cast<int>(u.size()), traj.states});
  }
  inst.controls.resize(static_cast<std::size_t>(inst.model.horizon));
  for (auto& c : inst.controls) c = inst.model.controls[pick(rng)];
  return inst;
}

Couplings<GridState> all_pairs(int agents) {
  std::vector<AgentId> ids;
  for (int q = 1; q <= agents; ++q) ids.push_back(AgentId{q});
  return bridge::make_couplings(ids, bridge::SwapRule::swap_only);
}

}  // namespace

TEST(Admissible, PropertyRemovingNeighboursNeverAddsViolations) {
  std::mt19937_64 rng(17);
  const auto couplings = all_pairs(4);
  int checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    auto inst = random_instance(rng, 4);
    const auto full = admissible(inst.model, inst.x0, inst.n, inst.info, couplings, std::span<const GridControl>(inst.controls));
    if (!full.ok()) continue;
    ++checked;
    for (const auto& [q, rec] : inst.info.records) {
      auto reduced = inst.info;
      reduced.records.erase(q);
      EXPECT_TRUE(admissible(inst.model, inst.x0, inst.n, reduced, couplings, std::span<const GridControl>(inst.controls)).ok());
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(Admissible, PropertyStatesOutsideWindowAreIrrelevant) {
  std::mt19937_64 rng(23);
  const auto couplings = all_pairs(3);
  for (int trial = 0; trial < 1000; ++trial) {
    auto inst = random_instance(rng, 3);
    const auto before = admissible(inst.model, inst.x0, inst.n, inst.info, couplings, std::span<const GridControl>(inst.controls));
    auto mutated = inst.info;
    for (auto& [q, rec] : mutated.records) {
      const int lo = inst.n - rec.solved_at;
      const int hi = lo + inst.model.horizon;
      for (int i = 0; i < static_cast<int>(rec.states.size()); ++i)
        if (i < lo || i > hi) rec.states[static_cast<std::size_t>(i)] = GridState{100 + i, 100};
    }
    const auto after = admissible(inst.model, inst.x0, inst.n, mutated, couplings, std::span<const GridControl>(inst.controls));
    EXPECT_EQ(before.violations, after.violations);
  }
}
