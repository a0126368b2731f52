#pragma once

#include "dnmpc/bridge_world.hpp"
#include "dnmpc/ocp_solver.hpp"

namespace dnmpc::testing {

using bridge::GridControl;
using bridge::GridState;
using BridgePlan = Plan<GridState, GridControl, Rational>;

/// Car 1's unconstrained plan at n = 0 with the given horizon, as seen by car 2.
inline InfoSet<GridState> car1_info(const bridge::BridgeScenario& sc, int horizon1, Time n = 0) {
  auto m1 = sc.agents[0];
  m1.horizon = horizon1;
  const auto plan = solve_ocp(m1, sc.initial_states[0], n, InfoSet<GridState>(m1.id), sc.couplings);
  InfoSet<GridState> info(AgentId{2});
  info.insert(plan.to_record());
  return info;
}

inline bridge::Model with_horizon(bridge::Model m, int horizon) {
  m.horizon = horizon;
  return m;
}

}  // namespace dnmpc::testing
