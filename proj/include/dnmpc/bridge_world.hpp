#pragma once

// Two cars and a one-lane bridge on the integer grid, plus scenario builders.

#include <algorithm>
#include <compare>
#include <cstdlib>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dnmpc/core_model.hpp"
#include "dnmpc/rational.hpp"

namespace dnmpc::bridge {

struct GridState {
  int x1 = 0;  // column
  int x2 = 0;  // row
  friend auto operator<=>(const GridState&, const GridState&) = default;
  friend std::ostream& operator<<(std::ostream& os, const GridState& s) {
    return os << '(' << s.x1 << ',' << s.x2 << ')';
  }
};

struct GridControl {
  int dx = 0;
  int dy = 0;
  friend auto operator<=>(const GridControl&, const GridControl&) = default;
  friend std::ostream& operator<<(std::ostream& os, const GridControl& u) {
    return os << '(' << u.dx << ',' << u.dy << ')';
  }
};

/// orthogonal: the four axis moves plus standing still. king: all of {-1,0,1}^2.
enum class MoveMode { orthogonal, king };

/// swap_only forbids two cars exchanging cells in one step. strict also
/// forbids moving into the cell the other car occupies before the step.
enum class SwapRule { swap_only, strict };

struct Box {
  int x1_min, x1_max, x2_min, x2_max;
  [[nodiscard]] bool contains(const GridState& s) const {
    return s.x1 >= x1_min && s.x1 <= x1_max && s.x2 >= x2_min && s.x2 <= x2_max;
  }
};

struct BridgeOptions {
  MoveMode moves = MoveMode::orthogonal;
  SwapRule swap_rule = SwapRule::swap_only;
  /// Weight of the squared control magnitude in the stage cost.
  Rational cost_weight{0};
  /// Columns that are bridge cells (only row 0 is drivable there).
  std::vector<int> bridge_columns{0};
  /// If nonempty, the only rows a car may occupy.
  std::vector<int> lane_rows;
  std::optional<Box> bounds;
};

struct AgentSpec {
  AgentId id;
  GridState start;
  GridState reference;
  int horizon = 6;
};

using Model = AgentModel<GridState, GridControl, Rational>;
using BridgeScenario = Scenario<GridState, GridControl, Rational>;

class UnknownScenario : public std::invalid_argument {
 public:
  explicit UnknownScenario(std::string_view name)
      : std::invalid_argument("unknown scenario: " + std::string(name)) {}
};

inline GridState bridge_dynamics(const GridState& x, const GridControl& u) { return {x.x1 + u.dx, x.x2 + u.dy}; }

inline bool collision_ok(const GridState& xa, const GridState& xb) { return xa != xb; }

inline bool bridge_ok(const GridState& x, std::span<const int> bridge_columns) {
  const bool on_bridge = std::find(bridge_columns.begin(), bridge_columns.end(), x.x1) != bridge_columns.end();
  return !on_bridge || x.x2 == 0;
}

inline bool bridge_ok(const GridState& x) { return x.x1 != 0 || x.x2 == 0; }

inline bool swap_ok(const GridState& xa, const GridControl& ua, const GridState& xb, const GridControl& ub,
                    SwapRule rule = SwapRule::swap_only) {
  const bool a_into_b = bridge_dynamics(xa, ua) == xb;
  const bool b_into_a = bridge_dynamics(xb, ub) == xa;
  return rule == SwapRule::swap_only ? !(a_into_b && b_into_a) : !(a_into_b || b_into_a);
}

inline Rational bridge_cost(const GridState& x, const GridState& ref) {
  const std::int64_t d1 = x.x1 - ref.x1;
  const std::int64_t d2 = x.x2 - ref.x2;
  return Rational(d1 * d1 + d2 * d2);
}

/// Controls sorted lexicographically on (dx, dy); this is the tie-break order.
inline std::vector<GridControl> control_set(MoveMode mode) {
  std::vector<GridControl> out;
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      if (mode == MoveMode::king || std::abs(dx) + std::abs(dy) <= 1) out.push_back({dx, dy});
  return out;
}

/// Sum over k < steps of max(0, c - k)^2 with c the Chebyshev distance to the
/// reference. Every move changes the Chebyshev distance by at most one and the
/// squared Euclidean distance dominates its square.
inline Rational chebyshev_cost_bound(const GridState& x, const GridState& ref, int steps) {
  const std::int64_t c = std::max(std::abs(x.x1 - ref.x1), std::abs(x.x2 - ref.x2));
  std::int64_t sum = 0;
  for (std::int64_t k = 0; k < steps && k < c; ++k) sum += (c - k) * (c - k);
  return Rational(sum);
}

inline Model make_agent(const AgentSpec& spec, const BridgeOptions& opts) {
  Model m;
  m.id = spec.id;
  m.step = bridge_dynamics;
  m.controls = control_set(opts.moves);
  m.neutral = {0, 0};
  m.reference = spec.reference;
  m.horizon = spec.horizon;
  m.local_state_ok = [columns = opts.bridge_columns, rows = opts.lane_rows, box = opts.bounds](const GridState& x) {
    if (!bridge_ok(x, columns)) return false;
    if (!rows.empty() && std::find(rows.begin(), rows.end(), x.x2) == rows.end()) return false;
    return !box || box->contains(x);
  };
  const GridState ref = spec.reference;
  const Rational weight = opts.cost_weight;
  m.stage_cost = [ref, weight](const GridState& x, const GridControl& u) {
    Rational cost = bridge_cost(x, ref);
    if (weight != Rational(0)) cost += weight * Rational(u.dx * u.dx + u.dy * u.dy);
    return cost;
  };
  m.cost_to_go_bound = [ref](const GridState& x, int steps) { return chebyshev_cost_bound(x, ref, steps); };
  m.distance_sq = [ref](const GridState& x) { return bridge_cost(x, ref); };
  return m;
}

/// Collision (state kind) and swap (transition kind) constraints for every
/// pair of agents; ids are assigned pairwise in that order.
inline Couplings<GridState> make_couplings(std::span<const AgentId> ids, SwapRule rule) {
  Couplings<GridState> out;
  int next_id = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      JointConstraint<GridState> collision;
      collision.id = next_id++;
      collision.name = "collision";
      collision.scope = {ids[i], ids[j]};
      collision.kind = CouplingKind::state;
      collision.check_states = [](std::span<const GridState> s) { return collision_ok(s[0], s[1]); };
      out.push_back(std::move(collision));

      JointConstraint<GridState> swap;
      swap.id = next_id++;
      swap.name = "swap";
      swap.scope = {ids[i], ids[j]};
      swap.kind = CouplingKind::transition;
      swap.check_transitions = [rule](std::span<const Transition<GridState>> t) {
        const GridControl ua{t[0].to.x1 - t[0].from.x1, t[0].to.x2 - t[0].from.x2};
        const GridControl ub{t[1].to.x1 - t[1].from.x1, t[1].to.x2 - t[1].from.x2};
        return swap_ok(t[0].from, ua, t[1].from, ub, rule);
      };
      out.push_back(std::move(swap));
    }
  }
  return out;
}

inline BridgeScenario build_custom_scenario(std::vector<AgentSpec> specs, const BridgeOptions& opts,
                                            std::string name = "custom") {
  if (specs.empty()) throw std::invalid_argument("scenario needs at least one agent");
  std::sort(specs.begin(), specs.end(), [](const AgentSpec& a, const AgentSpec& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < specs.size(); ++i)
    if (specs[i].id == specs[i - 1].id) throw std::invalid_argument("duplicate agent id");
  BridgeScenario sc;
  sc.name = std::move(name);
  std::vector<AgentId> ids;
  for (const auto& spec : specs) {
    if (spec.horizon < 1) throw std::invalid_argument("horizon must be at least 1");
    sc.agents.push_back(make_agent(spec, opts));
    sc.initial_states.push_back(spec.start);
    ids.push_back(spec.id);
  }
  sc.couplings = make_couplings(ids, opts.swap_rule);
  return sc;
}

/// The two-car crossing: car 1 from (1,0) to (-2,0), car 2 from (-1,0) to (2,0).
inline std::vector<AgentSpec> default_agents(int horizon) {
  return {{AgentId{1}, {1, 0}, {-2, 0}, horizon}, {AgentId{2}, {-1, 0}, {2, 0}, horizon}};
}

/// bridge_default: the crossing with both constraints wired.
/// corridor_deadlock: the same cars confined to row 0, so nobody can step aside.
inline BridgeScenario build_scenario(std::string_view name, BridgeOptions opts = {}, int horizon = 6) {
  if (name == "bridge_default") return build_custom_scenario(default_agents(horizon), opts, "bridge_default");
  if (name == "corridor_deadlock") {
    opts.lane_rows = {0};
    return build_custom_scenario(default_agents(horizon), opts, "corridor_deadlock");
  }
  throw UnknownScenario(name);
}

}  // namespace dnmpc::bridge
