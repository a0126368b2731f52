#pragma once

// Agent dynamics, coupling constraints and admissibility of control
// sequences under stored neighbour predictions.

#include <algorithm>
#include <cassert>
#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "dnmpc/rational.hpp"

namespace dnmpc {

struct AgentId {
  int value = 0;
  friend auto operator<=>(const AgentId&, const AgentId&) = default;
  friend std::ostream& operator<<(std::ostream& os, AgentId id) { return os << id.value; }
};

/// Absolute sampling instant.
using Time = int;

/// Raised when neighbour information is malformed (wrong record length,
/// self-reference, record from the future).
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One agent: decoupled dynamics on its own state, a finite ordered control
/// set, local state constraints and a nonnegative stage cost.
///
/// The order of `controls` is the tie-break order of the optimizer: among
/// sequences of equal cost the lexicographically smallest one wins.
template <class State, class Control, class Cost = Rational>
struct AgentModel {
  AgentId id;
  std::function<State(const State&, const Control&)> step;
  std::vector<Control> controls;
  Control neutral{};
  std::function<bool(const State&)> local_state_ok;
  std::function<Cost(const State&, const Control&)> stage_cost;
  /// Optional lower bound on the sum of `steps` consecutive stage costs
  /// starting in the given state. Used for branch-and-bound pruning only.
  std::function<Cost(const State&, int steps)> cost_to_go_bound;
  /// Optional squared distance to the reference (for comparison-function checks).
  std::function<Cost(const State&)> distance_sq;
  State reference{};
  int horizon = 1;

  [[nodiscard]] bool has_control(const Control& u) const {
    return std::find(controls.begin(), controls.end(), u) != controls.end();
  }

  void validate() const {
    if (controls.empty()) throw std::invalid_argument("agent has an empty control set");
    if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
    if (!step || !local_state_ok || !stage_cost)
      throw std::invalid_argument("agent model is missing dynamics, constraint or cost");
    if (!has_control(neutral)) throw std::invalid_argument("neutral control not in control set");
    if (!cost_traits<Cost>::equal(stage_cost(reference, neutral), cost_traits<Cost>::zero()))
      throw std::invalid_argument("stage cost must vanish at the reference");
  }
};

template <class State>
struct Transition {
  State from;
  State to;
};

enum class CouplingKind { state, transition };

/// Constraint linking several agents. `check_states` sees same-instant states
/// ordered like `scope`; `check_transitions` sees (x, x+) pairs ordered like `scope`.
template <class State>
struct JointConstraint {
  int id = 0;
  std::string name;
  std::vector<AgentId> scope;
  CouplingKind kind = CouplingKind::state;
  std::function<bool(std::span<const State>)> check_states;
  std::function<bool(std::span<const Transition<State>>)> check_transitions;

  [[nodiscard]] bool involves(AgentId p) const {
    return std::find(scope.begin(), scope.end(), p) != scope.end();
  }
};

template <class State>
using Couplings = std::vector<JointConstraint<State>>;

/// Prediction of agent `source`, computed at `solved_at` over `horizon` steps.
template <class State>
struct NeighborRecord {
  AgentId source;
  Time solved_at = 0;
  int horizon = 0;
  std::vector<State> states;

  /// Whether the prediction still covers absolute time t.
  [[nodiscard]] bool covers(Time t) const { return t >= solved_at && t <= solved_at + horizon; }
  [[nodiscard]] const State& at(Time t) const {
    assert(covers(t));
    return states[static_cast<std::size_t>(t - solved_at)];
  }
  friend bool operator==(const NeighborRecord&, const NeighborRecord&) = default;
};

/// Neighbour information held by one agent: at most one record per source,
/// never a record about the owner itself.
template <class State>
struct InfoSet {
  AgentId owner;
  std::map<AgentId, NeighborRecord<State>> records;

  InfoSet() = default;
  explicit InfoSet(AgentId p) : owner(p) {}

  void insert(NeighborRecord<State> record) {
    if (record.source == owner) throw StructuralError("agent cannot hold a record about itself");
    records.insert_or_assign(record.source, std::move(record));
  }

  [[nodiscard]] bool empty() const { return records.empty(); }

  /// Throws StructuralError on malformed records or records newer than n.
  void validate(Time n) const {
    for (const auto& [source, rec] : records) {
      if (source != rec.source) throw StructuralError("record keyed under the wrong source");
      if (source == owner) throw StructuralError("agent cannot hold a record about itself");
      if (rec.horizon < 0 || rec.states.size() != static_cast<std::size_t>(rec.horizon) + 1)
        throw StructuralError("record length does not match its horizon");
      if (rec.solved_at > n) throw StructuralError("record solved after the current time");
    }
  }
};

template <class State, class Control>
struct Trajectory {
  Time start_time = 0;
  std::vector<State> states;
  std::vector<Control> controls;
};

template <class State, class Control, class Cost>
Trajectory<State, Control> rollout(const AgentModel<State, Control, Cost>& model, const State& x0,
                                   std::span<const Control> controls, Time start_time = 0) {
  Trajectory<State, Control> traj;
  traj.start_time = start_time;
  traj.controls.assign(controls.begin(), controls.end());
  traj.states.reserve(controls.size() + 1);
  traj.states.push_back(x0);
  for (const auto& u : controls) traj.states.push_back(model.step(traj.states.back(), u));
  return traj;
}

/// Sources whose stored prediction still covers absolute time n + k, sorted by id.
template <class State>
std::vector<AgentId> prediction_index_set(const InfoSet<State>& info, Time n, int k) {
  if (k < 0) throw std::invalid_argument("prediction offset must be nonnegative");
  std::vector<AgentId> out;
  for (const auto& [q, rec] : info.records)
    if (n + k <= rec.solved_at + rec.horizon) out.push_back(q);
  return out;
}

/// Couplings whose whole scope lies in ids ∪ {owner}.
template <class State>
Couplings<State> project_scope(const Couplings<State>& couplings, AgentId owner,
                               std::span<const AgentId> ids) {
  Couplings<State> out;
  for (const auto& c : couplings) {
    const bool inside = std::all_of(c.scope.begin(), c.scope.end(), [&](AgentId a) {
      return a == owner || std::find(ids.begin(), ids.end(), a) != ids.end();
    });
    if (inside) out.push_back(c);
  }
  return out;
}

enum class ViolationKind { control_set, local_state, coupling };

struct Violation {
  int k = 0;
  ViolationKind kind = ViolationKind::coupling;
  /// Coupling id; -2 for a control outside the control set, -1 for a local state violation.
  int constraint_id = 0;
  std::vector<AgentId> inducers;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct AdmissibilityVerdict {
  std::vector<Violation> violations;
  [[nodiscard]] bool ok() const { return violations.empty(); }
};

namespace detail {

/// Precomputed constraint view for one agent over offsets 0..horizon: which
/// couplings are active at each offset and the aligned neighbour states.
template <class State, class Control, class Cost>
class ConstraintWindow {
 public:
  ConstraintWindow(const AgentModel<State, Control, Cost>& model, Time n, const InfoSet<State>& info,
                   const Couplings<State>& couplings, int horizon)
      : model_(&model) {
    info.validate(n);
    state_slots_.resize(static_cast<std::size_t>(horizon) + 1);
    transition_slots_.resize(static_cast<std::size_t>(horizon));
    for (int k = 0; k <= horizon; ++k) {
      // Neighbours in the prediction window at n + k; a transition at k also
      // needs the neighbour's state at n + k + 1.
      const auto active = prediction_index_set(info, n, k);
      for (const auto& c : couplings) {
        if (!c.involves(model.id)) continue;
        if (c.kind == CouplingKind::state) {
          if (auto slot = make_slot<State>(c, info, active, [&](const NeighborRecord<State>& r) {
                return r.at(n + k);
              }))
            state_slots_[static_cast<std::size_t>(k)].push_back(std::move(*slot));
        } else if (k < horizon) {
          std::vector<AgentId> both;
          for (AgentId q : active)
            if (info.records.at(q).covers(n + k + 1)) both.push_back(q);
          if (auto slot = make_slot<Transition<State>>(c, info, both, [&](const NeighborRecord<State>& r) {
                return Transition<State>{r.at(n + k), r.at(n + k + 1)};
              }))
            transition_slots_[static_cast<std::size_t>(k)].push_back(std::move(*slot));
        }
      }
    }
  }

  [[nodiscard]] bool state_ok(int k, const State& x) const {
    if (!model_->local_state_ok(x)) return false;
    for (const auto& slot : state_slots_[static_cast<std::size_t>(k)])
      if (!eval_state(slot, x)) return false;
    return true;
  }

  [[nodiscard]] bool transition_ok(int k, const State& x, const State& next) const {
    for (const auto& slot : transition_slots_[static_cast<std::size_t>(k)])
      if (!eval_transition(slot, Transition<State>{x, next})) return false;
    return true;
  }

  void report_state(int k, const State& x, std::vector<Violation>& out) const {
    if (!model_->local_state_ok(x)) out.push_back({k, ViolationKind::local_state, -1, {}});
    for (const auto& slot : state_slots_[static_cast<std::size_t>(k)])
      if (!eval_state(slot, x)) out.push_back({k, ViolationKind::coupling, slot.constraint->id, slot.inducers});
  }

  void report_transition(int k, const State& x, const State& next, std::vector<Violation>& out) const {
    for (const auto& slot : transition_slots_[static_cast<std::size_t>(k)])
      if (!eval_transition(slot, Transition<State>{x, next}))
        out.push_back({k, ViolationKind::coupling, slot.constraint->id, slot.inducers});
  }

 private:
  template <class Entry>
  struct Slot {
    const JointConstraint<State>* constraint = nullptr;
    std::vector<Entry> entries;  // scope order, owner entry is a placeholder
    std::size_t owner_pos = 0;
    std::vector<AgentId> inducers;
  };

  template <class Entry, class Pick>
  std::optional<Slot<Entry>> make_slot(const JointConstraint<State>& c, const InfoSet<State>& info,
                                       const std::vector<AgentId>& available, Pick pick) const {
    Slot<Entry> slot;
    slot.constraint = &c;
    for (std::size_t i = 0; i < c.scope.size(); ++i) {
      const AgentId a = c.scope[i];
      if (a == model_->id) {
        slot.owner_pos = i;
        slot.entries.emplace_back();
        continue;
      }
      if (std::find(available.begin(), available.end(), a) == available.end()) return std::nullopt;
      slot.entries.push_back(pick(info.records.at(a)));
      slot.inducers.push_back(a);
    }
    std::sort(slot.inducers.begin(), slot.inducers.end());
    return slot;
  }

  bool eval_state(const Slot<State>& slot, const State& x) const {
    auto entries = slot.entries;
    entries[slot.owner_pos] = x;
    return slot.constraint->check_states(std::span<const State>(entries));
  }

  bool eval_transition(const Slot<Transition<State>>& slot, const Transition<State>& t) const {
    auto entries = slot.entries;
    entries[slot.owner_pos] = t;
    return slot.constraint->check_transitions(std::span<const Transition<State>>(entries));
  }

  const AgentModel<State, Control, Cost>* model_;
  std::vector<std::vector<Slot<State>>> state_slots_;
  std::vector<std::vector<Slot<Transition<State>>>> transition_slots_;
};

inline void sort_violations(std::vector<Violation>& v) {
  std::sort(v.begin(), v.end(), [](const Violation& a, const Violation& b) {
    return std::tie(a.k, a.constraint_id, a.inducers) < std::tie(b.k, b.constraint_id, b.inducers);
  });
}

}  // namespace detail

/// Checks a finite control sequence of length N_p against the control set,
/// the local constraints and every coupling whose other scope members are
/// covered by a stored prediction at the aligned absolute time. Violations
/// are ordered by (k, constraint id, inducers).
template <class State, class Control, class Cost>
AdmissibilityVerdict admissible(const AgentModel<State, Control, Cost>& model, const State& x0, Time n,
                                const InfoSet<State>& info, const Couplings<State>& couplings,
                                std::span<const Control> controls) {
  if (controls.size() != static_cast<std::size_t>(model.horizon))
    throw std::invalid_argument("control sequence length differs from the horizon");
  const int horizon = model.horizon;
  const detail::ConstraintWindow<State, Control, Cost> window(model, n, info, couplings, horizon);

  AdmissibilityVerdict verdict;
  for (int k = 0; k < horizon; ++k)
    if (!model.has_control(controls[static_cast<std::size_t>(k)]))
      verdict.violations.push_back({k, ViolationKind::control_set, -2, {}});
  if (!verdict.ok()) return verdict;

  const auto traj = rollout(model, x0, controls, n);
  for (int k = 0; k <= horizon; ++k) {
    window.report_state(k, traj.states[static_cast<std::size_t>(k)], verdict.violations);
    if (k < horizon)
      window.report_transition(k, traj.states[static_cast<std::size_t>(k)],
                               traj.states[static_cast<std::size_t>(k) + 1], verdict.violations);
  }
  detail::sort_violations(verdict.violations);
  return verdict;
}

/// A complete multi-agent setup: models (sorted by id), initial joint state
/// and the coupling constraints between agents.
template <class State, class Control, class Cost = Rational>
struct Scenario {
  std::string name;
  std::vector<AgentModel<State, Control, Cost>> agents;
  std::vector<State> initial_states;
  Couplings<State> couplings;

  [[nodiscard]] std::size_t index_of(AgentId id) const {
    for (std::size_t i = 0; i < agents.size(); ++i)
      if (agents[i].id == id) return i;
    throw std::out_of_range("unknown agent " + std::to_string(id.value));
  }
  [[nodiscard]] const AgentModel<State, Control, Cost>& model(AgentId id) const { return agents[index_of(id)]; }
  [[nodiscard]] std::vector<AgentId> ids() const {
    std::vector<AgentId> out;
    for (const auto& a : agents) out.push_back(a.id);
    return out;
  }
};

/// A joint constraint (or an agent's local constraint, constraint_id -1)
/// broken by a joint state or joint transition.
struct JointViolation {
  int constraint_id = -1;
  std::string name;
  std::vector<AgentId> agents;
};

namespace detail {

template <class State, class Control, class Cost>
std::vector<std::size_t> scope_indices(const Scenario<State, Control, Cost>& sc, const JointConstraint<State>& c) {
  std::vector<std::size_t> idx;
  for (AgentId a : c.scope) idx.push_back(sc.index_of(a));
  return idx;
}

}  // namespace detail

/// First violated constraint of the joint state, local constraints first.
template <class State, class Control, class Cost>
std::optional<JointViolation> first_state_violation(const Scenario<State, Control, Cost>& sc,
                                                    std::span<const State> states) {
  for (std::size_t a = 0; a < sc.agents.size(); ++a)
    if (!sc.agents[a].local_state_ok(states[a])) return JointViolation{-1, "local", {sc.agents[a].id}};
  for (const auto& c : sc.couplings) {
    if (c.kind != CouplingKind::state) continue;
    std::vector<State> args;
    for (std::size_t i : detail::scope_indices(sc, c)) args.push_back(states[i]);
    if (!c.check_states(std::span<const State>(args))) return JointViolation{c.id, c.name, c.scope};
  }
  return std::nullopt;
}

/// First violated transition coupling for the joint move from -> to.
template <class State, class Control, class Cost>
std::optional<JointViolation> first_transition_violation(const Scenario<State, Control, Cost>& sc,
                                                         std::span<const State> from, std::span<const State> to) {
  for (const auto& c : sc.couplings) {
    if (c.kind != CouplingKind::transition) continue;
    std::vector<Transition<State>> args;
    for (std::size_t i : detail::scope_indices(sc, c)) args.push_back({from[i], to[i]});
    if (!c.check_transitions(std::span<const Transition<State>>(args))) return JointViolation{c.id, c.name, c.scope};
  }
  return std::nullopt;
}

}  // namespace dnmpc
