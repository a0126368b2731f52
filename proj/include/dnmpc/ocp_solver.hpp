#pragma once

// Exact finite-horizon optimal control over a finite control set.

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dnmpc/core_model.hpp"

namespace dnmpc {

/// No admissible control sequence exists for `agent` at time `n`.
class EmptyAdmissibleSet : public std::runtime_error {
 public:
  EmptyAdmissibleSet(AgentId agent, Time n)
      : std::runtime_error("agent " + std::to_string(agent.value) + " has no admissible control sequence at n=" +
                           std::to_string(n)),
        agent_(agent),
        n_(n) {}
  [[nodiscard]] AgentId agent() const { return agent_; }
  [[nodiscard]] Time time() const { return n_; }

 private:
  AgentId agent_;
  Time n_;
};

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimal open-loop plan of one agent.
template <class State, class Control, class Cost = Rational>
struct Plan {
  AgentId owner;
  Time solved_at = 0;
  int horizon = 0;
  std::vector<Control> controls;
  std::vector<State> states;
  Cost value{};

  [[nodiscard]] NeighborRecord<State> to_record() const { return {owner, solved_at, horizon, states}; }
  friend bool operator==(const Plan&, const Plan&) = default;
};

struct SolverOptions {
  /// Prune subtrees whose partial cost plus lower bound reaches the incumbent.
  bool prune_by_cost = true;
  /// Use the model's cost-to-go bound in the pruning test.
  bool use_lower_bound = true;
  /// Test hook: deliberately unsound pruning (bound inflated by one cost unit).
  bool inject_pruning_fault = false;
};

namespace detail {

template <class State, class Control, class Cost>
class DepthFirstSearch {
 public:
  DepthFirstSearch(const AgentModel<State, Control, Cost>& model, const ConstraintWindow<State, Control, Cost>& window,
                   const SolverOptions& opts)
      : model_(model), window_(window), opts_(opts) {
    const auto n = static_cast<std::size_t>(model.horizon);
    controls_.resize(n);
    states_.resize(n + 1);
  }

  bool run(const State& x0) {
    states_[0] = x0;
    descend(0, cost_traits<Cost>::zero());
    return found_;
  }

  [[nodiscard]] const std::vector<Control>& best_controls() const { return best_controls_; }
  [[nodiscard]] const std::vector<State>& best_states() const { return best_states_; }
  [[nodiscard]] const Cost& best_value() const { return best_value_; }

 private:
  void descend(int k, const Cost& partial) {
    const int horizon = model_.horizon;
    if (k == horizon) {
      if (!found_ || cost_traits<Cost>::less(partial, best_value_)) {
        found_ = true;
        best_value_ = partial;
        best_controls_ = controls_;
        best_states_ = states_;
      }
      return;
    }
    const auto ks = static_cast<std::size_t>(k);
    const State& x = states_[ks];
    for (const auto& u : model_.controls) {
      const State next = model_.step(x, u);
      if (!window_.transition_ok(k, x, next) || !window_.state_ok(k + 1, next)) continue;
      const Cost accumulated = partial + model_.stage_cost(x, u);
      if (found_ && opts_.prune_by_cost) {
        Cost bound = accumulated;
        if (opts_.use_lower_bound && model_.cost_to_go_bound) bound = bound + model_.cost_to_go_bound(next, horizon - k - 1);
        if (opts_.inject_pruning_fault) bound = bound + Cost(1);
        // Ties are pruned too: the incumbent was found first and is lexicographically smaller.
        if (!cost_traits<Cost>::less(bound, best_value_)) continue;
      }
      controls_[ks] = u;
      states_[ks + 1] = next;
      descend(k + 1, accumulated);
    }
  }

  const AgentModel<State, Control, Cost>& model_;
  const ConstraintWindow<State, Control, Cost>& window_;
  const SolverOptions& opts_;
  std::vector<Control> controls_;
  std::vector<State> states_;
  bool found_ = false;
  Cost best_value_{};
  std::vector<Control> best_controls_;
  std::vector<State> best_states_;
};

}  // namespace detail

/// Minimizes the truncated cost over all admissible sequences of length
/// model.horizon. Among equal-cost minimizers the sequence that is
/// lexicographically smallest in the model's control order is returned.
///
/// Throws EmptyAdmissibleSet when no admissible sequence exists, including
/// the case that x0 itself violates the constraints at offset 0.
template <class State, class Control, class Cost>
Plan<State, Control, Cost> solve_ocp(const AgentModel<State, Control, Cost>& model, const State& x0, Time n,
                                     const InfoSet<State>& info, const Couplings<State>& couplings,
                                     const SolverOptions& opts = {}) {
  model.validate();
  const detail::ConstraintWindow<State, Control, Cost> window(model, n, info, couplings, model.horizon);
  if (!window.state_ok(0, x0)) throw EmptyAdmissibleSet(model.id, n);

  detail::DepthFirstSearch<State, Control, Cost> search(model, window, opts);
  if (!search.run(x0)) throw EmptyAdmissibleSet(model.id, n);
  return {model.id, n, model.horizon, search.best_controls(), search.best_states(), search.best_value()};
}

/// Exhaustive reference solver: enumerates every control sequence in
/// lexicographic order, filters with admissible(), keeps the first strict
/// minimum. Refuses instances with more than 10^7 sequences.
template <class State, class Control, class Cost>
Plan<State, Control, Cost> enumerate_oracle(const AgentModel<State, Control, Cost>& model, const State& x0, Time n,
                                            const InfoSet<State>& info, const Couplings<State>& couplings) {
  if (model.horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  model.validate();
  constexpr std::uint64_t budget = 10'000'000;
  const std::uint64_t base = model.controls.size();
  std::uint64_t total = 1;
  for (int k = 0; k < model.horizon; ++k) {
    total *= base;
    if (total > budget) throw BudgetExceeded("enumeration exceeds 10^7 control sequences");
  }

  const auto horizon = static_cast<std::size_t>(model.horizon);
  std::vector<std::size_t> digits(horizon, 0);
  std::vector<Control> seq(horizon);
  std::optional<Plan<State, Control, Cost>> best;
  for (std::uint64_t count = 0; count < total; ++count) {
    for (std::size_t k = 0; k < horizon; ++k) seq[k] = model.controls[digits[k]];
    if (admissible(model, x0, n, info, couplings, std::span<const Control>(seq)).ok()) {
      const auto traj = rollout(model, x0, std::span<const Control>(seq), n);
      Cost value = cost_traits<Cost>::zero();
      for (std::size_t k = 0; k < horizon; ++k) value = value + model.stage_cost(traj.states[k], seq[k]);
      if (!best || cost_traits<Cost>::less(value, best->value))
        best = Plan<State, Control, Cost>{model.id, n, model.horizon, seq, traj.states, value};
    }
    // Odometer with the last position varying fastest gives lexicographic order.
    for (std::size_t k = horizon; k-- > 0;) {
      if (++digits[k] < base) break;
      digits[k] = 0;
    }
  }
  if (!best) throw EmptyAdmissibleSet(model.id, n);
  return *best;
}

template <class State, class Control, class Cost = Rational>
struct InfiniteHorizonEstimate {
  Cost value{};
  /// True once two consecutive horizons agree and the last stage cost of the plan is zero.
  bool converged = false;
  /// Horizon of the last solve.
  int horizon = 0;
  Plan<State, Control, Cost> plan;
};

/// Approximates the infinite-horizon optimal value by increasing the horizon
/// from 1 up to `cutoff`. An unconverged result is a lower estimate.
template <class State, class Control, class Cost>
InfiniteHorizonEstimate<State, Control, Cost> approx_infinite_value(const AgentModel<State, Control, Cost>& model,
                                                                    const State& x0, Time n,
                                                                    const InfoSet<State>& info,
                                                                    const Couplings<State>& couplings, int cutoff,
                                                                    const SolverOptions& opts = {}) {
  if (cutoff < 1) throw std::invalid_argument("cutoff must be at least 1");
  auto m = model;
  InfiniteHorizonEstimate<State, Control, Cost> est;
  std::optional<Cost> previous;
  for (int horizon = 1; horizon <= cutoff; ++horizon) {
    m.horizon = horizon;
    est.plan = solve_ocp(m, x0, n, info, couplings, opts);
    est.value = est.plan.value;
    est.horizon = horizon;
    const auto last = static_cast<std::size_t>(horizon - 1);
    const bool settled = cost_traits<Cost>::equal(model.stage_cost(est.plan.states[last], est.plan.controls[last]),
                                                  cost_traits<Cost>::zero());
    if (previous && cost_traits<Cost>::equal(*previous, est.value) && settled) {
      est.converged = true;
      return est;
    }
    previous = est.value;
  }
  return est;
}

}  // namespace dnmpc
