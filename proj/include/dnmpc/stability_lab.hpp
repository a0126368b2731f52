#pragma once

// Checks on recorded closed loops: relaxed Lyapunov decrease, suboptimality,
// comparison-function bounds, feasibility and persistence of coupling.

#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dnmpc/core_model.hpp"
#include "dnmpc/ocp_solver.hpp"
#include "dnmpc/run_trace.hpp"

namespace dnmpc {

class TraceTooShort : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class NonmonotoneWeights : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class ClosedLoopNotConverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class InfiniteValueNotConverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChainViolated : public std::runtime_error {
 public:
  ChainViolated(int which, const std::string& what) : std::runtime_error(what), which_(which) {}
  /// 1: alpha V_inf <= alpha J_inf, 2: alpha J_inf <= V_N, 3: V_N <= V_inf.
  [[nodiscard]] int which() const { return which_; }

 private:
  int which_;
};

class BoundViolated : public std::runtime_error {
 public:
  BoundViolated(Time n, std::string bound)
      : std::runtime_error("bound " + bound + " violated at n=" + std::to_string(n)), n_(n), bound_(std::move(bound)) {}
  [[nodiscard]] Time time() const { return n_; }
  [[nodiscard]] const std::string& bound() const { return bound_; }

 private:
  Time n_;
  std::string bound_;
};

class InfeasibleAt : public std::runtime_error {
 public:
  InfeasibleAt(Time n, std::string constraint)
      : std::runtime_error("constraint " + constraint + " violated at n=" + std::to_string(n)),
        n_(n),
        constraint_(std::move(constraint)) {}
  [[nodiscard]] Time time() const { return n_; }
  [[nodiscard]] const std::string& constraint() const { return constraint_; }

 private:
  Time n_;
  std::string constraint_;
};

template <class Cost = Rational>
struct AlphaReport {
  /// Empty when no alpha in (0, 1] works.
  std::optional<Cost> alpha;
  std::optional<Time> binding_index;
  /// (V(n) - V(n+1)) / l(n) for steps with l(n) > 0, unclamped.
  std::vector<std::optional<Cost>> per_step_ratios;
  bool valid = false;
  std::string note;
};

/// The alpha computation on plain sequences; times[i] labels entry i.
template <class Cost>
AlphaReport<Cost> alpha_from_sequences(const std::vector<Cost>& V, const std::vector<Cost>& l,
                                       const std::vector<Time>& times) {
  if (V.size() < 2 || V.size() != l.size() || V.size() != times.size())
    throw TraceTooShort("alpha needs at least two steps");
  using T = cost_traits<Cost>;
  AlphaReport<Cost> r;
  r.valid = true;
  std::optional<Cost> best;
  for (std::size_t i = 0; i + 1 < V.size(); ++i) {
    const Cost decrease = V[i] - V[i + 1];
    if (!T::less(T::zero(), l[i])) {
      r.per_step_ratios.push_back(std::nullopt);
      if (T::less(T::zero(), -decrease) && r.valid) {
        r.valid = false;
        r.note = "value increases at a zero-cost step n=" + std::to_string(times[i]);
      }
      continue;
    }
    const Cost ratio = decrease / l[i];
    r.per_step_ratios.push_back(ratio);
    if (!T::less(T::zero(), ratio) && r.valid) {
      r.valid = false;
      r.note = "nonpositive ratio at n=" + std::to_string(times[i]);
    }
    if (!best || T::less(ratio, *best)) {
      best = ratio;
      r.binding_index = times[i];
    }
  }
  if (!r.valid) {
    r.binding_index.reset();
    return r;
  }
  const Cost one = Cost(1);
  r.alpha = (!best || T::less(one, *best)) ? one : *best;
  if (!best) r.note = "all stage costs vanish";
  return r;
}

namespace detail {

template <class S, class U, class C>
std::vector<Time> trace_times(const RunTrace<S, U, C>& trace) {
  std::vector<Time> out;
  for (const auto& s : trace.steps) out.push_back(s.n);
  return out;
}

}  // namespace detail

template <class S, class U, class C>
AlphaReport<C> local_alpha(const RunTrace<S, U, C>& trace, AgentId p) {
  if (trace.steps.size() < 2) throw TraceTooShort("alpha needs at least two steps");
  return alpha_from_sequences(trace.values(p), trace.stage_costs(p), detail::trace_times(trace));
}

/// Aggregation map applied to the per-agent vectors (agent order of the trace).
template <class Cost = Rational>
using Aggregator = std::function<Cost(const std::vector<Cost>&)>;

/// Rejects maps that are not zero at zero or not strictly increasing in each
/// component on a small sample grid.
template <class Cost>
void validate_aggregator(const Aggregator<Cost>& gamma, std::size_t agents) {
  using T = cost_traits<Cost>;
  const std::vector<Cost> grid{Cost(0), Cost(1), Cost(2), Cost(5), Cost(13)};
  if (!T::equal(gamma(std::vector<Cost>(agents, Cost(0))), T::zero()))
    throw NonmonotoneWeights("aggregation must vanish at zero");
  std::vector<std::size_t> digits(agents, 0);
  while (true) {
    std::vector<Cost> v(agents);
    for (std::size_t a = 0; a < agents; ++a) v[a] = grid[digits[a]];
    const Cost base = gamma(v);
    for (std::size_t a = 0; a < agents; ++a) {
      auto w = v;
      w[a] = w[a] + Cost(1);
      if (!T::less(base, gamma(w))) throw NonmonotoneWeights("aggregation is not increasing in every component");
    }
    std::size_t k = 0;
    while (k < agents && ++digits[k] == grid.size()) digits[k++] = 0;
    if (k == agents) break;
  }
}

template <class Cost>
Aggregator<Cost> linear_aggregator(std::vector<Cost> weights) {
  for (const auto& w : weights)
    if (!cost_traits<Cost>::less(cost_traits<Cost>::zero(), w)) throw NonmonotoneWeights("weights must be positive");
  return [weights](const std::vector<Cost>& v) {
    Cost sum = cost_traits<Cost>::zero();
    for (std::size_t a = 0; a < v.size(); ++a) sum = sum + weights[a] * v[a];
    return sum;
  };
}

template <class S, class U, class C>
AlphaReport<C> weighted_alpha(const RunTrace<S, U, C>& trace, const Aggregator<C>& gamma) {
  if (trace.steps.size() < 2) throw TraceTooShort("alpha needs at least two steps");
  validate_aggregator(gamma, trace.agents.size());
  std::vector<C> V, l;
  for (const auto& s : trace.steps) {
    std::vector<C> v, c;
    for (const auto& a : s.agents) {
      v.push_back(a.value);
      c.push_back(a.stage_cost);
    }
    V.push_back(gamma(v));
    l.push_back(gamma(c));
  }
  return alpha_from_sequences(V, l, detail::trace_times(trace));
}

template <class S, class U, class C>
AlphaReport<C> weighted_alpha(const RunTrace<S, U, C>& trace, const std::vector<C>& weights) {
  if (weights.size() != trace.agents.size()) throw std::invalid_argument("one weight per agent required");
  return weighted_alpha(trace, linear_aggregator(weights));
}

template <class Cost>
std::string render(const AlphaReport<Cost>& r) {
  std::ostringstream os;
  os << "alpha: " << (r.alpha ? cost_traits<Cost>::str(*r.alpha) : std::string("invalid")) << '\n';
  os << "binding_index: " << (r.binding_index ? std::to_string(*r.binding_index) : std::string("-")) << '\n';
  os << "ratios:";
  for (const auto& x : r.per_step_ratios) os << ' ' << (x ? cost_traits<Cost>::str(*x) : std::string("-"));
  os << '\n';
  if (!r.note.empty()) os << "note: " << r.note << '\n';
  return os.str();
}

template <class Cost = Rational>
struct SuboptimalityVerdict {
  Cost alpha{};
  Cost v_infinite{};
  Cost j_infinite{};
  Cost v_horizon{};
};

/// Checks alpha V_inf <= alpha J_inf <= V^N(x(0)) <= V_inf for agent p, with
/// J_inf summed along the trace and V_inf computed by increasing the horizon
/// against the information p used at n = 0.
template <class S, class U, class C>
SuboptimalityVerdict<C> suboptimality_check(const RunTrace<S, U, C>& trace, const Scenario<S, U, C>& scenario,
                                            AgentId p, const C& alpha, int cutoff = 12) {
  using T = cost_traits<C>;
  if (trace.steps.empty()) throw TraceTooShort("empty trace");
  const auto a = trace.index_of(p);
  const auto& last = trace.steps.back().agents[a];
  if (!T::equal(last.stage_cost, T::zero()) || !T::equal(last.value, T::zero()))
    throw ClosedLoopNotConverged("agent " + std::to_string(p.value) + " has not reached a zero-cost equilibrium");

  SuboptimalityVerdict<C> v;
  v.alpha = alpha;
  v.j_infinite = T::zero();
  for (const auto& c : trace.stage_costs(p)) v.j_infinite = v.j_infinite + c;
  const auto& first = trace.steps.front().agents[a];
  v.v_horizon = first.value;
  const auto est =
      approx_infinite_value(scenario.model(p), first.state, trace.steps.front().n, first.info, scenario.couplings, cutoff);
  if (!est.converged) throw InfiniteValueNotConverged("infinite-horizon value did not settle up to the cutoff");
  v.v_infinite = est.value;

  if (T::less(alpha * v.j_infinite, alpha * v.v_infinite)) throw ChainViolated(1, "alpha V_inf > alpha J_inf");
  if (T::less(v.v_horizon, alpha * v.j_infinite)) throw ChainViolated(2, "alpha J_inf > V_N");
  if (T::less(v.v_infinite, v.v_horizon)) throw ChainViolated(3, "V_N > V_inf");
  return v;
}

/// Strictly increasing map with value 0 at 0, evaluated on the squared radius.
template <class Cost = Rational>
struct MonotoneBound {
  std::string name;
  std::function<Cost(const Cost& radius_sq)> eval;

  void validate() const {
    using T = cost_traits<Cost>;
    if (!T::equal(eval(T::zero()), T::zero())) throw std::invalid_argument(name + " must vanish at zero");
    Cost previous = eval(T::zero());
    for (int r = 1; r <= 64; ++r) {
      const Cost now = eval(Cost(r));
      if (!T::less(previous, now)) throw std::invalid_argument(name + " is not strictly increasing");
      previous = now;
    }
  }
};

template <class Cost = Rational>
MonotoneBound<Cost> scaled_square(std::string name, Cost factor) {
  return {std::move(name), [factor](const Cost& r2) { return factor * r2; }};
}

template <class Cost = Rational>
struct BoundSet {
  MonotoneBound<Cost> lower;  // alpha_1
  MonotoneBound<Cost> upper;  // alpha_2
  MonotoneBound<Cost> stage;  // alpha_3
};

/// alpha_1 = alpha_3 = r^2 and alpha_2 = (N + 1) r^2.
template <class Cost = Rational>
BoundSet<Cost> default_bounds(int horizon) {
  return {scaled_square<Cost>("alpha1", Cost(1)), scaled_square<Cost>("alpha2", Cost(horizon + 1)),
          scaled_square<Cost>("alpha3", Cost(1))};
}

/// alpha_1(r) <= V(n) <= alpha_2(r) and l(n) >= alpha_3(r) at every visited state.
template <class S, class U, class C>
void bounds_check(const RunTrace<S, U, C>& trace, const AgentModel<S, U, C>& model, const BoundSet<C>& bounds) {
  using T = cost_traits<C>;
  if (!model.distance_sq) throw std::invalid_argument("model has no distance evaluator");
  bounds.lower.validate();
  bounds.upper.validate();
  bounds.stage.validate();
  const auto a = trace.index_of(model.id);
  for (const auto& s : trace.steps) {
    const auto& st = s.agents[a];
    const C r2 = model.distance_sq(st.state);
    if (T::less(st.value, bounds.lower.eval(r2))) throw BoundViolated(s.n, bounds.lower.name);
    if (T::less(bounds.upper.eval(r2), st.value)) throw BoundViolated(s.n, bounds.upper.name);
    if (T::less(st.stage_cost, bounds.stage.eval(r2))) throw BoundViolated(s.n, bounds.stage.name);
  }
}

/// Every recorded joint state and joint transition satisfies all constraints,
/// and consecutive states follow the dynamics under the applied controls.
template <class S, class U, class C>
void feasibility_check(const RunTrace<S, U, C>& trace, const Scenario<S, U, C>& scenario) {
  auto joint = [&](std::size_t i) {
    std::vector<S> x;
    for (const auto& a : trace.steps[i].agents) x.push_back(a.state);
    return x;
  };
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const Time n = trace.steps[i].n;
    const auto x = joint(i);
    if (auto v = first_state_violation(scenario, std::span<const S>(x))) throw InfeasibleAt(n, v->name);
    std::vector<S> next;
    if (i + 1 < trace.steps.size())
      next = joint(i + 1);
    else if (!trace.final_states.empty())
      next = trace.final_states;
    else
      continue;
    for (std::size_t a = 0; a < x.size(); ++a) {
      const auto& model = scenario.model(trace.agents[a]);
      if (!model.has_control(trace.steps[i].agents[a].control)) throw InfeasibleAt(n, "control set");
      if (model.step(x[a], trace.steps[i].agents[a].control) != next[a]) throw InfeasibleAt(n, "dynamics");
    }
    if (auto v = first_transition_violation(scenario, std::span<const S>(x), std::span<const S>(next)))
      throw InfeasibleAt(n, v->name);
  }
  if (!trace.final_states.empty()) {
    if (auto v = first_state_violation(scenario, std::span<const S>(trace.final_states)))
      throw InfeasibleAt(trace.steps.empty() ? 0 : trace.steps.back().n + 1, v->name);
  }
}

enum class CouplingVerdict { persistent, flattened, mixed };

inline const char* verdict_name(CouplingVerdict v) {
  switch (v) {
    case CouplingVerdict::persistent:
      return "PERSISTENT";
    case CouplingVerdict::flattened:
      return "FLATTENED";
    default:
      return "MIXED";
  }
}

struct PersistenceReport {
  CouplingVerdict verdict = CouplingVerdict::flattened;
  /// Per tail step: whether some agent below the top level still sees a
  /// neighbour prediction one step ahead.
  std::vector<std::pair<Time, bool>> tail;
};

/// Looks at steps n >= n_bar.
template <class S, class U, class C>
PersistenceReport persistent_coupling_detector(const RunTrace<S, U, C>& trace, Time n_bar) {
  std::vector<const StepRecord<S, U, C>*> tail;
  for (const auto& s : trace.steps)
    if (s.n >= n_bar) tail.push_back(&s);
  if (tail.empty()) throw TraceTooShort("trace does not extend past n_bar");
  PersistenceReport r;
  bool all = true, none = true;
  for (const auto* s : tail) {
    bool coupled = false;
    for (const auto& a : s->agents)
      if (a.level >= 2 && !prediction_index_set(a.info, s->n, 1).empty()) coupled = true;
    r.tail.emplace_back(s->n, coupled);
    all = all && coupled;
    none = none && !coupled;
  }
  r.verdict = all ? CouplingVerdict::persistent : none ? CouplingVerdict::flattened : CouplingVerdict::mixed;
  return r;
}

/// Steps whose final hierarchy has a single level: every agent's plan must
/// equal a solve without any neighbour information. Returns offending (n, agent) pairs.
template <class S, class U, class C>
std::vector<std::pair<Time, AgentId>> independence_check(const RunTrace<S, U, C>& trace,
                                                         const Scenario<S, U, C>& scenario) {
  std::vector<std::pair<Time, AgentId>> bad;
  for (const auto& s : trace.steps) {
    if (s.hierarchy_after.levels.size() > 1) continue;
    for (const auto& a : s.agents) {
      const auto plan = solve_ocp(scenario.model(a.id), a.state, s.n, InfoSet<S>(a.id), scenario.couplings);
      if (!(plan == a.plan)) bad.emplace_back(s.n, a.id);
    }
  }
  return bad;
}

/// Structural invariants of the final hierarchy at every step: levels
/// partition the agents, top-level agents have empty memory, and every lower
/// agent remembers someone strictly above it. Returns a description or empty.
template <class S, class U, class C>
std::string hierarchy_check(const RunTrace<S, U, C>& trace) {
  for (const auto& s : trace.steps) {
    std::vector<AgentId> seen;
    for (const auto& l : s.hierarchy_after.levels) seen.insert(seen.end(), l.begin(), l.end());
    std::sort(seen.begin(), seen.end());
    auto ids = trace.agents;
    std::sort(ids.begin(), ids.end());
    if (seen != ids) return "levels do not partition the agents at n=" + std::to_string(s.n);
    for (const auto& a : s.agents) {
      if (a.level != s.hierarchy_after.level_of(a.id) + 1)
        return "recorded level disagrees with hierarchy at n=" + std::to_string(s.n);
      if ((a.level == 1) != a.memory.empty())
        return "top level and empty memory disagree for agent " + std::to_string(a.id.value) +
               " at n=" + std::to_string(s.n);
      if (a.level >= 2) {
        const bool supported = std::any_of(a.memory.begin(), a.memory.end(), [&](const MemoryEntry& e) {
          return s.hierarchy_after.level_of(e.neighbour) + 1 < a.level;
        });
        if (!supported)
          return "agent " + std::to_string(a.id.value) + " has no remembered neighbour above it at n=" +
                 std::to_string(s.n);
      }
    }
  }
  return {};
}

}  // namespace dnmpc
