#pragma once

// Priority hierarchy with decision memory: deordering, parallel solves,
// conflict-driven demotion and application of the first controls.

#include <algorithm>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dnmpc/core_model.hpp"
#include "dnmpc/info_store.hpp"
#include "dnmpc/ocp_solver.hpp"

namespace dnmpc {

class RuleContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct MemoryEntry {
  AgentId neighbour;
  Time acquired_at = 0;
  friend bool operator==(const MemoryEntry&, const MemoryEntry&) = default;
};

using MemoryList = std::vector<MemoryEntry>;
using DependencyMemory = std::map<AgentId, MemoryList>;

/// Ordered priority lists; levels[0] is the top level P_1.
struct Hierarchy {
  std::vector<std::vector<AgentId>> levels;

  /// 0-based level index of p, or -1.
  [[nodiscard]] int level_of(AgentId p) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
      if (std::find(levels[i].begin(), levels[i].end(), p) != levels[i].end()) return static_cast<int>(i);
    return -1;
  }
  void compact() {
    std::erase_if(levels, [](const auto& l) { return l.empty(); });
  }
  friend bool operator==(const Hierarchy&, const Hierarchy&) = default;
  friend std::ostream& operator<<(std::ostream& os, const Hierarchy& h) {
    for (const auto& level : h.levels) {
      os << '(';
      for (std::size_t j = 0; j < level.size(); ++j) os << (j ? "," : "") << level[j];
      os << ')';
    }
    return os;
  }
};

template <class Cost>
struct PriorityContext {
  Time n = 0;
  /// Value of each agent's current plan.
  std::map<AgentId, Cost> values;
};

template <class Cost = Rational>
struct PriorityRule {
  std::string name;
  std::function<std::vector<AgentId>(std::vector<AgentId>, const PriorityContext<Cost>&)> apply;

  [[nodiscard]] std::vector<AgentId> operator()(const std::vector<AgentId>& list,
                                                const PriorityContext<Cost>& ctx) const {
    auto out = apply(list, ctx);
    auto a = list;
    auto b = out;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) throw RuleContractViolation("priority rule '" + name + "' did not return a permutation");
    return out;
  }
};

struct DeorderingRule {
  std::string name;
  /// Skip the deordering step altogether.
  bool skip = false;
  std::function<MemoryList(const MemoryList&)> apply;

  [[nodiscard]] MemoryList operator()(const MemoryList& memory) const {
    auto out = apply(memory);
    const bool subset = std::all_of(out.begin(), out.end(), [&](const MemoryEntry& e) {
      return std::find(memory.begin(), memory.end(), e) != memory.end();
    });
    if (!subset || out.size() >= memory.size())
      throw RuleContractViolation("deordering rule '" + name + "' did not return a strict subset");
    return out;
  }
};

namespace rules {

template <class Cost = Rational>
PriorityRule<Cost> lexicographic() {
  return {"lexicographic", [](std::vector<AgentId> l, const PriorityContext<Cost>&) {
            std::sort(l.begin(), l.end());
            return l;
          }};
}

template <class Cost = Rational>
PriorityRule<Cost> identity() {
  return {"identity", [](std::vector<AgentId> l, const PriorityContext<Cost>&) { return l; }};
}

/// Largest current plan value first, ties by id.
template <class Cost = Rational>
PriorityRule<Cost> cost_greedy() {
  return {"cost_greedy", [](std::vector<AgentId> l, const PriorityContext<Cost>& ctx) {
            auto value = [&](AgentId p) {
              auto it = ctx.values.find(p);
              return it == ctx.values.end() ? cost_traits<Cost>::zero() : it->second;
            };
            std::stable_sort(l.begin(), l.end(), [&](AgentId a, AgentId b) {
              if (cost_traits<Cost>::less(value(b), value(a))) return true;
              if (cost_traits<Cost>::less(value(a), value(b))) return false;
              return a < b;
            });
            return l;
          }};
}

inline DeorderingRule drop_all() {
  return {"drop_all", false, [](const MemoryList&) { return MemoryList{}; }};
}

/// Forgets the entry acquired first (earliest position among equal times).
inline DeorderingRule drop_oldest() {
  return {"drop_oldest", false, [](const MemoryList& m) {
            auto oldest = std::min_element(m.begin(), m.end(), [](const MemoryEntry& a, const MemoryEntry& b) {
              return a.acquired_at < b.acquired_at;
            });
            MemoryList out;
            for (auto it = m.begin(); it != m.end(); ++it)
              if (it != oldest) out.push_back(*it);
            return out;
          }};
}

inline DeorderingRule never() {
  return {"never", true, [](const MemoryList& m) { return m; }};
}

template <class Cost = Rational>
PriorityRule<Cost> priority_by_name(const std::string& name) {
  if (name == "lexicographic") return lexicographic<Cost>();
  if (name == "identity") return identity<Cost>();
  if (name == "cost_greedy") return cost_greedy<Cost>();
  throw std::invalid_argument("unknown priority rule: " + name);
}

inline DeorderingRule deordering_by_name(const std::string& name) {
  if (name == "drop_all") return drop_all();
  if (name == "drop_oldest") return drop_oldest();
  if (name == "never") return never();
  throw std::invalid_argument("unknown deordering rule: " + name);
}

}  // namespace rules

enum class DemotionReason { violation, dependency };

struct DemotionEvent {
  AgentId agent;
  /// 1-based level the agent left.
  int from_level = 1;
  std::vector<AgentId> inducers;
  DemotionReason reason = DemotionReason::violation;
  friend bool operator==(const DemotionEvent&, const DemotionEvent&) = default;
};

/// A plan made available to other agents during a step, tagged with the
/// (1-based) level of its sender at the time.
struct Publication {
  AgentId source;
  int level = 1;
  friend bool operator==(const Publication&, const Publication&) = default;
};

template <class State, class Control, class Cost = Rational>
struct StepOutcome {
  Time n = 0;
  /// Indexed like the scenario's agents.
  std::vector<Control> applied;
  std::vector<Plan<State, Control, Cost>> plans;
  std::vector<InfoSet<State>> info_used;
  /// Plans and information of the initial solve, before any conflict resolution.
  std::vector<Plan<State, Control, Cost>> initial_plans;
  std::vector<InfoSet<State>> initial_info;
  std::vector<State> next_states;
  Hierarchy hierarchy_before;
  Hierarchy hierarchy_after;
  DependencyMemory memory_after;
  std::vector<DemotionEvent> demotions;
  std::vector<Publication> publications;
};

/// Step 2a: applies Θ to the memory of every agent below the top level and
/// moves it up. Agents left without memory join P_1; the others join the
/// highest level that holds one of their remembered neighbours, if that is
/// above their current level. Empty levels are removed afterwards.
inline void deorder_pass(Hierarchy& h, DependencyMemory& memory, const DeorderingRule& theta) {
  if (theta.skip) return;
  for (std::size_t i = 1; i < h.levels.size(); ++i) {
    const auto members = h.levels[i];
    for (AgentId p : members) {
      auto& mem = memory[p];
      if (!mem.empty()) mem = theta(mem);
      std::optional<std::size_t> target;
      if (mem.empty()) {
        target = 0;
      } else {
        int best = -1;
        for (const auto& e : mem) {
          const int l = h.level_of(e.neighbour);
          if (l >= 0 && (best < 0 || l < best)) best = l;
        }
        if (best >= 0 && static_cast<std::size_t>(best) < i) target = static_cast<std::size_t>(best);
      }
      if (target) {
        std::erase(h.levels[i], p);
        h.levels[*target].push_back(p);
      }
    }
  }
  h.compact();
}

/// Agents among `committed` whose coupling constraints `plan` violates.
/// Local constraint violations are not attributed to anyone.
template <class State, class Control, class Cost>
std::vector<AgentId> detect_violations(const AgentModel<State, Control, Cost>& model,
                                       const Plan<State, Control, Cost>& plan,
                                       const std::vector<const Plan<State, Control, Cost>*>& committed,
                                       const Couplings<State>& couplings) {
  InfoSet<State> info(plan.owner);
  for (const auto* c : committed)
    if (c->owner != plan.owner) info.insert(c->to_record());
  const detail::ConstraintWindow<State, Control, Cost> window(model, plan.solved_at, info, couplings, plan.horizon);
  std::vector<Violation> found;
  for (int k = 0; k <= plan.horizon; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    window.report_state(k, plan.states[ks], found);
    if (k < plan.horizon) window.report_transition(k, plan.states[ks], plan.states[ks + 1], found);
  }
  std::vector<AgentId> out;
  for (const auto& v : found)
    if (v.kind == ViolationKind::coupling) out.insert(out.end(), v.inducers.begin(), v.inducers.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct SchedulerOptions {
  /// Solve members of one level concurrently.
  bool parallel = true;
  SolverOptions solver{};
};

/// Runs one sampling instant of the hierarchical scheme per call and keeps
/// hierarchy and memory between calls.
template <class State, class Control, class Cost = Rational>
class CoveringScheduler {
 public:
  using PlanT = Plan<State, Control, Cost>;
  using Outcome = StepOutcome<State, Control, Cost>;

  CoveringScheduler(const Scenario<State, Control, Cost>& scenario, PriorityRule<Cost> pi, DeorderingRule theta,
                    SchedulerOptions opts = {})
      : scenario_(scenario), pi_(std::move(pi)), theta_(std::move(theta)), opts_(opts) {
    hierarchy_.levels.push_back(scenario.ids());
    for (AgentId p : scenario.ids()) memory_[p];
  }

  [[nodiscard]] const Hierarchy& hierarchy() const { return hierarchy_; }
  [[nodiscard]] const DependencyMemory& memory() const { return memory_; }
  void reset(Hierarchy h, DependencyMemory m) {
    hierarchy_ = std::move(h);
    memory_ = std::move(m);
  }

  /// Steps 2a to 3 at time n for the measured joint state.
  Outcome step(Time n, const std::vector<State>& states, const InfoStore<State>& store) {
    const std::size_t count = scenario_.agents.size();
    if (states.size() != count) throw std::invalid_argument("state vector does not match the agent count");
    Outcome out;
    out.n = n;
    out.hierarchy_before = hierarchy_;

    deorder_pass(hierarchy_, memory_, theta_);

    // Step 2b: everybody solves against stored records of remembered neighbours.
    overlay_.clear();
    plans_.assign(count, std::nullopt);
    info_.assign(count, InfoSet<State>());
    std::vector<AgentId> everyone;
    for (const auto& level : hierarchy_.levels) everyone.insert(everyone.end(), level.begin(), level.end());
    solve_group(everyone, n, states, store, std::nullopt);
    for (std::size_t a = 0; a < count; ++a) {
      out.initial_plans.push_back(*plans_[a]);
      out.initial_info.push_back(info_[a]);
    }
    for (std::size_t i = 0; i < hierarchy_.levels.size(); ++i)
      for (AgentId p : hierarchy_.levels[i]) publish(p, static_cast<int>(i), out);

    priority_pass(n, states, store, out);

    out.hierarchy_after = hierarchy_;
    out.memory_after = memory_;
    for (std::size_t a = 0; a < count; ++a) {
      const auto& plan = *plans_[a];
      out.plans.push_back(plan);
      out.info_used.push_back(info_[a]);
      out.applied.push_back(plan.controls.front());
      out.next_states.push_back(scenario_.agents[a].step(states[a], plan.controls.front()));
    }
    return out;
  }

 private:
  // Info for p: remembered neighbours only. A plan published in this step is
  // used if its sender sits at or above p's level; otherwise the stored record.
  InfoSet<State> build_info(AgentId p, const InfoStore<State>& store, std::optional<int> level) const {
    InfoSet<State> info(p);
    for (const auto& e : memory_.at(p)) {
      if (level) {
        auto it = overlay_.find(e.neighbour);
        if (it != overlay_.end() && it->second <= *level) {
          info.insert(plans_[scenario_.index_of(e.neighbour)]->to_record());
          continue;
        }
      }
      if (const auto* rec = store.find(p, e.neighbour)) info.insert(*rec);
    }
    return info;
  }

  void solve_group(const std::vector<AgentId>& group, Time n, const std::vector<State>& states,
                   const InfoStore<State>& store, std::optional<int> level) {
    std::vector<InfoSet<State>> infos;
    for (AgentId p : group) infos.push_back(build_info(p, store, level));
    auto solve_one = [&](std::size_t g) {
      const std::size_t a = scenario_.index_of(group[g]);
      return solve_ocp(scenario_.agents[a], states[a], n, infos[g], scenario_.couplings, opts_.solver);
    };
    std::vector<PlanT> solved;
    if (opts_.parallel && group.size() > 1) {
      std::vector<std::future<PlanT>> futures;
      for (std::size_t g = 0; g < group.size(); ++g) futures.push_back(std::async(std::launch::async, solve_one, g));
      // Collect in list order so the first failure reported is deterministic.
      std::optional<EmptyAdmissibleSet> failure;
      for (auto& f : futures) {
        try {
          solved.push_back(f.get());
        } catch (const EmptyAdmissibleSet& e) {
          if (!failure) failure = e;
        }
      }
      if (failure) throw *failure;
    } else {
      for (std::size_t g = 0; g < group.size(); ++g) solved.push_back(solve_one(g));
    }
    for (std::size_t g = 0; g < group.size(); ++g) {
      const std::size_t a = scenario_.index_of(group[g]);
      plans_[a] = std::move(solved[g]);
      info_[a] = std::move(infos[g]);
    }
  }

  void publish(AgentId p, int level, Outcome& out) {
    overlay_[p] = level;
    out.publications.push_back({p, level + 1});
  }

  // Step 2c over all levels, top to bottom.
  void priority_pass(Time n, const std::vector<State>& states, const InfoStore<State>& store, Outcome& out) {
    auto& levels = hierarchy_.levels;
    const std::size_t limit = scenario_.agents.size();
    std::vector<const PlanT*> committed;
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (levels.size() > limit) throw std::logic_error("hierarchy exceeds one level per agent");
      if (levels[i].empty()) continue;
      const int li = static_cast<int>(i);
      if (i > 0) {
        solve_group(levels[i], n, states, store, li);
        for (AgentId p : levels[i]) publish(p, li, out);
      }
      if (levels[i].size() >= 2) levels[i] = pi_(levels[i], context(n));

      std::vector<AgentId> kept;
      const auto members = levels[i];
      for (AgentId p : members) {
        const std::size_t a = scenario_.index_of(p);
        std::vector<AgentId> pending;
        for (const auto& e : memory_.at(p)) {
          const int l = hierarchy_.level_of(e.neighbour);
          if (l >= li) pending.push_back(e.neighbour);
        }
        const auto inducers = detect_violations(scenario_.agents[a], *plans_[a], committed, scenario_.couplings);
        if (inducers.empty() && pending.empty()) {
          kept.push_back(p);
          committed.push_back(&*plans_[a]);
          continue;
        }
        if (levels.size() == i + 1) levels.emplace_back();
        levels[i + 1].push_back(p);
        auto& mem = memory_.at(p);
        for (AgentId q : inducers)
          if (std::none_of(mem.begin(), mem.end(), [&](const MemoryEntry& e) { return e.neighbour == q; }))
            mem.push_back({q, n});
        if (inducers.empty()) {
          std::sort(pending.begin(), pending.end());
          out.demotions.push_back({p, li + 1, pending, DemotionReason::dependency});
        } else {
          out.demotions.push_back({p, li + 1, inducers, DemotionReason::violation});
        }
      }
      levels[i] = std::move(kept);
    }
    hierarchy_.compact();
  }

  PriorityContext<Cost> context(Time n) const {
    PriorityContext<Cost> ctx;
    ctx.n = n;
    for (std::size_t a = 0; a < plans_.size(); ++a)
      if (plans_[a]) ctx.values[scenario_.agents[a].id] = plans_[a]->value;
    return ctx;
  }

  const Scenario<State, Control, Cost>& scenario_;
  PriorityRule<Cost> pi_;
  DeorderingRule theta_;
  SchedulerOptions opts_;
  Hierarchy hierarchy_;
  DependencyMemory memory_;
  std::vector<std::optional<PlanT>> plans_;
  std::vector<InfoSet<State>> info_;
  std::map<AgentId, int> overlay_;
};

}  // namespace dnmpc
