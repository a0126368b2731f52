#pragma once

// Closed-loop driver with a lossy, delayed, time-varying network between steps.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dnmpc/core_model.hpp"
#include "dnmpc/covering_scheduler.hpp"
#include "dnmpc/info_store.hpp"
#include "dnmpc/ocp_solver.hpp"
#include "dnmpc/run_trace.hpp"

namespace dnmpc {

struct LinkOverride {
  std::optional<double> loss;
  std::optional<int> delay;
};

/// Cross-step communication. Messages inside a step are always delivered.
struct NetworkModel {
  /// Whether the directed edge src -> dst exists at time t. Empty: complete graph.
  std::function<bool(Time, AgentId, AgentId)> adjacency;
  double loss = 0.0;
  /// Steps until a record sent at n is usable; 0 and 1 both mean "next step".
  int delay = 0;
  std::uint64_t seed = 0;
  std::map<std::pair<AgentId, AgentId>, LinkOverride> links;

  void validate() const {
    auto check = [](double loss, int delay) {
      if (!(loss >= 0.0 && loss <= 1.0)) throw std::invalid_argument("loss must lie in [0, 1]");
      if (delay < 0) throw std::invalid_argument("delay must be nonnegative");
    };
    check(loss, delay);
    for (const auto& [edge, o] : links) check(o.loss.value_or(loss), o.delay.value_or(delay));
  }
  [[nodiscard]] double loss_on(AgentId src, AgentId dst) const {
    auto it = links.find({src, dst});
    return it != links.end() && it->second.loss ? *it->second.loss : loss;
  }
  [[nodiscard]] int delay_on(AgentId src, AgentId dst) const {
    auto it = links.find({src, dst});
    return it != links.end() && it->second.delay ? *it->second.delay : delay;
  }
};

template <class State>
struct Message {
  AgentId source;
  AgentId recipient;
  NeighborRecord<State> record;
};

enum class DeliveryStatus { delivered, scheduled, lost, no_link };

struct Delivery {
  AgentId source;
  AgentId recipient;
  DeliveryStatus status = DeliveryStatus::delivered;
  Time due = 0;
};

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Routes messages sent at time n into the store. One random draw is taken
/// per message, in (recipient, source) order, whether or not it is needed.
template <class State>
std::vector<Delivery> network_apply(std::vector<Message<State>> messages, const NetworkModel& net, Time n,
                                    std::mt19937_64& rng, InfoStore<State>& store) {
  std::stable_sort(messages.begin(), messages.end(), [](const Message<State>& a, const Message<State>& b) {
    return std::tie(a.recipient, a.source) < std::tie(b.recipient, b.source);
  });
  std::vector<Delivery> out;
  for (auto& m : messages) {
    const double u = unit_draw(rng);
    Delivery d{m.source, m.recipient, DeliveryStatus::delivered, n};
    if (net.adjacency && !net.adjacency(n, m.source, m.recipient)) {
      d.status = DeliveryStatus::no_link;
    } else if (u < net.loss_on(m.source, m.recipient)) {
      d.status = DeliveryStatus::lost;
    } else {
      const int delay = net.delay_on(m.source, m.recipient);
      d.due = n + delay;
      if (delay == 0) {
        store.offer(m.recipient, m.record);
      } else {
        d.status = DeliveryStatus::scheduled;
        store.schedule(d.due, m.recipient, std::move(m.record));
      }
    }
    out.push_back(d);
  }
  return out;
}

/// The initial joint state breaks a constraint.
class InfeasibleInitialState : public EmptyAdmissibleSet {
 public:
  explicit InfeasibleInitialState(AgentId agent) : EmptyAdmissibleSet(agent, 0) {}
};

struct RunOptions {
  int steps = 8;
  NetworkModel network;
  SchedulerOptions scheduler;
};

/// Repeats the scheduler step `steps` times from the scenario's initial state.
/// Infeasible subproblems propagate as EmptyAdmissibleSet carrying the step.
template <class State, class Control, class Cost>
RunTrace<State, Control, Cost> run_closed_loop(const Scenario<State, Control, Cost>& scenario, PriorityRule<Cost> pi,
                                               DeorderingRule theta, const RunOptions& opts) {
  if (opts.steps < 1) throw std::invalid_argument("number of steps must be at least 1");
  opts.network.validate();
  for (const auto& m : scenario.agents) m.validate();
  if (auto v = first_state_violation(scenario, std::span<const State>(scenario.initial_states)))
    throw InfeasibleInitialState(v->agents.front());

  RunTrace<State, Control, Cost> trace;
  trace.scenario = scenario.name;
  trace.agents = scenario.ids();

  CoveringScheduler<State, Control, Cost> scheduler(scenario, std::move(pi), std::move(theta), opts.scheduler);
  InfoStore<State> store;
  std::mt19937_64 rng(opts.network.seed);
  std::vector<State> states = scenario.initial_states;

  for (Time n = 0; n < opts.steps; ++n) {
    store.advance(n);
    const auto outcome = scheduler.step(n, states, store);

    StepRecord<State, Control, Cost> rec;
    rec.n = n;
    rec.hierarchy_before = outcome.hierarchy_before;
    rec.hierarchy_after = outcome.hierarchy_after;
    rec.demotions = outcome.demotions;
    std::vector<Message<State>> messages;
    for (std::size_t a = 0; a < scenario.agents.size(); ++a) {
      const auto& model = scenario.agents[a];
      AgentStep<State, Control, Cost> as;
      as.id = model.id;
      as.state = states[a];
      as.control = outcome.applied[a];
      as.value = outcome.plans[a].value;
      as.stage_cost = model.stage_cost(states[a], outcome.applied[a]);
      as.level = outcome.hierarchy_after.level_of(model.id) + 1;
      as.memory = outcome.memory_after.at(model.id);
      as.plan = outcome.plans[a];
      as.info = outcome.info_used[a];
      rec.agents.push_back(std::move(as));
      for (const auto& other : scenario.agents)
        if (other.id != model.id) messages.push_back({model.id, other.id, outcome.plans[a].to_record()});
    }
    trace.steps.push_back(std::move(rec));
    network_apply(std::move(messages), opts.network, n, rng, store);
    states = outcome.next_states;
  }
  trace.final_states = states;
  return trace;
}

}  // namespace dnmpc
