#pragma once

// Closed-loop record and its line-delimited JSON form.

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dnmpc/core_model.hpp"
#include "dnmpc/covering_scheduler.hpp"
#include "dnmpc/ocp_solver.hpp"
#include "dnmpc/rational.hpp"

namespace dnmpc {

inline void to_json(nlohmann::ordered_json& j, const Rational& r) { j = {{"num", r.num()}, {"den", r.den()}}; }
inline void from_json(const nlohmann::ordered_json& j, Rational& r) {
  r = Rational(j.at("num").get<std::int64_t>(), j.at("den").get<std::int64_t>());
}
inline void to_json(nlohmann::ordered_json& j, const AgentId& a) { j = a.value; }
inline void from_json(const nlohmann::ordered_json& j, AgentId& a) { a.value = j.get<int>(); }

template <class State, class Control, class Cost = Rational>
struct AgentStep {
  AgentId id;
  State state{};
  Control control{};
  /// Optimal value of the final plan at this step.
  Cost value{};
  /// Stage cost of the applied control at the measured state.
  Cost stage_cost{};
  /// 1-based level in the final hierarchy.
  int level = 1;
  MemoryList memory;
  Plan<State, Control, Cost> plan;
  InfoSet<State> info;
};

template <class State, class Control, class Cost = Rational>
struct StepRecord {
  Time n = 0;
  std::vector<AgentStep<State, Control, Cost>> agents;
  Hierarchy hierarchy_before;
  Hierarchy hierarchy_after;
  std::vector<DemotionEvent> demotions;
};

template <class State, class Control, class Cost = Rational>
struct RunTrace {
  std::string scenario;
  /// Free-form run description (the scenario config when run from files).
  nlohmann::ordered_json header = nlohmann::ordered_json::object();
  std::vector<AgentId> agents;
  std::vector<StepRecord<State, Control, Cost>> steps;
  /// Joint state after the last step; empty when there are no steps.
  std::vector<State> final_states;

  [[nodiscard]] std::size_t index_of(AgentId p) const {
    for (std::size_t a = 0; a < agents.size(); ++a)
      if (agents[a] == p) return a;
    throw std::out_of_range("agent " + std::to_string(p.value) + " not in trace");
  }
  /// V_p(n) over all steps.
  [[nodiscard]] std::vector<Cost> values(AgentId p) const {
    std::vector<Cost> out;
    const auto a = index_of(p);
    for (const auto& s : steps) out.push_back(s.agents[a].value);
    return out;
  }
  /// l_p(n) over all steps.
  [[nodiscard]] std::vector<Cost> stage_costs(AgentId p) const {
    std::vector<Cost> out;
    const auto a = index_of(p);
    for (const auto& s : steps) out.push_back(s.agents[a].stage_cost);
    return out;
  }
};

class TraceFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson hierarchy_json(const Hierarchy& h) {
  ojson out = ojson::array();
  for (const auto& level : h.levels) out.push_back(level);
  return out;
}

inline Hierarchy hierarchy_from(const ojson& j) {
  Hierarchy h;
  for (const auto& level : j) h.levels.push_back(level.get<std::vector<AgentId>>());
  return h;
}

inline ojson memory_json(const MemoryList& m) {
  ojson out = ojson::array();
  for (const auto& e : m) out.push_back({{"neighbour", e.neighbour.value}, {"acquired_at", e.acquired_at}});
  return out;
}

inline MemoryList memory_from(const ojson& j) {
  MemoryList m;
  for (const auto& e : j) m.push_back({AgentId{e.at("neighbour").get<int>()}, e.at("acquired_at").get<Time>()});
  return m;
}

inline const char* reason_name(DemotionReason r) { return r == DemotionReason::violation ? "violation" : "dependency"; }

template <class State>
ojson record_json(const NeighborRecord<State>& r) {
  ojson out;
  out["source"] = r.source.value;
  out["solved_at"] = r.solved_at;
  out["horizon"] = r.horizon;
  out["states"] = r.states;
  return out;
}

}  // namespace detail

/// Header line, one line per step, and a closing line with the final state.
template <class State, class Control, class Cost>
void write_jsonl(const RunTrace<State, Control, Cost>& trace, std::ostream& os) {
  using detail::ojson;
  ojson header;
  header["scenario"] = trace.scenario;
  header["agents"] = trace.agents;
  header["config"] = trace.header;
  os << ojson{{"header", header}}.dump() << '\n';

  for (const auto& s : trace.steps) {
    ojson line;
    line["n"] = s.n;
    ojson states = ojson::array(), controls = ojson::array(), values = ojson::array(), costs = ojson::array(),
          levels = ojson::array(), memory = ojson::array(), plans = ojson::array(), info = ojson::array();
    for (const auto& a : s.agents) {
      states.push_back(a.state);
      controls.push_back(a.control);
      values.push_back(a.value);
      costs.push_back(a.stage_cost);
      levels.push_back(a.level);
      memory.push_back(detail::memory_json(a.memory));
      ojson plan;
      plan["solved_at"] = a.plan.solved_at;
      plan["horizon"] = a.plan.horizon;
      plan["controls"] = a.plan.controls;
      plan["states"] = a.plan.states;
      plan["value"] = a.plan.value;
      plans.push_back(plan);
      ojson records = ojson::array();
      for (const auto& [q, r] : a.info.records) records.push_back(detail::record_json(r));
      info.push_back(records);
    }
    line["states"] = states;
    line["controls"] = controls;
    line["values"] = values;
    line["stage_costs"] = costs;
    line["levels"] = levels;
    line["memory"] = memory;
    ojson demotions = ojson::array();
    for (const auto& d : s.demotions)
      demotions.push_back({{"agent", d.agent.value},
                           {"from_level", d.from_level},
                           {"inducers", d.inducers},
                           {"reason", detail::reason_name(d.reason)}});
    line["demotions"] = demotions;
    line["hierarchy_before"] = detail::hierarchy_json(s.hierarchy_before);
    line["hierarchy_after"] = detail::hierarchy_json(s.hierarchy_after);
    line["plans"] = plans;
    line["info"] = info;
    os << line.dump() << '\n';
  }
  if (!trace.steps.empty() || !trace.final_states.empty()) {
    ojson final_line;
    final_line["final"] = {{"n", trace.steps.empty() ? 0 : trace.steps.back().n + 1}, {"states", trace.final_states}};
    os << final_line.dump() << '\n';
  }
}

template <class State, class Control, class Cost = Rational>
RunTrace<State, Control, Cost> read_jsonl(std::istream& is) {
  using detail::ojson;
  RunTrace<State, Control, Cost> trace;
  std::string text;
  bool have_header = false;
  int line_no = 0;
  try {
    while (std::getline(is, text)) {
      ++line_no;
      if (text.empty()) continue;
      const auto j = ojson::parse(text);
      if (j.contains("header")) {
        const auto& h = j.at("header");
        trace.scenario = h.at("scenario").get<std::string>();
        trace.agents = h.at("agents").get<std::vector<AgentId>>();
        trace.header = h.at("config");
        have_header = true;
        continue;
      }
      if (!have_header) throw TraceFormatError("trace does not start with a header line");
      if (j.contains("final")) {
        trace.final_states = j.at("final").at("states").get<std::vector<State>>();
        continue;
      }
      StepRecord<State, Control, Cost> s;
      s.n = j.at("n").get<Time>();
      const std::size_t count = trace.agents.size();
      for (const char* key : {"states", "controls", "values", "stage_costs", "levels", "memory", "plans", "info"})
        if (j.at(key).size() != count) throw TraceFormatError(std::string("field '") + key + "' has wrong length");
      for (std::size_t a = 0; a < count; ++a) {
        AgentStep<State, Control, Cost> as;
        as.id = trace.agents[a];
        as.state = j.at("states")[a].template get<State>();
        as.control = j.at("controls")[a].template get<Control>();
        as.value = j.at("values")[a].template get<Cost>();
        as.stage_cost = j.at("stage_costs")[a].template get<Cost>();
        as.level = j.at("levels")[a].template get<int>();
        as.memory = detail::memory_from(j.at("memory")[a]);
        const auto& p = j.at("plans")[a];
        as.plan.owner = as.id;
        as.plan.solved_at = p.at("solved_at").get<Time>();
        as.plan.horizon = p.at("horizon").get<int>();
        as.plan.controls = p.at("controls").get<std::vector<Control>>();
        as.plan.states = p.at("states").get<std::vector<State>>();
        as.plan.value = p.at("value").get<Cost>();
        as.info = InfoSet<State>(as.id);
        for (const auto& r : j.at("info")[a])
          as.info.insert({AgentId{r.at("source").get<int>()}, r.at("solved_at").get<Time>(), r.at("horizon").get<int>(),
                          r.at("states").get<std::vector<State>>()});
        s.agents.push_back(std::move(as));
      }
      for (const auto& d : j.at("demotions")) {
        const auto reason = d.at("reason").get<std::string>();
        if (reason != "violation" && reason != "dependency") throw TraceFormatError("unknown demotion reason");
        s.demotions.push_back({AgentId{d.at("agent").get<int>()}, d.at("from_level").get<int>(),
                               d.at("inducers").get<std::vector<AgentId>>(),
                               reason == "violation" ? DemotionReason::violation : DemotionReason::dependency});
      }
      s.hierarchy_before = detail::hierarchy_from(j.at("hierarchy_before"));
      s.hierarchy_after = detail::hierarchy_from(j.at("hierarchy_after"));
      trace.steps.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw TraceFormatError("trace line " + std::to_string(line_no) + ": " + e.what());
  } catch (const StructuralError& e) {
    throw TraceFormatError("trace line " + std::to_string(line_no) + ": " + e.what());
  } catch (const std::logic_error& e) {
    throw TraceFormatError("trace line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!have_header) throw TraceFormatError("empty trace");
  return trace;
}

}  // namespace dnmpc
