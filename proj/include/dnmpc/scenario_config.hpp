#pragma once

// Scenario configuration files (JSON) for the grid world.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dnmpc/bridge_json.hpp"
#include "dnmpc/bridge_world.hpp"
#include "dnmpc/covering_scheduler.hpp"
#include "dnmpc/sim_harness.hpp"

namespace dnmpc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AdjacencyPhase {
  Time from = 0;
  std::vector<std::pair<int, int>> edges;
};

struct LinkConfig {
  int src = 0;
  int dst = 0;
  std::optional<double> loss;
  std::optional<int> delay;
};

struct ScenarioConfig {
  std::string world = "bridge_default";
  std::vector<bridge::AgentSpec> agents;
  int horizon = 6;
  bridge::MoveMode moves = bridge::MoveMode::orthogonal;
  bridge::SwapRule swap_rule = bridge::SwapRule::swap_only;
  std::string priority_rule = "lexicographic";
  std::string deorder_rule = "drop_all";
  int steps = 8;
  double loss = 0.0;
  int delay = 0;
  /// Empty: complete graph at every time.
  std::vector<AdjacencyPhase> adjacency;
  std::vector<LinkConfig> links;
  std::uint64_t seed = 0;
  Rational cost_weight{0};
  std::optional<bridge::Box> bounds;
  std::optional<std::vector<int>> lane_rows;
  std::optional<std::vector<int>> bridge_columns;
  bool parallel = true;
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline void require_keys(const ojson& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

inline Rational rational_from(const ojson& j) {
  if (j.is_number_integer()) return Rational(j.get<std::int64_t>());
  if (j.is_string()) return Rational::parse(j.get<std::string>());
  throw ConfigError("cost_weight must be an integer or a \"p/q\" string");
}

inline bridge::GridState cell_from(const ojson& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw ConfigError(what + " must be [x1, x2]");
  return {j[0].get<int>(), j[1].get<int>()};
}

}  // namespace detail

/// Parses and validates a configuration document. Unknown keys are errors.
inline ScenarioConfig parse_config(const nlohmann::ordered_json& j) {
  using detail::ojson;
  detail::require_keys(j,
                       {"world", "agents", "horizon", "moves", "swap_rule", "priority_rule", "deorder_rule", "steps",
                        "network", "seed", "cost_weight", "bounds", "lane_rows", "bridge_columns", "parallel"},
                       "config");
  ScenarioConfig c;
  try {
    if (j.contains("world")) c.world = j.at("world").get<std::string>();
    if (j.contains("horizon")) c.horizon = j.at("horizon").get<int>();
    if (c.horizon < 1) throw ConfigError("horizon must be at least 1");
    if (j.contains("agents")) {
      for (const auto& a : j.at("agents")) {
        detail::require_keys(a, {"id", "start", "reference", "horizon"}, "agent");
        bridge::AgentSpec spec;
        spec.id = AgentId{a.at("id").get<int>()};
        spec.start = detail::cell_from(a.at("start"), "start");
        spec.reference = detail::cell_from(a.at("reference"), "reference");
        spec.horizon = a.contains("horizon") ? a.at("horizon").get<int>() : c.horizon;
        if (spec.horizon < 1) throw ConfigError("agent horizon must be at least 1");
        c.agents.push_back(spec);
      }
      std::set<int> ids;
      for (const auto& a : c.agents)
        if (!ids.insert(a.id.value).second) throw ConfigError("duplicate agent id " + std::to_string(a.id.value));
      if (c.agents.empty()) throw ConfigError("agents must not be empty");
    }
    if (j.contains("moves")) {
      const auto m = j.at("moves").get<std::string>();
      if (m == "orthogonal")
        c.moves = bridge::MoveMode::orthogonal;
      else if (m == "king")
        c.moves = bridge::MoveMode::king;
      else
        throw ConfigError("moves must be orthogonal or king");
    }
    if (j.contains("swap_rule")) {
      const auto s = j.at("swap_rule").get<std::string>();
      if (s == "swap_only")
        c.swap_rule = bridge::SwapRule::swap_only;
      else if (s == "strict")
        c.swap_rule = bridge::SwapRule::strict;
      else
        throw ConfigError("swap_rule must be swap_only or strict");
    }
    if (j.contains("priority_rule")) c.priority_rule = j.at("priority_rule").get<std::string>();
    if (j.contains("deorder_rule")) c.deorder_rule = j.at("deorder_rule").get<std::string>();
    rules::priority_by_name<Rational>(c.priority_rule);
    rules::deordering_by_name(c.deorder_rule);
    if (j.contains("steps")) c.steps = j.at("steps").get<int>();
    if (c.steps < 1) throw ConfigError("steps must be at least 1");
    if (j.contains("network")) {
      const auto& net = j.at("network");
      detail::require_keys(net, {"loss", "delay", "adjacency", "links"}, "network");
      if (net.contains("loss")) c.loss = net.at("loss").get<double>();
      if (net.contains("delay")) c.delay = net.at("delay").get<int>();
      if (net.contains("adjacency")) {
        for (const auto& phase : net.at("adjacency")) {
          detail::require_keys(phase, {"from", "edges"}, "adjacency phase");
          AdjacencyPhase p;
          p.from = phase.at("from").get<Time>();
          for (const auto& e : phase.at("edges")) {
            if (!e.is_array() || e.size() != 2) throw ConfigError("edge must be [src, dst]");
            p.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
          }
          c.adjacency.push_back(p);
        }
        std::sort(c.adjacency.begin(), c.adjacency.end(),
                  [](const AdjacencyPhase& a, const AdjacencyPhase& b) { return a.from < b.from; });
      }
      if (net.contains("links")) {
        for (const auto& l : net.at("links")) {
          detail::require_keys(l, {"src", "dst", "loss", "delay"}, "link");
          LinkConfig lc;
          lc.src = l.at("src").get<int>();
          lc.dst = l.at("dst").get<int>();
          if (l.contains("loss")) lc.loss = l.at("loss").get<double>();
          if (l.contains("delay")) lc.delay = l.at("delay").get<int>();
          c.links.push_back(lc);
        }
      }
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("cost_weight")) c.cost_weight = detail::rational_from(j.at("cost_weight"));
    if (c.cost_weight < Rational(0)) throw ConfigError("cost_weight must be nonnegative");
    if (j.contains("bounds")) {
      const auto b = j.at("bounds").get<std::vector<int>>();
      if (b.size() != 4 || b[0] > b[1] || b[2] > b[3])
        throw ConfigError("bounds must be [x1_min, x1_max, x2_min, x2_max]");
      c.bounds = bridge::Box{b[0], b[1], b[2], b[3]};
    }
    if (j.contains("lane_rows")) c.lane_rows = j.at("lane_rows").get<std::vector<int>>();
    if (j.contains("bridge_columns")) c.bridge_columns = j.at("bridge_columns").get<std::vector<int>>();
    if (j.contains("parallel")) c.parallel = j.at("parallel").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(e.what());
  } catch (const std::domain_error& e) {
    throw ConfigError(e.what());
  }
  if (c.world != "bridge_default" && c.world != "corridor_deadlock" && c.world != "custom")
    throw ConfigError("unknown world '" + c.world + "'");
  if (c.world == "custom" && c.agents.empty()) throw ConfigError("custom world needs agents");
  NetworkModel probe;
  probe.loss = c.loss;
  probe.delay = c.delay;
  for (const auto& l : c.links) probe.links[{AgentId{l.src}, AgentId{l.dst}}] = {l.loss, l.delay};
  try {
    probe.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Normalized form, written into trace headers; parse_config accepts it back.
inline nlohmann::ordered_json config_to_json(const ScenarioConfig& c) {
  nlohmann::ordered_json j;
  j["world"] = c.world;
  if (!c.agents.empty()) {
    auto agents = nlohmann::ordered_json::array();
    for (const auto& a : c.agents)
      agents.push_back({{"id", a.id.value}, {"start", a.start}, {"reference", a.reference}, {"horizon", a.horizon}});
    j["agents"] = agents;
  }
  j["horizon"] = c.horizon;
  j["moves"] = c.moves == bridge::MoveMode::king ? "king" : "orthogonal";
  j["swap_rule"] = c.swap_rule == bridge::SwapRule::strict ? "strict" : "swap_only";
  j["priority_rule"] = c.priority_rule;
  j["deorder_rule"] = c.deorder_rule;
  j["steps"] = c.steps;
  nlohmann::ordered_json net;
  net["loss"] = c.loss;
  net["delay"] = c.delay;
  auto phases = nlohmann::ordered_json::array();
  for (const auto& p : c.adjacency) {
    auto edges = nlohmann::ordered_json::array();
    for (const auto& [s, d] : p.edges) edges.push_back({s, d});
    phases.push_back({{"from", p.from}, {"edges", edges}});
  }
  net["adjacency"] = phases;
  auto links = nlohmann::ordered_json::array();
  for (const auto& l : c.links) {
    nlohmann::ordered_json lj{{"src", l.src}, {"dst", l.dst}};
    if (l.loss) lj["loss"] = *l.loss;
    if (l.delay) lj["delay"] = *l.delay;
    links.push_back(lj);
  }
  net["links"] = links;
  j["network"] = net;
  j["seed"] = c.seed;
  j["cost_weight"] = c.cost_weight.str();
  if (c.bounds) j["bounds"] = {c.bounds->x1_min, c.bounds->x1_max, c.bounds->x2_min, c.bounds->x2_max};
  if (c.lane_rows) j["lane_rows"] = *c.lane_rows;
  if (c.bridge_columns) j["bridge_columns"] = *c.bridge_columns;
  j["parallel"] = c.parallel;
  return j;
}

inline bridge::BridgeOptions bridge_options(const ScenarioConfig& c) {
  bridge::BridgeOptions o;
  o.moves = c.moves;
  o.swap_rule = c.swap_rule;
  o.cost_weight = c.cost_weight;
  o.bounds = c.bounds;
  if (c.world == "corridor_deadlock") o.lane_rows = {0};
  if (c.lane_rows) o.lane_rows = *c.lane_rows;
  if (c.bridge_columns) o.bridge_columns = *c.bridge_columns;
  return o;
}

inline bridge::BridgeScenario build_scenario(const ScenarioConfig& c) {
  auto specs = c.agents.empty() ? bridge::default_agents(c.horizon) : c.agents;
  try {
    return bridge::build_custom_scenario(specs, bridge_options(c), c.world);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline NetworkModel network_model(const ScenarioConfig& c) {
  NetworkModel net;
  net.loss = c.loss;
  net.delay = c.delay;
  net.seed = c.seed;
  for (const auto& l : c.links) net.links[{AgentId{l.src}, AgentId{l.dst}}] = {l.loss, l.delay};
  if (!c.adjacency.empty()) {
    net.adjacency = [phases = c.adjacency](Time t, AgentId src, AgentId dst) {
      const AdjacencyPhase* active = nullptr;
      for (const auto& p : phases)
        if (p.from <= t) active = &p;
      if (!active) return true;
      return std::find(active->edges.begin(), active->edges.end(), std::make_pair(src.value, dst.value)) !=
             active->edges.end();
    };
  }
  return net;
}

inline RunOptions run_options(const ScenarioConfig& c) {
  RunOptions o;
  o.steps = c.steps;
  o.network = network_model(c);
  o.scheduler.parallel = c.parallel;
  return o;
}

using BridgeTrace = RunTrace<bridge::GridState, bridge::GridControl, Rational>;

/// Runs the configured closed loop and stamps the normalized config into the trace.
inline BridgeTrace run_config(const ScenarioConfig& c) {
  const auto sc = build_scenario(c);
  auto trace = run_closed_loop(sc, rules::priority_by_name<Rational>(c.priority_rule),
                               rules::deordering_by_name(c.deorder_rule), run_options(c));
  trace.header = config_to_json(c);
  return trace;
}

}  // namespace dnmpc
