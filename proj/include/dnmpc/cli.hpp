#pragma once

// Command implementations behind the dnmpc executable. Each returns a process
// exit code and writes diagnostics to the given error stream.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dnmpc/bridge_json.hpp"
#include "dnmpc/run_trace.hpp"
#include "dnmpc/scenario_config.hpp"
#include "dnmpc/sim_harness.hpp"
#include "dnmpc/stability_lab.hpp"

namespace dnmpc::cli {

enum ExitCode : int { ok = 0, usage = 1, infeasible = 2, verification_failed = 3 };

/// DNMPC_SEED, when set, replaces the configured seed.
inline void apply_seed_override(ScenarioConfig& c) {
  const char* env = std::getenv("DNMPC_SEED");
  if (!env || !*env) return;
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(env, &pos);
    if (env[pos] != '\0') throw std::invalid_argument(env);
    c.seed = v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("DNMPC_SEED is not an unsigned integer: ") + env);
  }
}

inline ScenarioConfig load_with_env(const std::string& path) {
  auto c = load_config(path);
  apply_seed_override(c);
  return c;
}

inline BridgeTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TraceFormatError("cannot read trace file " + path);
  return read_jsonl<bridge::GridState, bridge::GridControl, Rational>(in);
}

inline int cmd_run(const std::string& config_path, const std::string& out_path, std::ostream& err) {
  try {
    const auto c = load_with_env(config_path);
    const auto trace = run_config(c);
    std::ofstream out(out_path);
    if (!out) {
      err << "error: cannot write " << out_path << '\n';
      return usage;
    }
    write_jsonl(trace, out);
    return ok;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return usage;
  } catch (const EmptyAdmissibleSet& e) {
    err << "infeasible: " << e.what() << '\n';
    return infeasible;
  }
}

/// One CSV row per horizon: N, V(x(0)), V(x(1)), local alpha, binding index.
inline int cmd_sweep(const std::string& config_path, int from, int to, int agent, std::ostream& out,
                     std::ostream& err) {
  if (from < 1 || to < from) {
    err << "error: horizons must satisfy 1 <= A <= B\n";
    return usage;
  }
  ScenarioConfig base;
  try {
    base = load_with_env(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return usage;
  }
  if (base.steps < 2) base.steps = 2;
  int code = ok;
  out << "N,V0,V1,alpha,binding_index\n";
  for (int N = from; N <= to; ++N) {
    auto c = base;
    c.horizon = N;
    for (auto& a : c.agents) a.horizon = N;
    try {
      const auto trace = run_config(c);
      const AgentId p{agent};
      const auto V = trace.values(p);
      const auto report = local_alpha(trace, p);
      out << N << ',' << V[0].str() << ',' << V[1].str() << ',' << (report.alpha ? report.alpha->str() : "invalid")
          << ',' << (report.binding_index ? std::to_string(*report.binding_index) : "") << '\n';
    } catch (const EmptyAdmissibleSet& e) {
      out << N << ",infeasible,,,\n";
      err << "N=" << N << ": " << e.what() << '\n';
      code = infeasible;
    } catch (const std::out_of_range& e) {
      err << "error: " << e.what() << '\n';
      return usage;
    } catch (const ConfigError& e) {
      err << "config error: " << e.what() << '\n';
      return usage;
    }
  }
  return code;
}

inline std::vector<Rational> parse_weights(const std::string& text) {
  std::vector<Rational> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(Rational::parse(item));
  return out;
}

inline int cmd_alpha(const std::string& trace_path, const std::optional<std::string>& weights, bool per_agent,
                     std::ostream& out, std::ostream& err) {
  try {
    const auto trace = load_trace(trace_path);
    if (per_agent || !weights) {
      for (AgentId p : trace.agents) out << "agent " << p.value << '\n' << render(local_alpha(trace, p));
    }
    if (weights) {
      out << "weighted " << *weights << '\n' << render(weighted_alpha(trace, parse_weights(*weights)));
    }
    return ok;
  } catch (const TraceFormatError& e) {
    err << "invalid trace: " << e.what() << '\n';
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
  }
  return usage;
}

struct VerifyOptions {
  int cases = 100;
  int max_horizon = 4;
  std::optional<std::uint64_t> seed;
  bool inject_fault = false;
  /// Closed-loop steps per case; the config's value if unset.
  std::optional<int> steps;
};

namespace detail {

inline std::string describe_case(const ScenarioConfig& c) {
  return config_to_json(c).dump();
}

}  // namespace detail

/// Randomized starts, references and horizons; every plan of every step is
/// compared with exhaustive enumeration and every trace is checked for
/// feasibility.
inline int cmd_verify(const std::string& config_path, const VerifyOptions& v, std::ostream& out, std::ostream& err) {
  if (v.cases < 1 || v.max_horizon < 1) {
    err << "error: --cases and --max-horizon must be at least 1\n";
    return usage;
  }
  ScenarioConfig base;
  try {
    base = load_with_env(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return usage;
  }
  if (v.steps) base.steps = *v.steps;
  std::mt19937_64 rng(v.seed.value_or(base.seed));
  std::uniform_int_distribution<int> col(-3, 3), row(-1, 1), horizon(1, v.max_horizon);
  const auto ids = base.agents.empty() ? std::vector<AgentId>{AgentId{1}, AgentId{2}} : [&] {
    std::vector<AgentId> out;
    for (const auto& a : base.agents) out.push_back(a.id);
    return out;
  }();
  int infeasible_cases = 0;
  for (int k = 0; k < v.cases; ++k) {
    auto c = base;
    c.world = base.world == "corridor_deadlock" ? base.world : "custom";
    c.agents.clear();
    const auto opts = bridge_options(c);
    auto probe = bridge::make_agent({AgentId{0}, {0, 0}, {0, 0}, 1}, opts);
    auto draw_cell = [&](const std::vector<bridge::GridState>& taken) {
      for (;;) {
        const bridge::GridState s{col(rng), row(rng)};
        if (probe.local_state_ok(s) && std::find(taken.begin(), taken.end(), s) == taken.end()) return s;
      }
    };
    std::vector<bridge::GridState> starts, refs;
    for (AgentId id : ids) {
      starts.push_back(draw_cell(starts));
      refs.push_back(draw_cell(refs));
      c.agents.push_back({id, starts.back(), refs.back(), horizon(rng)});
    }
    try {
      const auto sc = build_scenario(c);
      RunOptions ro = run_options(c);
      ro.scheduler.solver.inject_pruning_fault = v.inject_fault;
      const auto trace = run_closed_loop(sc, rules::priority_by_name<Rational>(c.priority_rule),
                                         rules::deordering_by_name(c.deorder_rule), ro);
      for (const auto& s : trace.steps) {
        for (const auto& a : s.agents) {
          const auto oracle = enumerate_oracle(sc.model(a.id), a.state, s.n, a.info, sc.couplings);
          if (oracle.value != a.plan.value || oracle.controls != a.plan.controls) {
            out << "FAIL case " << k << ": solver and enumeration disagree for agent " << a.id.value << " at n=" << s.n
                << " (solver " << a.plan.value << ", enumeration " << oracle.value << ")\n"
                << "inputs: " << detail::describe_case(c) << '\n';
            return verification_failed;
          }
        }
      }
      feasibility_check(trace, sc);
    } catch (const EmptyAdmissibleSet&) {
      ++infeasible_cases;  // surfaced as an error instead of an infeasible trace
    } catch (const InfeasibleAt& e) {
      out << "FAIL case " << k << ": " << e.what() << "\ninputs: " << detail::describe_case(c) << '\n';
      return verification_failed;
    } catch (const BudgetExceeded& e) {
      err << "error: " << e.what() << '\n';
      return usage;
    }
  }
  out << "verified " << v.cases << " cases (" << infeasible_cases << " stopped on an empty admissible set)\n";
  return ok;
}

inline int cmd_export(const std::string& trace_path, const std::string& format, std::ostream& out,
                      std::ostream& err) {
  if (format != "csv" && format != "plotdata") {
    err << "error: unknown format '" << format << "'\n";
    return usage;
  }
  BridgeTrace trace;
  try {
    trace = load_trace(trace_path);
  } catch (const TraceFormatError& e) {
    err << "invalid trace: " << e.what() << '\n';
    return usage;
  }
  if (format == "csv") {
    out << "n,agent,x1,x2,V,l,level\n";
    for (const auto& s : trace.steps)
      for (const auto& a : s.agents)
        out << s.n << ',' << a.id.value << ',' << a.state.x1 << ',' << a.state.x2 << ',' << a.value.str() << ','
            << a.stage_cost.str() << ',' << a.level << '\n';
    return ok;
  }
  for (AgentId p : trace.agents) {
    out << "# agent " << p.value << ": n V\n";
    const auto a = trace.index_of(p);
    for (const auto& s : trace.steps) out << s.n << ' ' << s.agents[a].value.to_double() << '\n';
    out << '\n';
  }
  return ok;
}

}  // namespace dnmpc::cli
