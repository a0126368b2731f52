#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dnmpc/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical distributed NMPC on a grid world"};
  app.require_subcommand(1);

  std::string config, out_path, trace_path, format = "csv";
  auto* run = app.add_subcommand("run", "simulate a scenario and write a JSONL trace");
  run->add_option("config", config, "scenario config (JSON)")->required();
  run->add_option("--out", out_path, "trace output path")->required();

  int from = 1, to = 1, agent = 2;
  std::string horizons;
  auto* sweep = app.add_subcommand("sweep", "tabulate values and alpha over a horizon range");
  sweep->add_option("config", config)->required();
  sweep->add_option("--horizons", horizons, "range A..B")->required();
  sweep->add_option("--agent", agent, "agent id")->capture_default_str();

  std::optional<std::string> weights;
  bool per_agent = false;
  auto* alpha = app.add_subcommand("alpha", "relaxed Lyapunov alpha of a trace");
  alpha->add_option("--trace", trace_path)->required();
  auto* wopt = alpha->add_option("--weights", weights, "comma-separated positive weights, e.g. 1,1/2");
  alpha->add_flag("--per-agent", per_agent)->excludes(wopt);

  dnmpc::cli::VerifyOptions vopts;
  std::optional<std::uint64_t> vseed;
  std::optional<int> vsteps;
  auto* verify = app.add_subcommand("verify", "compare the solver with exhaustive enumeration");
  verify->add_option("config", config)->required();
  verify->add_option("--cases", vopts.cases)->capture_default_str();
  verify->add_option("--max-horizon", vopts.max_horizon)->capture_default_str();
  verify->add_option("--seed", vseed);
  verify->add_option("--steps", vsteps);
  verify->add_flag("--inject-fault", vopts.inject_fault)->group("");

  auto* exp = app.add_subcommand("export", "flatten a trace to csv or plot data");
  exp->add_option("--trace", trace_path)->required();
  exp->add_option("--format", format)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dnmpc::cli::usage;
  }

  using namespace dnmpc::cli;
  try {
    if (*run) return cmd_run(config, out_path, std::cerr);
    if (*sweep) {
      const auto dots = horizons.find("..");
      if (dots == std::string::npos) {
        std::cerr << "error: --horizons expects A..B\n";
        return usage;
      }
      try {
        from = std::stoi(horizons.substr(0, dots));
        to = std::stoi(horizons.substr(dots + 2));
      } catch (const std::exception&) {
        std::cerr << "error: --horizons expects A..B\n";
        return usage;
      }
      return cmd_sweep(config, from, to, agent, std::cout, std::cerr);
    }
    if (*alpha) return cmd_alpha(trace_path, weights, per_agent, std::cout, std::cerr);
    if (*verify) {
      vopts.seed = vseed;
      vopts.steps = vsteps;
      return cmd_verify(config, vopts, std::cout, std::cerr);
    }
    if (*exp) return cmd_export(trace_path, format, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  }
  return usage;
}
