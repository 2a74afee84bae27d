// polychaos: scenario runner.
//
//   polychaos <propagate|smpc|estimate|compare> --config FILE [--out DIR]
//             [--seed N] [--mc-samples N] [--quiet]
//
// Exit status 0 on success, 2 when a closed loop hit mid-run infeasibility,
// 1 on any config or runtime error (reported as JSON on stderr).

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "polychaos/scenario.hpp"

namespace {

using nlohmann::json;
using Violations = std::vector<polychaos::SchemaViolation>;

void print_summary(const polychaos::RunResult& res) {
  const auto& s = res.summary;
  std::cout << "mode: " << s.value("mode", "") << "\n";
  std::cout << "basis: " << s.value("basis", "") << " (" << s.value("terms", 0) << " terms)\n";
  for (const char* key : {"max_abs_mean_deviation", "max_abs_variance_deviation", "violation_rate",
                          "violation_bound", "mean_cost", "posterior_mean", "posterior_variance"})
    if (s.contains(key)) std::cout << key << ": " << s.at(key).dump() << "\n";
  if (s.contains("solver")) std::cout << "solver: " << s.at("solver").dump() << "\n";
  if (!s.at("defaults").empty()) std::cout << "defaults: " << s.at("defaults").dump() << "\n";
  for (const auto& p : res.artifacts) std::cout << "wrote " << p.string() << "\n";
  if (res.exit_code == 2) std::cout << "warning: mid-run infeasibility (see trace fallback column)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Polynomial chaos propagation, stochastic MPC and moment-matching estimation"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::int64_t seed = -1;
  std::int64_t mc_samples = -1;
  bool quiet = false;

  for (const char* name : {"propagate", "smpc", "estimate", "compare"}) {
    auto* sub = app.add_subcommand(name, std::string("run a ") + name + " scenario");
    sub->add_option("--config", config, "scenario JSON file")->required();
    sub->add_option("--out", out, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "base seed (overrides seed)")->check(CLI::NonNegativeNumber);
    sub->add_option("--mc-samples", mc_samples, "Monte Carlo samples (overrides mc_samples)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", quiet, "suppress the human-readable summary");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  const std::string mode = app.get_subcommands().front()->get_name();

  try {
    std::ifstream in(config);
    if (!in) throw polychaos::ConfigError("cannot open config file '" + config + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw polychaos::SchemaError(Violations{{"", std::string("not valid JSON: ") + e.what()}});
    }
    if (!j.is_object())
      throw polychaos::SchemaError(Violations{{"", "config must be a JSON object"}});
    if (j.contains("mode") && j["mode"] != mode && !(mode == "compare" && j["mode"] == "propagate") &&
        !(mode == "propagate" && j["mode"] == "compare"))
      throw polychaos::ConfigError("config mode " + j["mode"].dump() + " does not fit subcommand " +
                                   mode);
    j["mode"] = mode;
    if (!out.empty()) j["output_dir"] = out;
    if (seed >= 0) j["seed"] = seed;
    if (mc_samples > 0) j["mc_samples"] = mc_samples;

    const auto cfg = polychaos::config_from_json(j);
    const auto res = polychaos::run_scenario(cfg);
    if (!quiet) print_summary(res);
    return res.exit_code;
  } catch (const std::exception& e) {
    std::cerr << polychaos::error_json(e).dump() << "\n";
    return 1;
  }
}
