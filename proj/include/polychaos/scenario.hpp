#pragma once

// Config-driven scenario runner. A scenario file is JSON with a
// schema_version, a mode and the blocks that mode needs:
//
//   propagate / compare : parameters, system (ode or linear)
//   smpc                : parameters, system (linear), smpc, chance
//   estimate            : parameters (exactly one), estimate
//
// Matrix entries and ODE rates are numbers or polynomial expressions in the
// parameter names.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polychaos/error.hpp"
#include "polychaos/orthopoly.hpp"

namespace polychaos {

inline constexpr int kSchemaVersion = 1;

struct SchemaViolation {
  std::string pointer;  // JSON pointer, e.g. /chance/beta
  std::string message;
};

/// Every schema violation found in one pass.
class SchemaError : public ConfigError {
 public:
  explicit SchemaError(std::vector<SchemaViolation> v);
  const char* kind() const noexcept override { return "schema"; }
  const std::vector<SchemaViolation>& violations() const noexcept { return violations_; }

 private:
  std::vector<SchemaViolation> violations_;
};

using ExprMatrix = std::vector<std::vector<std::string>>;
using RealMatrix = std::vector<std::vector<double>>;

struct ParameterSpec {
  std::string name;
  MeasureDescriptor measure;
};

struct OdeSpec {
  std::string rate;       // theta-expression for the decay rate
  std::string y0 = "1";   // theta-expression for the initial value
  std::vector<double> times;
  double dt = 1e-3;
};

struct LinearSpec {
  int n_x = 0;
  int n_u = 0;
  ExprMatrix a;
  ExprMatrix b;
  std::vector<double> x0;
  int steps = 0;
  RealMatrix inputs;  // propagate/compare: one row per step; empty = zero input
};

struct SmpcSpec {
  int horizon = 1;
  RealMatrix q;
  RealMatrix r;
  RealMatrix p_f;  // empty: Riccati matrix of the mean system
  std::vector<double> u_lower;
  std::vector<double> u_upper;
  RealMatrix g;
  std::vector<double> bounds;
  std::string policy = "open_loop";
  int runs = 1;
  int steps = 1;
  double tol = 1e-8;
  int max_iter = 50000;
};

struct ChanceConfig {
  double beta = 0.9;
  std::vector<double> eps;  // empty: Boole split
};

struct EstimateSpec {
  std::string forward;  // expression in the parameter name
  double noise_std = 1.0;
  std::optional<double> theta_true;
  std::vector<double> measurements;
  int steps = 0;
  int moments = 2;
  std::size_t samples = 10000;
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  std::string mode;
  std::vector<ParameterSpec> parameters;
  int degree = 3;
  std::uint64_t seed = 0;
  std::size_t mc_samples = 100000;
  std::string output_dir = ".";
  std::string system_kind;  // "ode" or "linear"; empty when unused
  OdeSpec ode;
  LinearSpec linear;
  SmpcSpec smpc;
  ChanceConfig chance;
  EstimateSpec estimate;
  /// Fields filled from defaults, keyed by JSON pointer.
  std::map<std::string, nlohmann::json> defaulted;
};

/// Validates and fills defaults. Throws SchemaError listing all violations.
ScenarioConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ScenarioConfig& cfg);
/// Throws ConfigError for a missing or unreadable file, SchemaError otherwise.
ScenarioConfig parse_config(const std::filesystem::path& path);

bool operator==(const ScenarioConfig& a, const ScenarioConfig& b);

struct RunResult {
  int exit_code = 0;  // 0 ok, 2 mid-run infeasibility
  std::vector<std::filesystem::path> artifacts;
  nlohmann::json summary;
};

/// Runs the configured mode and writes its artifacts to cfg.output_dir.
RunResult run_scenario(const ScenarioConfig& cfg);

/// Structured error record for the error stream.
nlohmann::json error_json(const std::exception& e);

}  // namespace polychaos
