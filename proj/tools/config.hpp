#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "percreach/presets.hpp"

namespace percreach::cli {

using Json = nlohmann::ordered_json;

struct AxisRange {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 1;

  std::vector<double> values() const;
};

struct SweepParams {
  AxisRange a{-0.03, 0.0, 31};
  AxisRange b{-0.9, 0.0, 31};
};

struct McParams {
  std::size_t samples = 1000;
  double dt = 0.0;  // 0 uses the solver step
};

struct RolloutParams {
  double dt = 0.0;
};

struct BudgetParams {
  double horizon = 0.0;  // 0 uses the solve horizon
};

// Dark-time axis for the bounds subcommand; zeros fall back to the solve
// horizon and the Hamiltonian's dark_samples.
struct BoundsParams {
  double dark_time_max = 0.0;
  std::size_t dark_time_steps = 0;
};

struct PolicyParams {
  std::size_t starts = 20;
  double margin = 0.0;
  std::vector<SmallVec> explicit_starts;
};

// Which Hamiltonian arm the solve uses. kBounds builds bounds on the grid
// unless bounds_path names an exported field.
struct HamiltonianChoice {
  enum class Kind { kAuto, kExactTan, kExactLinear, kEnumerated, kBounds } kind = Kind::kAuto;
  double error_quantum = 0.1;
  double cell_margin = 0.5;
  std::filesystem::path bounds_path;
  std::size_t dark_samples = 51;
};

struct RunConfig {
  explicit RunConfig(Scenario s) : scenario(std::move(s)) {}

  Scenario scenario;
  bool has_x0 = false;
  HamiltonianChoice hamiltonian;
  std::uint64_t seed = 0;
  int workers = 0;
  SweepParams sweep;
  McParams mc;
  RolloutParams rollout;
  BudgetParams budget;
  PolicyParams policy;
  BoundsParams bounds;
  // The document the run was built from, after flag overrides.
  Json echo;
};

// Builds a run from a config document. Relative paths resolve against
// base_dir. Throws ConfigError naming the JSON pointer of the offending key.
RunConfig build_run_config(const Json& doc, const std::filesystem::path& base_dir);

// Parses a config file; syntax errors become ConfigError with the byte
// position.
Json read_config_file(const std::filesystem::path& path);

// Resolves the Hamiltonian choice into scenario.solve.hamiltonian, building
// control bounds when needed.
void resolve_hamiltonian(RunConfig& run);

}  // namespace percreach::cli
