#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "fiited/simulator.hpp"
#include "fiited/synthetic.hpp"
#include "fiited/trainer.hpp"

namespace fiited {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  SyntheticSpec synthetic;
  /// CSV trace to replay instead of the generator; empty uses the generator.
  std::string trace;
  /// Held-out samples drawn from generator stream 1 for the final evaluation; 0 skips it.
  std::size_t eval_samples = 20000;
};

struct TrainRunConfig {
  TrainerConfig trainer;
  std::size_t epochs = 1;
  /// Power-law exponent used to derive per-chunk ratios from `mean_ratio`; nullopt keeps
  /// plan.ratios as given.
  std::optional<double> exponent = 1.0;
  double mean_ratio = 0.5;
};

struct SimulateRunConfig {
  SimConfig sim;
  SweepGrid grid;
  /// Samples replayed by simulate/sweep; 0 means data.synthetic.samples.
  std::size_t samples = 0;
  double mean_ratio = 0.5;
  std::optional<double> exponent = 1.0;
};

/// Everything a CLI run needs. Unknown keys are rejected; missing keys keep their defaults.
struct RunConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  TrainRunConfig train;
  SimulateRunConfig simulate;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);

/// Copies the top-level seed into every seeded component.
void propagate_seed(RunConfig& c);
/// Recomputes plan ratios from mean_ratio/exponent where an exponent is set.
void resolve_ratios(RunConfig& c);

/// Short stable hex digest of the resolved config, used to name metrics files.
std::string config_hash(const RunConfig& c);

}  // namespace fiited
