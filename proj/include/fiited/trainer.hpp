#pragma once

#include <cstdint>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "fiited/batch.hpp"
#include "fiited/dimension_mask.hpp"
#include "fiited/interaction_model.hpp"
#include "fiited/pruning_engine.hpp"
#include "fiited/vhpi_store.hpp"

namespace fiited {

struct DimensionOptions {
  bool enabled = false;
  double keep_ratio = 0.5;
  std::int64_t cold_start_iters = 200;
};

struct TrainerConfig {
  ModelConfig model;
  std::size_t chunks = 2;
  /// false trains the unpruned baseline: full-size arena, no pruning events.
  bool pruning = true;
  PruningPlan plan;
  UtilityMode utility_mode = UtilityMode::kGradient;
  /// Hash-table size; 0 means twice the expected distinct-key count.
  std::size_t table_entries = 0;
  std::size_t batch_size = 64;
  /// Iterations per metrics row.
  std::size_t eval_every = 100;
  DimensionOptions dimension;
  /// Apply batch i's utility updates on a worker while batch i+1 is fetched and run forward.
  bool pipeline_utility_updates = false;

  void validate() const;
};

struct MetricsRow {
  std::int64_t iter = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double live_fraction = 0.0;
  double arena_bytes = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t samples = 0;
};

struct MetricsSeries {
  std::vector<MetricsRow> rows;
  std::vector<PruningReport> events;
  std::optional<EvalResult> final_eval;

  /// `iter,loss,accuracy,live_fraction,arena_bytes` with shortest round-trip numbers.
  [[nodiscard]] std::string to_csv() const;
  void write_csv(const std::string& path) const;
};

struct StepResult {
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t samples = 0;
  std::optional<PruningReport> event;
};

/// One accessed chunk's contribution for an iteration.
struct UtilityUpdate {
  EntryIndex entry = 0;
  std::size_t chunk = 0;
  double accesses = 0.0;
  double grad_l2 = 0.0;
};

/// Desk-scale training loop over the VHPI store. Single-threaded except for the optional
/// utility-update pipeline.
class Trainer {
 public:
  using Store = VhpiStore<double>;
  using Model = InteractionModel<double>;

  /// `expected_keys` is the distinct-key count of an unpruned model; the arena holds
  /// floor(keep_budget * expected_keys * K) chunks.
  Trainer(TrainerConfig config, std::size_t expected_keys);
  ~Trainer();
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  MetricsSeries train(SampleSource& data, std::size_t epochs, SampleSource* eval = nullptr);

  /// One iteration: fetch, forward, backward, SGD, utility update, and a pruning event on
  /// period boundaries.
  StepResult step(const Batch& batch);

  /// Forward-only pass; never registers accesses or mutates the store.
  EvalResult evaluate(SampleSource& data);
  /// Mean loss of one batch under the current parameters, no side effects.
  double batch_loss(const Batch& batch) const;

  [[nodiscard]] const Store& store() const { return store_; }
  Store& store() { return store_; }
  [[nodiscard]] const Model& model() const { return model_; }
  Model& model() { return model_; }
  [[nodiscard]] std::int64_t iteration() const { return iter_; }
  [[nodiscard]] const std::optional<DimensionMask>& dimension_mask() const { return dims_; }
  [[nodiscard]] const TrainerConfig& config() const { return config_; }

  /// Called with the store right before each pruning event (after pending utility updates land).
  std::function<void(const Store&, std::int64_t)> before_event;

  /// Blocks until any in-flight utility update has been applied.
  void drain();

 private:
  void apply_updates(std::vector<UtilityUpdate> updates, std::int64_t iter);

  TrainerConfig config_;
  Store store_;
  Model model_;
  std::optional<PruningEngine<double>> engine_;
  std::optional<DimensionMask> dims_;
  std::int64_t iter_ = 0;
  std::future<void> pending_;
};

/// Capacity the arena gets for a plan: floor(keep_budget * expected_keys * K).
std::size_t arena_capacity(const TrainerConfig& config, std::size_t expected_keys);

}  // namespace fiited
