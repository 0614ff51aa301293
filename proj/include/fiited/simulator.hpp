#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fiited/batch.hpp"
#include "fiited/hash.hpp"
#include "fiited/pruning_plan.hpp"

namespace fiited {

/// Sparse accesses of a trace, one row of F values per sample. No dense data or labels.
struct AccessTrace {
  std::size_t num_features = 0;
  std::vector<std::uint64_t> values;

  [[nodiscard]] std::size_t samples() const { return num_features == 0 ? 0 : values.size() / num_features; }
  [[nodiscard]] FeatureKey key(std::size_t sample, std::size_t feature) const {
    return {static_cast<std::uint32_t>(feature), values[sample * num_features + feature]};
  }
};

/// Drains `source` (from its current position) into an access trace.
AccessTrace collect_accesses(SampleSource& source);

struct SimConfig {
  /// Plan with K, ratios, gamma, sample size and trigger; its period is replaced by the
  /// segment length derived from `days`.
  PruningPlan plan;
  std::size_t days = 7;
  std::size_t batch_size = 1;
  /// Embedding width used for the memory model only (the simulated arena holds no values).
  std::size_t dim = 32;
  /// 0 means twice the trace's distinct-key count.
  std::size_t table_entries = 0;
  std::uint64_t seed = 1;
  /// Power-law exponent the ratios came from, carried into the report; nullopt if manual.
  std::optional<double> exponent;
};

struct SimReport {
  std::size_t chunks = 0;
  double mean_ratio = 0.0;
  std::optional<double> exponent;
  std::vector<double> ratios;
  std::size_t days = 0;
  std::int64_t period = 0;
  std::int64_t iterations = 0;
  std::size_t capacity_chunks = 0;
  std::size_t unique_embeddings = 0;   // distinct entries an unpruned store would hold
  std::size_t embedding_accesses = 0;  // accesses an unpruned model makes
  std::size_t chunk_accesses = 0;      // accesses that hit live chunks
  std::size_t evictions = 0;
  std::size_t allocations = 0;         // first-touch plus event allocations
  std::size_t first_touch_allocations = 0;
  std::size_t alloc_failed = 0;
  std::size_t live_chunks_end = 0;
  std::vector<std::size_t> evictions_per_event;
  std::vector<std::size_t> allocations_per_event;
  double training_overhead_ratio = 0.0;
  double inference_overhead_ratio = 0.0;

  // Chunk-level values normalized by the unpruned model; embedding-level = chunk-level / K.
  [[nodiscard]] double accesses_chunk_level() const;
  [[nodiscard]] double accesses_embedding_level() const;
  [[nodiscard]] double evictions_chunk_level() const;
  [[nodiscard]] double evictions_embedding_level() const;
  [[nodiscard]] double allocations_chunk_level() const;
  [[nodiscard]] double allocations_embedding_level() const;
  [[nodiscard]] double mean_evictions_per_event() const;

  [[nodiscard]] std::string to_json() const;
};

/// Replays `trace` through a payload-free VHPI store with frequency-only utilities and one
/// pruning event at the end of each of `days` equal segments.
SimReport simulate(const AccessTrace& trace, const SimConfig& config);

struct SweepGrid {
  std::vector<std::size_t> chunks{2, 4, 8};
  std::vector<double> mean_ratios{0.5, 0.7, 0.9};
  std::vector<double> exponents{0.5, 1.0};
};

/// One simulate() per (K, mean ratio, exponent) cell with power-law per-chunk ratios,
/// iterating K outermost and exponent innermost. `base.plan` supplies everything but the
/// ratios.
std::vector<SimReport> sweep(const AccessTrace& trace, const SweepGrid& grid, const SimConfig& base,
                             bool parallel = false);

std::string sweep_csv(const std::vector<SimReport>& reports);

}  // namespace fiited
