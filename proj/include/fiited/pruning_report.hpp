#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fiited {

struct ChunkRef {
  std::size_t entry = 0;
  std::size_t chunk = 0;

  friend auto operator<=>(const ChunkRef&, const ChunkRef&) = default;
};

/// Outcome of one pruning event.
struct PruningReport {
  std::int64_t iter = 0;
  bool skipped = false;  // empty population, nothing decided
  std::vector<double> thresholds;
  std::size_t crossing = 0;
  std::size_t total_chunks = 0;
  bool enforced = false;
  std::size_t evicted = 0;
  std::size_t allocated = 0;
  std::size_t alloc_failed = 0;
  std::vector<double> live_fraction_per_chunk;
  // Filled only when the plan asks for chunk sets.
  std::vector<ChunkRef> evicted_chunks;
  std::vector<ChunkRef> allocated_chunks;

  /// One-line JSON: {iter, thresholds[], evicted, allocated, alloc_failed,
  /// live_fraction_per_chunk[], enforced, crossing, total_chunks, skipped}.
  /// A threshold of -infinity (prune nothing) is written as null.
  [[nodiscard]] std::string to_json_line() const;
};

PruningReport pruning_report_from_json(const std::string& line);

}  // namespace fiited
