#pragma once

#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace fiited {

/// Threshold meaning "prune nothing": every utility is strictly above it.
inline constexpr double kNoPruneThreshold = -std::numeric_limits<double>::infinity();

/// Raised when a threshold is requested over an empty population; the caller should skip
/// that pruning event.
class EmptyPopulation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ChunkDecision { kKeep, kPrune };

/// Keep iff u > threshold. A utility equal to the threshold is pruned.
constexpr ChunkDecision decide_chunk(double utility, double threshold) {
  return utility > threshold ? ChunkDecision::kKeep : ChunkDecision::kPrune;
}

/// Nearest-rank percentile: the ceil(ratio * n)-th smallest of `samples` (1-based), found by
/// partial selection, which reorders `samples`. Rank 0 (ratio 0) yields kNoPruneThreshold.
double nearest_rank_threshold(std::span<double> samples, double ratio);

/// ceil(ratio * n), guarded against ratio * n landing a rounding error above an integer.
std::size_t nearest_rank(double ratio, std::size_t n);

}  // namespace fiited
