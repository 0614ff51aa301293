#include "fiited/thresholds.hpp"

#include <algorithm>
#include <cmath>

namespace fiited {

std::size_t nearest_rank(double ratio, std::size_t n) {
  if (ratio <= 0.0 || n == 0) return 0;
  const double scaled = ratio * static_cast<double>(n);
  const double rank = std::ceil(scaled - 1e-9 * std::max(1.0, scaled));
  return std::min(n, static_cast<std::size_t>(std::max(0.0, rank)));
}

double nearest_rank_threshold(std::span<double> samples, double ratio) {
  if (samples.empty()) throw EmptyPopulation("no utilities to sample; skip this pruning event");
  const std::size_t rank = nearest_rank(ratio, samples.size());
  if (rank == 0) return kNoPruneThreshold;
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(rank - 1), samples.end());
  return samples[rank - 1];
}

}  // namespace fiited
