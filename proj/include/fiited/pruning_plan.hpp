#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fiited {

enum class RatioMode { kManual, kAdaptive };

/// Everything a pruning event needs to know besides the store.
struct PruningPlan {
  std::size_t chunks = 1;
  std::int64_t period = 1000;         // T, in iterations
  std::size_t sample_size = 65536;    // m
  double gamma = 0.99;
  RatioMode mode = RatioMode::kManual;
  std::vector<double> ratios{0.5};    // p_k, manual mode
  double global_ratio = 0.5;          // p, adaptive mode
  double enforce_trigger = 0.1;
  double clamp_max = 0.95;
  /// Run per-chunk threshold selection on worker threads.
  bool parallel_thresholds = false;
  /// Keep the (entry, chunk) lists of every eviction/allocation in the report.
  bool record_chunk_sets = false;

  void validate() const {
    if (chunks == 0) throw std::invalid_argument("plan: chunks must be >= 1");
    if (period < 1) throw std::invalid_argument("plan: period must be >= 1");
    if (sample_size < 1) throw std::invalid_argument("plan: sample_size must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("plan: gamma must be in (0, 1)");
    if (!(clamp_max >= 0.0 && clamp_max <= 1.0)) throw std::invalid_argument("plan: clamp_max must be in [0, 1]");
    if (!(enforce_trigger >= 0.0 && enforce_trigger <= 1.0)) {
      throw std::invalid_argument("plan: enforce_trigger must be in [0, 1]");
    }
    if (mode == RatioMode::kManual) {
      if (ratios.size() != chunks) {
        throw std::invalid_argument("plan: expected " + std::to_string(chunks) + " per-chunk ratios, got " +
                                    std::to_string(ratios.size()));
      }
      for (const double p : ratios) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("plan: ratios must lie in [0, 1]");
      }
    } else if (!(global_ratio >= 0.0 && global_ratio <= 1.0)) {
      throw std::invalid_argument("plan: global ratio must lie in [0, 1]");
    }
  }

  /// Ratio actually used for chunk k (or the pooled ratio), after clamping.
  [[nodiscard]] double effective_ratio(std::size_t k) const {
    const double p = mode == RatioMode::kManual ? ratios.at(k) : global_ratio;
    return p > clamp_max ? clamp_max : p;
  }

  [[nodiscard]] double mean_ratio() const {
    if (mode == RatioMode::kAdaptive) return global_ratio;
    return std::accumulate(ratios.begin(), ratios.end(), 0.0) / static_cast<double>(ratios.size());
  }

  /// Fraction of the unpruned chunk count the arena is sized for.
  [[nodiscard]] double keep_budget() const { return 1.0 - mean_ratio(); }
};

}  // namespace fiited
