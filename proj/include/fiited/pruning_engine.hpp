#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <thread>
#include <vector>

#include "fiited/pruning_plan.hpp"
#include "fiited/pruning_report.hpp"
#include "fiited/random.hpp"
#include "fiited/thresholds.hpp"
#include "fiited/vhpi_store.hpp"

namespace fiited {

/// m distinct indices drawn uniformly from [0, n) by a partial Fisher-Yates shuffle.
/// When m >= n the whole range is returned in order and no randomness is consumed.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (m >= n) return idx;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  return idx;
}

/// Thresholds for every chunk index from the store's current utilities (decay must already
/// be applied up to the event iteration).
///
/// Manual mode samples min(m, seen) entries per chunk index and takes the nearest-rank
/// p_k-th percentile. Adaptive mode pools min(m, seen * K) (entry, chunk) pairs and uses one
/// percentile for all chunks. Throws EmptyPopulation when no entry has been seen.
template <typename Scalar>
std::vector<double> compute_thresholds(const VhpiStore<Scalar>& store, const PruningPlan& plan, Rng& rng) {
  const auto& seen = store.seen_entries();
  const std::size_t K = store.chunks();
  if (seen.empty()) throw EmptyPopulation("no utilities to sample; skip this pruning event");

  if (plan.mode == RatioMode::kAdaptive) {
    const auto picks = sample_without_replacement(seen.size() * K, plan.sample_size, rng);
    std::vector<double> values;
    values.reserve(picks.size());
    for (const std::size_t p : picks) values.push_back(store.utility(seen[p / K], p % K));
    return std::vector<double>(K, nearest_rank_threshold(values, plan.effective_ratio(0)));
  }

  // One generator per chunk index, seeded in order, so threaded and serial runs agree.
  std::vector<std::uint64_t> seeds(K);
  for (auto& s : seeds) s = rng();
  std::vector<double> thresholds(K, kNoPruneThreshold);
  auto one_chunk = [&](std::size_t k) {
    Rng local(seeds[k]);
    const auto picks = sample_without_replacement(seen.size(), plan.sample_size, local);
    std::vector<double> values;
    values.reserve(picks.size());
    for (const std::size_t p : picks) values.push_back(store.utility(seen[p], k));
    thresholds[k] = nearest_rank_threshold(values, plan.effective_ratio(k));
  };
  if (plan.parallel_thresholds && K > 1) {
    std::vector<std::jthread> workers;
    workers.reserve(K);
    for (std::size_t k = 0; k < K; ++k) workers.emplace_back(one_chunk, k);
  } else {
    for (std::size_t k = 0; k < K; ++k) one_chunk(k);
  }
  return thresholds;
}

/// One pruning event at iteration `iter` (must be a multiple of the period):
///   1. decay every seen entry to `iter` and compute thresholds;
///   2. count chunks crossing their threshold (live with u <= thr, pruned with u > thr);
///   3. if crossing / (seen * K) exceeds the trigger, evict every live chunk with u <= thr;
///   4. always try to allocate pruned chunks with u > thr, highest utility first, until the
///      free stack runs dry.
template <typename Scalar>
PruningReport pruning_event(VhpiStore<Scalar>& store, const PruningPlan& plan, std::int64_t iter, Rng& rng) {
  if (plan.chunks != store.chunks()) throw ContractViolation("pruning plan and store disagree on K");
  if (iter % plan.period != 0) throw ContractViolation("pruning event off the period boundary");

  PruningReport report;
  report.iter = iter;
  store.decay_all(iter);
  report.thresholds = compute_thresholds(store, plan, rng);

  const auto& seen = store.seen_entries();
  const std::size_t K = store.chunks();
  const auto& thr = report.thresholds;
  report.total_chunks = seen.size() * K;
  for (const EntryIndex e : seen) {
    for (std::size_t k = 0; k < K; ++k) {
      const bool keep = decide_chunk(store.utility(e, k), thr[k]) == ChunkDecision::kKeep;
      if (store.is_live(e, k) != keep) ++report.crossing;
    }
  }
  report.enforced = static_cast<double>(report.crossing) >
                    plan.enforce_trigger * static_cast<double>(report.total_chunks);

  if (report.enforced) {
    for (const EntryIndex e : seen) {
      for (std::size_t k = 0; k < K; ++k) {
        if (store.is_live(e, k) && decide_chunk(store.utility(e, k), thr[k]) == ChunkDecision::kPrune) {
          store.evict_chunk(e, k);
          ++report.evicted;
          if (plan.record_chunk_sets) report.evicted_chunks.push_back({e, k});
        }
      }
    }
  }

  std::vector<ChunkRef> candidates;
  for (const EntryIndex e : seen) {
    for (std::size_t k = 0; k < K; ++k) {
      if (!store.is_live(e, k) && decide_chunk(store.utility(e, k), thr[k]) == ChunkDecision::kKeep) {
        candidates.push_back({e, k});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(), [&](const ChunkRef& a, const ChunkRef& b) {
    const double ua = store.utility(a.entry, a.chunk);
    const double ub = store.utility(b.entry, b.chunk);
    if (ua != ub) return ua > ub;
    return a < b;
  });
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!store.allocate_chunk(candidates[i].entry, candidates[i].chunk)) {
      report.alloc_failed = candidates.size() - i;
      break;
    }
    ++report.allocated;
    if (plan.record_chunk_sets) report.allocated_chunks.push_back(candidates[i]);
  }

  report.live_fraction_per_chunk.assign(K, 0.0);
  for (const EntryIndex e : seen) {
    for (std::size_t k = 0; k < K; ++k) {
      if (store.is_live(e, k)) report.live_fraction_per_chunk[k] += 1.0;
    }
  }
  for (double& f : report.live_fraction_per_chunk) f /= static_cast<double>(seen.size());
  return report;
}

/// Owns the plan and the sampling generator; fires an event on every period boundary.
template <typename Scalar>
class PruningEngine {
 public:
  PruningEngine(PruningPlan plan, std::uint64_t seed) : plan_(std::move(plan)), rng_(derive_seed(seed, 0xe7e47)) {
    plan_.validate();
  }

  [[nodiscard]] const PruningPlan& plan() const { return plan_; }

  [[nodiscard]] bool is_boundary(std::int64_t iter) const { return iter > 0 && iter % plan_.period == 0; }

  /// Runs an event if `iter` is a period boundary. An event over an empty store is
  /// reported as skipped rather than failing the run.
  std::optional<PruningReport> maybe_prune(VhpiStore<Scalar>& store, std::int64_t iter) {
    if (!is_boundary(iter)) return std::nullopt;
    try {
      return pruning_event(store, plan_, iter, rng_);
    } catch (const EmptyPopulation&) {
      PruningReport skipped;
      skipped.iter = iter;
      skipped.skipped = true;
      return skipped;
    }
  }

 private:
  PruningPlan plan_;
  Rng rng_;
};

}  // namespace fiited
