#pragma once

// Independent reference implementations used as test oracles. They share only the hash
// function and the random helpers with the library; everything else is written naively
// (maps, full sorts, explicit loops).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "fiited/hash.hpp"
#include "fiited/pruning_plan.hpp"
#include "fiited/random.hpp"
#include "fiited/simulator.hpp"

namespace oracle {

/// Smallest value v in `values` such that at least ceil(p * n) values are <= v, by full sort.
/// Returns -inf for p == 0.
inline double percentile_by_sort(std::vector<double> values, double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  std::size_t rank = 0;
  // Smallest integer r with r >= p * n (up to rounding noise).
  while (static_cast<double>(rank) < p * n - 1e-9 * std::max(1.0, p * n)) ++rank;
  if (rank == 0) return -std::numeric_limits<double>::infinity();
  return values[std::min(rank, values.size()) - 1];
}

/// Indices [0, n) picked by the same partial Fisher-Yates protocol the engine documents.
inline std::vector<std::size_t> fisher_yates_pick(std::size_t n, std::size_t m, fiited::Rng& rng) {
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < n; ++i) all.push_back(i);
  if (m >= n) return all;
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + static_cast<std::size_t>(fiited::uniform_index(rng, n - i));
    std::swap(all[i], all[j]);
  }
  all.resize(m);
  return all;
}

/// Eager utility recurrence: one multiply by gamma per elapsed iteration.
struct EagerUtility {
  double gamma = 0.9;
  double u = 0.0;
  double f = 0.0;
  void tick() {
    u *= gamma;
    f *= gamma;
  }
  void add(double a, double g) {
    u += a * g;
    f += a;
  }
};

/// Whole-row pruning over one table of rows with utilities (K = 1).
struct RowDecision {
  std::set<std::size_t> evicted;
  std::vector<std::size_t> allocated;  // in allocation order
  double threshold = 0.0;
  bool enforced = false;
};

/// `rows` lists seen rows in first-touch order with their utility and presence.
inline RowDecision row_pruning(const std::vector<std::size_t>& rows, const std::vector<double>& utility,
                               const std::vector<bool>& present, double threshold, double trigger,
                               std::size_t free_slots) {
  RowDecision d;
  d.threshold = threshold;
  std::size_t crossing = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const bool above = utility[i] > threshold;
    if (present[i] && !above) ++crossing;
    if (!present[i] && above) ++crossing;
  }
  d.enforced = static_cast<double>(crossing) > trigger * static_cast<double>(rows.size());
  std::vector<bool> now = present;
  if (d.enforced) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (now[i] && !(utility[i] > threshold)) {
        d.evicted.insert(rows[i]);
        now[i] = false;
        ++free_slots;
      }
    }
  }
  std::vector<std::pair<double, std::size_t>> want;  // (utility, row)
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!now[i] && utility[i] > threshold) want.emplace_back(utility[i], rows[i]);
  }
  std::sort(want.begin(), want.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (const auto& [u, row] : want) {
    if (free_slots == 0) break;
    --free_slots;
    d.allocated.push_back(row);
  }
  return d;
}

struct RefCounters {
  std::size_t unique_embeddings = 0;
  std::size_t embedding_accesses = 0;
  std::size_t chunk_accesses = 0;
  std::size_t evictions = 0;
  std::size_t allocations = 0;
  std::size_t alloc_failed = 0;
  std::size_t live_end = 0;
  std::size_t capacity = 0;
  std::vector<std::size_t> evictions_per_event;
  std::vector<std::size_t> allocations_per_event;
};

/// Naive replay of a trace through a chunked store with frequency utilities.
inline RefCounters reference_simulate(const fiited::AccessTrace& trace, const fiited::SimConfig& cfg) {
  const std::size_t K = cfg.plan.chunks;
  const std::size_t F = trace.num_features;
  const std::size_t n = trace.samples();
  RefCounters out;

  std::set<std::uint64_t> digests;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t f = 0; f < F; ++f) digests.insert(fiited::key_digest(trace.key(s, f)));
  }
  const std::size_t table = cfg.table_entries != 0 ? cfg.table_entries : 2 * std::max<std::size_t>(digests.size(), 1);
  std::set<std::size_t> rows;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t f = 0; f < F; ++f) rows.insert(fiited::hash_key(trace.key(s, f), table));
  }
  out.unique_embeddings = rows.size();
  double keep = 1.0;
  if (cfg.plan.mode == fiited::RatioMode::kManual) {
    double sum = 0.0;
    for (const double p : cfg.plan.ratios) sum += p;
    keep = 1.0 - sum / static_cast<double>(K);
  } else {
    keep = 1.0 - cfg.plan.global_ratio;
  }
  out.capacity = static_cast<std::size_t>(std::floor(keep * static_cast<double>(rows.size() * K) + 1e-9));

  std::vector<std::uint32_t> stack;  // back is the top
  for (std::size_t s = out.capacity; s-- > 0;) stack.push_back(static_cast<std::uint32_t>(s));

  struct Row {
    std::vector<bool> live;
    std::vector<double> u;
    std::vector<double> f;
    std::vector<std::uint32_t> slot;
    bool decayed_once = false;
    std::int64_t last = 0;
  };
  std::map<std::size_t, Row> table_rows;
  std::vector<std::size_t> order;
  auto decay = [&](Row& r, std::int64_t iter) {
    if (!r.decayed_once) {
      r.decayed_once = true;
      r.last = iter;
      return;
    }
    if (iter == r.last) return;
    const double factor = std::pow(cfg.plan.gamma, static_cast<double>(iter - r.last));
    for (std::size_t k = 0; k < K; ++k) {
      r.u[k] = factor * r.u[k];
      r.f[k] = factor * r.f[k];
    }
    r.last = iter;
  };

  const std::size_t B = cfg.batch_size;
  const auto iterations = static_cast<std::int64_t>((n + B - 1) / B);
  const std::int64_t period = std::max<std::int64_t>(1, iterations / static_cast<std::int64_t>(cfg.days));
  fiited::Rng rng(fiited::derive_seed(cfg.seed, 0xe7e47));
  std::size_t events = 0;

  for (std::int64_t iter = 1; iter <= iterations; ++iter) {
    std::vector<std::size_t> batch_rows;
    std::map<std::size_t, double> counts;
    for (std::size_t s = static_cast<std::size_t>(iter - 1) * B; s < std::min(n, static_cast<std::size_t>(iter) * B); ++s) {
      for (std::size_t f = 0; f < F; ++f) {
        const std::size_t e = fiited::hash_key(trace.key(s, f), table);
        if (!table_rows.count(e)) {
          Row r;
          r.live.assign(K, false);
          r.u.assign(K, 0.0);
          r.f.assign(K, 0.0);
          r.slot.assign(K, 0);
          for (std::size_t k = 0; k < K; ++k) {
            if (stack.empty()) break;
            r.slot[k] = stack.back();
            stack.pop_back();
            r.live[k] = true;
            ++out.allocations;
          }
          table_rows[e] = r;
          order.push_back(e);
        }
        ++out.embedding_accesses;
        for (std::size_t k = 0; k < K; ++k) out.chunk_accesses += table_rows[e].live[k] ? 1 : 0;
        if (!counts.count(e)) batch_rows.push_back(e);
        counts[e] += 1.0;
      }
    }
    for (const std::size_t e : batch_rows) {
      Row& r = table_rows[e];
      decay(r, iter);
      for (std::size_t k = 0; k < K; ++k) {
        r.u[k] += counts[e];
        r.f[k] += counts[e];
      }
    }
    if (iter % period != 0 || events >= cfg.days) continue;
    ++events;
    for (const std::size_t e : order) decay(table_rows[e], iter);

    const auto ratio_of = [&](std::size_t k) {
      const double p = cfg.plan.mode == fiited::RatioMode::kManual ? cfg.plan.ratios[k] : cfg.plan.global_ratio;
      return std::min(p, cfg.plan.clamp_max);
    };
    std::vector<double> thr(K);
    if (cfg.plan.mode == fiited::RatioMode::kAdaptive) {
      const auto picks = fisher_yates_pick(order.size() * K, cfg.plan.sample_size, rng);
      std::vector<double> vals;
      for (const auto p : picks) vals.push_back(table_rows[order[p / K]].u[p % K]);
      std::fill(thr.begin(), thr.end(), percentile_by_sort(vals, ratio_of(0)));
    } else {
      std::vector<std::uint64_t> seeds;
      for (std::size_t k = 0; k < K; ++k) seeds.push_back(rng());
      for (std::size_t k = 0; k < K; ++k) {
        fiited::Rng local(seeds[k]);
        const auto picks = fisher_yates_pick(order.size(), cfg.plan.sample_size, local);
        std::vector<double> vals;
        for (const auto p : picks) vals.push_back(table_rows[order[p]].u[k]);
        thr[k] = percentile_by_sort(vals, ratio_of(k));
      }
    }

    std::size_t crossing = 0;
    for (const std::size_t e : order) {
      for (std::size_t k = 0; k < K; ++k) {
        const bool keep_it = table_rows[e].u[k] > thr[k];
        if (keep_it != table_rows[e].live[k]) ++crossing;
      }
    }
    std::size_t evicted = 0;
    if (static_cast<double>(crossing) > cfg.plan.enforce_trigger * static_cast<double>(order.size() * K)) {
      for (const std::size_t e : order) {
        Row& r = table_rows[e];
        for (std::size_t k = 0; k < K; ++k) {
          if (r.live[k] && !(r.u[k] > thr[k])) {
            r.live[k] = false;
            stack.push_back(r.slot[k]);
            ++evicted;
          }
        }
      }
    }
    struct Want {
      double u;
      std::size_t e;
      std::size_t k;
    };
    std::vector<Want> want;
    for (const std::size_t e : order) {
      for (std::size_t k = 0; k < K; ++k) {
        if (!table_rows[e].live[k] && table_rows[e].u[k] > thr[k]) want.push_back({table_rows[e].u[k], e, k});
      }
    }
    std::sort(want.begin(), want.end(), [](const Want& a, const Want& b) {
      if (a.u != b.u) return a.u > b.u;
      if (a.e != b.e) return a.e < b.e;
      return a.k < b.k;
    });
    std::size_t allocated = 0;
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (stack.empty()) {
        out.alloc_failed += want.size() - i;
        break;
      }
      Row& r = table_rows[want[i].e];
      r.slot[want[i].k] = stack.back();
      stack.pop_back();
      r.live[want[i].k] = true;
      ++allocated;
    }
    out.evictions += evicted;
    out.allocations += allocated;
    out.evictions_per_event.push_back(evicted);
    out.allocations_per_event.push_back(allocated);
  }
  for (const auto& [e, r] : table_rows) {
    for (std::size_t k = 0; k < K; ++k) out.live_end += r.live[k] ? 1 : 0;
  }
  return out;
}

}  // namespace oracle
