#include "fiited/simulator.hpp"

#include <charconv>
#include <future>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "fiited/power_law.hpp"
#include "fiited/pruning_engine.hpp"
#include "fiited/vhpi_store.hpp"

namespace fiited {
namespace {

double ratio_of(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

AccessTrace collect_accesses(SampleSource& source) {
  AccessTrace trace;
  trace.num_features = source.num_features();
  Batch b;
  while (source.next_batch(4096, b)) trace.values.insert(trace.values.end(), b.sparse.begin(), b.sparse.end());
  return trace;
}

double SimReport::accesses_chunk_level() const { return ratio_of(chunk_accesses, embedding_accesses); }
double SimReport::accesses_embedding_level() const { return accesses_chunk_level() / static_cast<double>(chunks); }
double SimReport::evictions_chunk_level() const { return ratio_of(evictions, unique_embeddings); }
double SimReport::evictions_embedding_level() const { return evictions_chunk_level() / static_cast<double>(chunks); }
double SimReport::allocations_chunk_level() const { return ratio_of(allocations, unique_embeddings); }
double SimReport::allocations_embedding_level() const { return allocations_chunk_level() / static_cast<double>(chunks); }
double SimReport::mean_evictions_per_event() const {
  if (evictions_per_event.empty()) return 0.0;
  std::size_t total = 0;
  for (const auto e : evictions_per_event) total += e;
  return static_cast<double>(total) / static_cast<double>(evictions_per_event.size());
}

std::string SimReport::to_json() const {
  nlohmann::ordered_json j;
  j["chunks"] = chunks;
  j["mean_ratio"] = mean_ratio;
  j["exponent"] = exponent ? nlohmann::ordered_json(*exponent) : nlohmann::ordered_json(nullptr);
  j["ratios"] = ratios;
  j["days"] = days;
  j["period"] = period;
  j["iterations"] = iterations;
  j["capacity_chunks"] = capacity_chunks;
  j["unique_embeddings"] = unique_embeddings;
  j["embedding_accesses"] = embedding_accesses;
  j["chunk_accesses"] = chunk_accesses;
  j["evictions"] = evictions;
  j["allocations"] = allocations;
  j["first_touch_allocations"] = first_touch_allocations;
  j["alloc_failed"] = alloc_failed;
  j["live_chunks_end"] = live_chunks_end;
  j["evictions_per_event"] = evictions_per_event;
  j["allocations_per_event"] = allocations_per_event;
  j["normalized"] = {
      {"accesses_chunk_level", accesses_chunk_level()},
      {"accesses_embedding_level", accesses_embedding_level()},
      {"evictions_chunk_level", evictions_chunk_level()},
      {"evictions_embedding_level", evictions_embedding_level()},
      {"allocations_chunk_level", allocations_chunk_level()},
      {"allocations_embedding_level", allocations_embedding_level()},
  };
  j["training_overhead_ratio"] = training_overhead_ratio;
  j["inference_overhead_ratio"] = inference_overhead_ratio;
  return j.dump(2);
}

SimReport simulate(const AccessTrace& trace, const SimConfig& config) {
  const std::size_t K = config.plan.chunks;
  if (config.days == 0) throw std::invalid_argument("simulate: days must be >= 1");
  if (config.batch_size == 0) throw std::invalid_argument("simulate: batch_size must be >= 1");
  if (trace.num_features == 0) throw std::invalid_argument("simulate: trace has no features");
  const std::size_t samples = trace.samples();
  const auto iterations = static_cast<std::int64_t>((samples + config.batch_size - 1) / config.batch_size);

  std::unordered_set<std::uint64_t> distinct_keys;
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t f = 0; f < trace.num_features; ++f) distinct_keys.insert(key_digest(trace.key(s, f)));
  }
  StoreConfig sc;
  sc.chunks = K;
  sc.dim = config.dim;
  sc.table_entries = config.table_entries != 0 ? config.table_entries : 2 * std::max<std::size_t>(distinct_keys.size(), 1);
  sc.num_features = trace.num_features;
  sc.payload = false;
  sc.utility_mode = UtilityMode::kFrequency;
  sc.gamma = config.plan.gamma;
  sc.seed = config.seed;
  std::unordered_set<std::size_t> distinct_entries;
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t f = 0; f < trace.num_features; ++f) distinct_entries.insert(hash_key(trace.key(s, f), sc.table_entries));
  }
  const double total_chunks = static_cast<double>(distinct_entries.size() * K);
  sc.capacity_chunks = static_cast<std::size_t>(std::floor(config.plan.keep_budget() * total_chunks + 1e-9));
  VhpiStore<float> store(sc);

  PruningPlan plan = config.plan;
  plan.period = std::max<std::int64_t>(1, iterations / static_cast<std::int64_t>(config.days));
  Rng rng(derive_seed(config.seed, 0xe7e47));

  SimReport rep;
  rep.chunks = K;
  rep.mean_ratio = plan.mean_ratio();
  rep.exponent = config.exponent;
  for (std::size_t k = 0; k < K; ++k) rep.ratios.push_back(plan.mode == RatioMode::kManual ? plan.ratios[k] : plan.global_ratio);
  rep.days = config.days;
  rep.period = plan.period;
  rep.iterations = iterations;
  rep.capacity_chunks = sc.capacity_chunks;
  rep.unique_embeddings = distinct_entries.size();

  std::unordered_map<EntryIndex, std::size_t> slot_of;
  std::vector<EntryIndex> order;
  std::vector<double> counts;
  std::size_t event_no = 0;
  for (std::int64_t iter = 1; iter <= iterations; ++iter) {
    slot_of.clear();
    order.clear();
    counts.clear();
    const std::size_t begin = static_cast<std::size_t>(iter - 1) * config.batch_size;
    const std::size_t end = std::min(samples, begin + config.batch_size);
    for (std::size_t s = begin; s < end; ++s) {
      for (std::size_t f = 0; f < trace.num_features; ++f) {
        const std::size_t allocs_before = store.stats().total_allocations;
        const EntryIndex e = store.touch(trace.key(s, f));
        rep.first_touch_allocations += store.stats().total_allocations - allocs_before;
        ++rep.embedding_accesses;
        for (std::size_t k = 0; k < K; ++k) rep.chunk_accesses += store.is_live(e, k) ? 1 : 0;
        const auto [it, inserted] = slot_of.try_emplace(e, order.size());
        if (inserted) {
          order.push_back(e);
          counts.push_back(0.0);
        }
        counts[it->second] += 1.0;
      }
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (std::size_t k = 0; k < K; ++k) store.update_utility(order[i], k, counts[i], 1.0, iter);
    }
    if (iter % plan.period == 0 && event_no < config.days) {
      ++event_no;
      try {
        const auto r = pruning_event(store, plan, iter, rng);
        rep.evictions_per_event.push_back(r.evicted);
        rep.allocations_per_event.push_back(r.allocated);
        rep.alloc_failed += r.alloc_failed;
      } catch (const EmptyPopulation&) {
        rep.evictions_per_event.push_back(0);
        rep.allocations_per_event.push_back(0);
      }
    }
  }
  const auto stats = store.stats();
  rep.evictions = stats.total_evictions;
  rep.allocations = stats.total_allocations;
  rep.live_chunks_end = stats.live_chunks;
  rep.training_overhead_ratio = stats.training_overhead_ratio;
  rep.inference_overhead_ratio = stats.inference_overhead_ratio;
  return rep;
}

std::vector<SimReport> sweep(const AccessTrace& trace, const SweepGrid& grid, const SimConfig& base, bool parallel) {
  if (grid.chunks.empty() || grid.mean_ratios.empty() || grid.exponents.empty()) {
    throw std::invalid_argument("sweep grid must be nonempty in every axis");
  }
  std::vector<SimConfig> cells;
  for (const auto K : grid.chunks) {
    for (const double mean : grid.mean_ratios) {
      for (const double a : grid.exponents) {
        SimConfig c = base;
        c.plan.chunks = K;
        c.plan.mode = RatioMode::kManual;
        c.plan.ratios = fit_power_law_ratios(K, a, mean, base.plan.clamp_max);
        c.exponent = a;
        cells.push_back(std::move(c));
      }
    }
  }
  std::vector<SimReport> out;
  out.reserve(cells.size());
  if (parallel) {
    std::vector<std::future<SimReport>> jobs;
    for (const auto& c : cells) jobs.push_back(std::async(std::launch::async, [&trace, c] { return simulate(trace, c); }));
    for (auto& j : jobs) out.push_back(j.get());
  } else {
    for (const auto& c : cells) out.push_back(simulate(trace, c));
  }
  return out;
}

std::string sweep_csv(const std::vector<SimReport>& reports) {
  std::ostringstream out;
  out << "chunks,mean_ratio,exponent,ratios,capacity_chunks,unique_embeddings,embedding_accesses,chunk_accesses,"
         "evictions,allocations,live_chunks_end,accesses_chunk_level,accesses_embedding_level,"
         "evictions_chunk_level,evictions_embedding_level,allocations_chunk_level,allocations_embedding_level,"
         "evictions_per_event,training_overhead_ratio,inference_overhead_ratio\n";
  for (const auto& r : reports) {
    std::string ratios;
    for (std::size_t k = 0; k < r.ratios.size(); ++k) ratios += (k ? ";" : "") + fmt(r.ratios[k]);
    out << r.chunks << ',' << fmt(r.mean_ratio) << ',' << (r.exponent ? fmt(*r.exponent) : "") << ',' << ratios << ','
        << r.capacity_chunks << ',' << r.unique_embeddings << ',' << r.embedding_accesses << ',' << r.chunk_accesses
        << ',' << r.evictions << ',' << r.allocations << ',' << r.live_chunks_end << ',' << fmt(r.accesses_chunk_level())
        << ',' << fmt(r.accesses_embedding_level()) << ',' << fmt(r.evictions_chunk_level()) << ','
        << fmt(r.evictions_embedding_level()) << ',' << fmt(r.allocations_chunk_level()) << ','
        << fmt(r.allocations_embedding_level()) << ',' << fmt(r.mean_evictions_per_event()) << ','
        << fmt(r.training_overhead_ratio) << ',' << fmt(r.inference_overhead_ratio) << '\n';
  }
  return out.str();
}

}  // namespace fiited
