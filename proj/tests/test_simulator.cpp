#include <doctest.h>

#include <json.hpp>

#include "fiited/power_law.hpp"
#include "fiited/simulator.hpp"
#include "fiited/synthetic.hpp"
#include "oracles.hpp"

using namespace fiited;

namespace {

AccessTrace zipf_trace(std::size_t samples, std::uint64_t seed, std::size_t features = 2,
                       std::uint64_t cardinality = 400) {
  SyntheticSpec s;
  s.num_features = features;
  s.cardinalities = std::vector<std::uint64_t>(features, cardinality);
  s.samples = samples;
  s.dense_dim = 1;
  s.seed = seed;
  SyntheticGenerator gen(s);
  return collect_accesses(gen);
}

SimConfig base_config(std::size_t K, std::vector<double> ratios) {
  SimConfig c;
  c.plan.chunks = K;
  c.plan.ratios = std::move(ratios);
  c.plan.sample_size = 256;
  c.days = 7;
  c.dim = 32;
  c.seed = 5;
  return c;
}

void check_equal(const SimReport& r, const oracle::RefCounters& ref) {
  CHECK(r.unique_embeddings == ref.unique_embeddings);
  CHECK(r.embedding_accesses == ref.embedding_accesses);
  CHECK(r.chunk_accesses == ref.chunk_accesses);
  CHECK(r.evictions == ref.evictions);
  CHECK(r.allocations == ref.allocations);
  CHECK(r.alloc_failed == ref.alloc_failed);
  CHECK(r.live_chunks_end == ref.live_end);
  CHECK(r.capacity_chunks == ref.capacity);
  CHECK(r.evictions_per_event == ref.evictions_per_event);
  CHECK(r.allocations_per_event == ref.allocations_per_event);
}

}  // namespace

TEST_CASE("ratio 0 never evicts and allocates every chunk once on first touch") {
  const auto trace = zipf_trace(3000, 2);
  for (const std::size_t K : {1u, 2u, 4u}) {
    const auto r = simulate(trace, base_config(K, std::vector<double>(K, 0.0)));
    CHECK(r.evictions == 0);
    CHECK(r.allocations == r.unique_embeddings * K);
    CHECK(r.first_touch_allocations == r.allocations);
    CHECK(r.allocations_chunk_level() == static_cast<double>(K));
    CHECK(r.allocations_embedding_level() == 1.0);
    CHECK(r.chunk_accesses == r.embedding_accesses * K);
  }
}

TEST_CASE("normalized values are re-derived from raw counters") {
  const auto trace = zipf_trace(3000, 3);
  const auto one = simulate(trace, base_config(1, {0.5}));
  const auto two = simulate(trace, base_config(2, {0.5, 0.5}));
  for (const auto* r : {&one, &two}) {
    const double K = static_cast<double>(r->chunks);
    const double acc = static_cast<double>(r->chunk_accesses) / static_cast<double>(r->embedding_accesses);
    const double ev = static_cast<double>(r->evictions) / static_cast<double>(r->unique_embeddings);
    const double al = static_cast<double>(r->allocations) / static_cast<double>(r->unique_embeddings);
    CHECK(r->accesses_chunk_level() == acc);
    CHECK(r->accesses_embedding_level() == acc / K);
    CHECK(r->evictions_chunk_level() == ev);
    CHECK(r->evictions_embedding_level() == ev / K);
    CHECK(r->allocations_chunk_level() == al);
    CHECK(r->allocations_embedding_level() == al / K);
  }
  CHECK(one.accesses_embedding_level() == one.accesses_chunk_level());
  CHECK(one.embedding_accesses == two.embedding_accesses);
  CHECK(one.unique_embeddings == two.unique_embeddings);
}

TEST_CASE("allocations minus evictions equals the live chunks at the end") {
  const auto trace = zipf_trace(4000, 4);
  for (const double mean : {0.3, 0.5, 0.7, 0.9}) {
    for (const std::size_t K : {1u, 2u, 4u, 8u}) {
      const auto r = simulate(trace, base_config(K, fit_power_law_ratios(K, 1.0, mean)));
      CHECK(r.allocations - r.evictions == r.live_chunks_end);
      CHECK(r.live_chunks_end <= r.capacity_chunks);
      CHECK(r.evictions_per_event.size() == 7);
    }
  }
}

TEST_CASE("simulator matches the naive reference on 1000-event traces across the grid") {
  const auto trace = zipf_trace(500, 6);  // 500 samples x 2 features = 1000 accesses
  REQUIRE(trace.values.size() == 1000);
  for (const std::size_t K : {1u, 2u, 4u, 8u}) {
    for (const double mean : {0.5, 0.7, 0.9}) {
      for (const double a : {0.5, 1.0}) {
        auto cfg = base_config(K, fit_power_law_ratios(K, a, mean));
        CAPTURE(K);
        CAPTURE(mean);
        CAPTURE(a);
        check_equal(simulate(trace, cfg), oracle::reference_simulate(trace, cfg));
        cfg.batch_size = 16;
        cfg.plan.sample_size = 64;
        check_equal(simulate(trace, cfg), oracle::reference_simulate(trace, cfg));
      }
    }
  }
}

TEST_CASE("adaptive mode matches the naive reference") {
  const auto trace = zipf_trace(500, 8);
  auto cfg = base_config(4, {});
  cfg.plan.mode = RatioMode::kAdaptive;
  cfg.plan.global_ratio = 0.6;
  cfg.plan.sample_size = 300;
  check_equal(simulate(trace, cfg), oracle::reference_simulate(trace, cfg));
}

TEST_CASE("a one-cell sweep equals a direct simulate") {
  const auto trace = zipf_trace(2000, 9);
  SweepGrid grid{{4}, {0.7}, {0.5}};
  auto base = base_config(4, {});
  const auto reports = sweep(trace, grid, base);
  REQUIRE(reports.size() == 1);
  base.plan.ratios = fit_power_law_ratios(4, 0.5, 0.7);
  base.exponent = 0.5;
  CHECK(reports[0].to_json() == simulate(trace, base).to_json());
}

TEST_CASE("full grid has 18 cells and parallel sweep equals serial") {
  const auto trace = zipf_trace(1500, 10);
  const auto base = base_config(2, {});
  const auto serial = sweep(trace, SweepGrid{}, base);
  const auto parallel = sweep(trace, SweepGrid{}, base, true);
  REQUIRE(serial.size() == 18);
  REQUIRE(parallel.size() == 18);
  for (std::size_t i = 0; i < 18; ++i) CHECK(serial[i].to_json() == parallel[i].to_json());
  CHECK(serial.front().chunks == 2);
  CHECK(serial.back().chunks == 8);
  const auto csv = sweep_csv(serial);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 19);
}

TEST_CASE("K = 8 at mean 0.9 gives the same ratios for both exponents") {
  const auto trace = zipf_trace(1000, 11);
  const auto reports = sweep(trace, SweepGrid{{8}, {0.9}, {0.5, 1.0}}, base_config(8, {}));
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].ratios == reports[1].ratios);
  CHECK(reports[0].evictions == reports[1].evictions);
}

TEST_CASE("churn grows with the mean ratio below 0.9") {
  // Evictions are bounded by the live set, which shrinks to 1 - p of the chunks, so
  // per-event churn is only expected to rise while the live set stays the larger side.
  const auto trace = zipf_trace(20000, 12, 4, 2000);
  for (const std::size_t K : {1u, 2u, 4u}) {
    double prev = -1.0;
    for (const double mean : {0.1, 0.3, 0.5}) {
      const auto r = simulate(trace, base_config(K, fit_power_law_ratios(K, 1.0, mean)));
      CHECK(r.mean_evictions_per_event() >= prev);
      prev = r.mean_evictions_per_event();
    }
  }
}

TEST_CASE("report JSON carries the raw and normalized counters") {
  const auto trace = zipf_trace(1000, 13);
  const auto r = simulate(trace, base_config(2, {0.3, 0.7}));
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["evictions"] == r.evictions);
  CHECK(j["normalized"]["allocations_embedding_level"] == r.allocations_embedding_level());
  CHECK(j["ratios"].size() == 2);
}

TEST_CASE("bad simulator settings are rejected") {
  const auto trace = zipf_trace(100, 14);
  auto cfg = base_config(2, {0.5, 0.5});
  cfg.days = 0;
  CHECK_THROWS_AS(simulate(trace, cfg), std::invalid_argument);
  CHECK_THROWS_AS(sweep(trace, SweepGrid{{}, {0.5}, {1.0}}, base_config(2, {})), std::invalid_argument);
}
