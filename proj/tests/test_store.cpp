#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "fiited/snapshot.hpp"
#include "fiited/vhpi_store.hpp"

using namespace fiited;

namespace {

StoreConfig small_config(std::size_t K, std::size_t D, std::size_t capacity, std::size_t table = 64) {
  StoreConfig c;
  c.chunks = K;
  c.dim = D;
  c.capacity_chunks = capacity;
  c.table_entries = table;
  c.num_features = 4;
  c.seed = 5;
  return c;
}

/// Keys that land on pairwise different entries of the store.
std::vector<FeatureKey> distinct_entry_keys(const VhpiStore<double>& store, std::size_t n) {
  std::vector<FeatureKey> keys;
  std::set<EntryIndex> used;
  for (std::uint64_t v = 0; keys.size() < n; ++v) {
    const FeatureKey k{0, v};
    if (used.insert(store.index_of(k)).second) keys.push_back(k);
  }
  return keys;
}

void check_conservation(const VhpiStore<double>& store) {
  const auto problems = store.audit();
  for (const auto& p : problems) FAIL_CHECK(p);
  CHECK(store.live_chunks() + store.free_addresses().size() == store.capacity());
}

}  // namespace

TEST_CASE("empty store reports no live chunks and a full free list") {
  VhpiStore<double> store(small_config(2, 8, 10));
  const auto s = store.stats();
  CHECK(s.live_chunks == 0);
  CHECK(s.free_chunks == 10);
  CHECK(s.seen_entries == 0);
}

TEST_CASE("first touch allocates chunks in order from a fresh stack") {
  VhpiStore<double> store(small_config(2, 8, 3));
  const auto keys = distinct_entry_keys(store, 2);
  const EntryIndex a = store.touch(keys[0]);
  CHECK(store.mask(a) == 0b11);
  CHECK(store.address(a, 0) == 0);
  CHECK(store.address(a, 1) == 1);
  const EntryIndex b = store.touch(keys[1]);
  CHECK(store.is_live(b, 0));
  CHECK(store.address(b, 0) == 2);
  CHECK_FALSE(store.is_live(b, 1));  // arena exhausted
  CHECK(store.touch(keys[0]) == a);  // second touch allocates nothing
  CHECK(store.live_chunks() == 3);
  check_conservation(store);
}

TEST_CASE("feature id outside the configured count is rejected") {
  VhpiStore<double> store(small_config(1, 4, 4));
  CHECK_THROWS_AS(store.touch({4, 1}), std::out_of_range);
}

TEST_CASE("fully pruned entry fetches the zero vector") {
  VhpiStore<double> store(small_config(2, 8, 4));
  const auto keys = distinct_entry_keys(store, 1);
  const EntryIndex e = store.touch(keys[0]);
  store.evict_chunk(e, 0);
  store.evict_chunk(e, 1);
  const auto v = store.fetch(e);
  CHECK(v.size() == 8);
  CHECK(v.isZero(0.0));
}

TEST_CASE("only chunk 0 live fetches (v, 0, ..., 0)") {
  VhpiStore<double> store(small_config(2, 6, 4));
  const auto keys = distinct_entry_keys(store, 1);
  const EntryIndex e = store.touch(keys[0]);
  store.chunk_values(e, 0) << 1.5, -2.0, 3.25;
  store.evict_chunk(e, 1);
  const auto v = store.fetch_embedding(keys[0]);
  CHECK(v[0] == 1.5);
  CHECK(v[1] == -2.0);
  CHECK(v[2] == 3.25);
  CHECK(v.tail(3).isZero(0.0));
}

TEST_CASE("written values round-trip through fetch exactly") {
  VhpiStore<double> store(small_config(4, 8, 8));
  const auto keys = distinct_entry_keys(store, 2);
  const EntryIndex e = store.touch(keys[0]);
  store.touch(keys[1]);
  Eigen::VectorXd want(8);
  want << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8;
  for (std::size_t k = 0; k < 4; ++k) store.chunk_values(e, k) = want.segment(static_cast<Eigen::Index>(2 * k), 2);
  CHECK(store.fetch(e) == want);
}

TEST_CASE("eviction pushes the slot on the free stack and zero-pads the chunk") {
  VhpiStore<double> store(small_config(1, 4, 10));
  const auto keys = distinct_entry_keys(store, 8);
  std::vector<EntryIndex> es;
  for (const auto& k : keys) es.push_back(store.touch(k));
  REQUIRE(store.address(es[7], 0) == 7);
  store.evict_chunk(es[7], 0);
  CHECK(store.free_addresses().top() == 7u);
  CHECK_FALSE(store.is_live(es[7], 0));
  CHECK(store.fetch(es[7]).isZero(0.0));
  CHECK_THROWS_AS(store.evict_chunk(es[7], 0), ContractViolation);
  check_conservation(store);
}

TEST_CASE("evicting everything returns every slot to the free list") {
  VhpiStore<double> store(small_config(2, 4, 12));
  const auto keys = distinct_entry_keys(store, 9);
  for (const auto& k : keys) store.touch(k);
  for (const EntryIndex e : store.seen_entries()) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (store.is_live(e, k)) store.evict_chunk(e, k);
    }
  }
  CHECK(store.stats().free_chunks == store.capacity());
  CHECK(store.live_chunks() == 0);
  check_conservation(store);
}

TEST_CASE("allocation takes the top of the stack; exhaustion fails without side effects") {
  VhpiStore<double> store(small_config(1, 4, 4));
  const auto keys = distinct_entry_keys(store, 5);
  std::vector<EntryIndex> es;
  for (const auto& k : keys) es.push_back(store.touch(k));
  // Three slots used by the first three... the fourth took slot 3; the fifth got nothing.
  CHECK_FALSE(store.is_live(es[4], 0));
  store.evict_chunk(es[3], 0);  // free stack = [3]
  CHECK(store.allocate_chunk(es[4], 0));
  CHECK(store.address(es[4], 0) == 3);
  CHECK(store.free_addresses().empty());
  const auto before = store.mask(es[3]);
  CHECK_FALSE(store.allocate_chunk(es[3], 0));
  CHECK(store.mask(es[3]) == before);
  CHECK_THROWS_AS(store.allocate_chunk(es[4], 0), ContractViolation);
  check_conservation(store);
}

TEST_CASE("allocation after eviction reuses the most recently freed slot") {
  VhpiStore<double> store(small_config(2, 4, 40, 256));
  const auto keys = distinct_entry_keys(store, 20);
  for (const auto& k : keys) store.touch(k);
  Rng rng(3);
  std::vector<SlotIndex> freed;
  for (int round = 0; round < 200; ++round) {
    const auto& seen = store.seen_entries();
    const EntryIndex e = seen[uniform_index(rng, seen.size())];
    const std::size_t k = uniform_index(rng, 2);
    if (store.is_live(e, k)) {
      freed.push_back(store.address(e, k));
      store.evict_chunk(e, k);
    } else if (!freed.empty()) {
      REQUIRE(store.allocate_chunk(e, k));
      CHECK(store.address(e, k) == freed.back());
      freed.pop_back();
    }
  }
  check_conservation(store);
}

TEST_CASE("re-allocated chunks get fresh values inside the init bound") {
  VhpiStore<double> store(small_config(1, 16, 2));
  const auto keys = distinct_entry_keys(store, 1);
  const EntryIndex e = store.touch(keys[0]);
  store.chunk_values(e, 0).setConstant(9.0);
  store.evict_chunk(e, 0);
  REQUIRE(store.allocate_chunk(e, 0));
  const auto v = store.fetch(e);
  CHECK(v.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(v.cwiseAbs().maxCoeff() > 0.0);
  store.evict_chunk(e, 0);
  REQUIRE(store.allocate_chunk(e, 0, ChunkInit::kZeros));
  CHECK(store.fetch(e).isZero(0.0));
}

TEST_CASE("overhead ratios follow 3K/D and K/D") {
  struct Case {
    std::size_t K, D;
  };
  for (const auto c : {Case{1, 32}, Case{2, 32}, Case{4, 64}, Case{8, 16}}) {
    VhpiStore<double> store(small_config(c.K, c.D, 4));
    const auto s = store.stats();
    CHECK(s.training_overhead_ratio == 3.0 * static_cast<double>(c.K) / static_cast<double>(c.D));
    CHECK(s.inference_overhead_ratio == static_cast<double>(c.K) / static_cast<double>(c.D));
  }
  CHECK(training_overhead_ratio(1, 32) == 3.0 / 32.0);
  CHECK(training_overhead_ratio(2, 32) == 0.1875);
  CHECK(inference_overhead_ratio(2, 32) == 0.0625);
}

TEST_CASE("bytes estimate adds arena payload and per-chunk metadata") {
  VhpiStore<float> store([] {
    auto c = small_config(2, 8, 10);
    return c;
  }());
  store.touch({0, 1});
  store.touch({0, 2});
  const auto s = store.stats();
  CHECK(s.arena_bytes == 10.0 * 4.0 * sizeof(float));
  CHECK(s.metadata_bytes == static_cast<double>(s.seen_entries) * 3.0 * 2.0 * sizeof(float));
  CHECK(s.bytes_model_estimate == s.arena_bytes + s.metadata_bytes);
}

TEST_CASE("random operation fuzz keeps conservation and exclusivity") {
  VhpiStore<double> store(small_config(4, 8, 50, 97));
  Rng rng(77);
  std::int64_t iter = 0;
  for (int step = 0; step < 20000; ++step) {
    const auto op = uniform_index(rng, 4);
    if (op == 0 || store.seen_entries().empty()) {
      store.touch({static_cast<std::uint32_t>(uniform_index(rng, 4)), uniform_index(rng, 500)});
    } else {
      const auto& seen = store.seen_entries();
      const EntryIndex e = seen[uniform_index(rng, seen.size())];
      const std::size_t k = uniform_index(rng, 4);
      if (op == 1 && store.is_live(e, k)) store.evict_chunk(e, k);
      if (op == 2 && !store.is_live(e, k)) store.allocate_chunk(e, k);
      if (op == 3) store.update_utility(e, k, 1.0, uniform01(rng), ++iter);
    }
    if (step % 97 == 0) check_conservation(store);
  }
  check_conservation(store);
}

TEST_CASE("identical inputs give identical masks and addresses") {
  auto run = [] {
    VhpiStore<double> store(small_config(2, 4, 30, 101));
    Rng rng(9);
    for (int i = 0; i < 500; ++i) {
      const auto e = store.touch({0, uniform_index(rng, 80)});
      if (i % 7 == 0 && store.is_live(e, 1)) store.evict_chunk(e, 1);
      if (i % 11 == 0 && !store.is_live(e, 0)) store.allocate_chunk(e, 0);
    }
    return store.raw_state();
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.mask == b.mask);
  CHECK(a.addr == b.addr);
  CHECK(a.free_stack == b.free_stack);
}

TEST_CASE("column mask rebuild keeps surviving values and zero-pads dropped columns") {
  VhpiStore<double> store(small_config(2, 8, 4));
  const auto keys = distinct_entry_keys(store, 1);
  const EntryIndex e = store.touch(keys[0]);
  store.chunk_values(e, 0) << 1, 2, 3, 4;
  store.chunk_values(e, 1) << 5, 6, 7, 8;
  const std::vector<bool> keep{true, false, true, false, false, false, true, true};
  CHECK(store.apply_column_mask(keep));
  CHECK(store.slot_width() == 2);
  CHECK(store.chunk_columns(0) == std::vector<std::uint32_t>{0, 2});
  CHECK(store.chunk_columns(1) == std::vector<std::uint32_t>{6, 7});
  Eigen::VectorXd want(8);
  want << 1, 0, 3, 0, 0, 0, 7, 8;
  CHECK(store.fetch(e) == want);
  CHECK(store.column_mask() == keep);
  CHECK_FALSE(store.apply_column_mask(keep));
  CHECK(store.stats().arena_bytes == 4.0 * 2.0 * sizeof(double));
}

TEST_CASE("snapshot round-trips the whole store") {
  VhpiStore<double> store(small_config(2, 8, 20, 53));
  Rng rng(4);
  for (std::int64_t it = 1; it <= 300; ++it) {
    const auto e = store.touch({static_cast<std::uint32_t>(uniform_index(rng, 4)), uniform_index(rng, 40)});
    store.update_utility(e, 0, 1.0, uniform01(rng), it);
    if (it % 13 == 0 && store.is_live(e, 1)) store.evict_chunk(e, 1);
  }
  store.apply_column_mask({true, true, false, true, true, false, true, true});
  std::stringstream buf;
  write_snapshot(store, buf);
  const auto loaded = read_snapshot<double>(buf);
  const auto a = store.raw_state();
  const auto b = loaded.raw_state();
  CHECK(a.mask == b.mask);
  CHECK(a.addr == b.addr);
  CHECK(a.utility == b.utility);
  CHECK(a.freq == b.freq);
  CHECK(a.last_update == b.last_update);
  CHECK(a.free_stack == b.free_stack);
  CHECK(a.seen == b.seen);
  CHECK(a.columns == b.columns);
  CHECK(store.arena().values() == loaded.arena().values());
  for (const auto e : store.seen_entries()) CHECK(store.fetch(e) == loaded.fetch(e));

  // The generator state travels too: the next re-initialization draws the same values.
  auto s1 = store;
  auto s2 = loaded;
  const EntryIndex e = s1.seen_entries().front();
  if (s1.is_live(e, 0)) {
    s1.evict_chunk(e, 0);
    s2.evict_chunk(e, 0);
  }
  REQUIRE(s1.allocate_chunk(e, 0));
  REQUIRE(s2.allocate_chunk(e, 0));
  CHECK(s1.fetch(e) == s2.fetch(e));
}

TEST_CASE("snapshot reader rejects garbage and truncation") {
  std::stringstream bad("not a snapshot at all");
  CHECK_THROWS_AS(read_snapshot<double>(bad), SnapshotError);

  VhpiStore<double> store(small_config(1, 4, 4));
  store.touch({0, 1});
  std::stringstream buf;
  write_snapshot(store, buf);
  const std::string full = buf.str();
  std::stringstream cut(full.substr(0, full.size() / 2));
  CHECK_THROWS_AS(read_snapshot<double>(cut), SnapshotError);
  std::stringstream wrong_type(full);
  CHECK_THROWS_AS(read_snapshot<float>(wrong_type), SnapshotError);
}
