#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fiited/chunk_arena.hpp"
#include "fiited/hash.hpp"
#include "fiited/random.hpp"

namespace fiited {

using EntryIndex = std::size_t;

inline constexpr std::size_t kMaxChunks = 64;
inline constexpr std::int64_t kNeverUpdated = std::numeric_limits<std::int64_t>::min();

/// How update_utility scores an access: decayed a*g, or frequency only (g forced to 1).
enum class UtilityMode : std::uint8_t { kGradient = 0, kFrequency = 1 };

/// Value policy for a freshly allocated chunk.
enum class ChunkInit : std::uint8_t { kUniform, kZeros };

struct StoreConfig {
  std::size_t chunks = 1;  // K
  std::size_t dim = 32;    // D
  std::size_t capacity_chunks = 0;
  std::size_t table_entries = 1;
  std::size_t num_features = 1;
  /// false keeps only metadata (the simulator's store); fetch then always returns zeros.
  bool payload = true;
  UtilityMode utility_mode = UtilityMode::kGradient;
  double gamma = 0.99;
  std::uint64_t seed = 0;

  void validate() const {
    if (chunks == 0 || chunks > kMaxChunks) throw std::invalid_argument("chunks must be in [1, 64]");
    if (dim == 0 || dim % chunks != 0) throw std::invalid_argument("dim must be a positive multiple of chunks");
    if (table_entries == 0) throw std::invalid_argument("table_entries must be > 0");
    if (num_features == 0) throw std::invalid_argument("num_features must be > 0");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0, 1)");
    if (capacity_chunks >= (std::size_t{1} << 32)) {
      throw std::invalid_argument("capacity_chunks must fit 32-bit slot indices");
    }
  }
};

/// Copy of one hash-table row.
struct HashEntry {
  std::vector<SlotIndex> chunk_addr;
  std::uint64_t mask = 0;
  std::vector<double> utility;
  std::vector<double> freq;
  std::int64_t last_update_iter = kNeverUpdated;

  [[nodiscard]] bool is_live(std::size_t k) const { return (mask >> k) & 1U; }
};

struct StoreStats {
  std::size_t live_chunks = 0;
  std::size_t free_chunks = 0;
  std::size_t capacity_chunks = 0;
  std::size_t seen_entries = 0;
  std::size_t total_allocations = 0;
  std::size_t total_evictions = 0;
  /// Modeled arena payload: capacity x slot width x sizeof(Scalar).
  double arena_bytes = 0.0;
  /// 3 scalar-equivalents (address, utility, frequency) per chunk per seen entry.
  double metadata_bytes = 0.0;
  double bytes_model_estimate = 0.0;
  /// Metadata relative to one unpruned embedding while training: 3K/D.
  double training_overhead_ratio = 0.0;
  /// Utility and frequency dropped at inference, leaving the address: K/D.
  double inference_overhead_ratio = 0.0;
};

inline double training_overhead_ratio(std::size_t chunks, std::size_t dim) {
  return static_cast<double>(3 * chunks) / static_cast<double>(dim);
}
inline double inference_overhead_ratio(std::size_t chunks, std::size_t dim) {
  return static_cast<double>(chunks) / static_cast<double>(dim);
}

/// Virtually hashed, physically indexed embedding store.
///
/// Keys hash to entries of a fixed-size table (colliding keys share an entry). Each entry
/// owns up to K arena slots, one per chunk of its D-wide row; `mask` bit k says whether
/// chunk k currently has a slot. Utilities are decayed lazily: an entry stores the
/// iteration of its last decay and catches up by gamma^delta on the next touch.
///
/// Thread model: const member functions only read, so concurrent fetches are safe while
/// no writer runs. Utility updates touch only utility/frequency/last-update storage and
/// may overlap with fetches (see Trainer); everything else needs exclusive access.
template <typename Scalar>
class VhpiStore {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit VhpiStore(StoreConfig config)
      : config_(std::move(config)),
        rng_(derive_seed(config_.seed, 0x5107e)) {
    config_.validate();
    const std::size_t width = config_.dim / config_.chunks;
    columns_.resize(config_.chunks);
    for (std::size_t k = 0; k < config_.chunks; ++k) {
      for (std::size_t j = 0; j < width; ++j) columns_[k].push_back(static_cast<std::uint32_t>(k * width + j));
    }
    slot_width_ = width;
    arena_ = ChunkArena<Scalar>(config_.capacity_chunks, config_.payload ? width : 0);
    free_ = FreeAddressManager(config_.capacity_chunks);
    const std::size_t n = config_.table_entries;
    addr_.assign(n * config_.chunks, 0);
    utility_.assign(n * config_.chunks, 0.0);
    freq_.assign(n * config_.chunks, 0.0);
    mask_.assign(n, 0);
    last_update_.assign(n, kNeverUpdated);
    seen_flag_.assign(n, 0);
  }

  [[nodiscard]] const StoreConfig& config() const { return config_; }
  [[nodiscard]] std::size_t chunks() const { return config_.chunks; }
  [[nodiscard]] std::size_t dim() const { return config_.dim; }
  [[nodiscard]] std::size_t capacity() const { return config_.capacity_chunks; }
  [[nodiscard]] std::size_t table_entries() const { return config_.table_entries; }
  [[nodiscard]] std::size_t live_chunks() const { return live_; }
  [[nodiscard]] std::size_t slot_width() const { return slot_width_; }
  [[nodiscard]] const FreeAddressManager& free_addresses() const { return free_; }
  [[nodiscard]] const ChunkArena<Scalar>& arena() const { return arena_; }
  /// Global embedding columns held by chunk k, in slot order.
  [[nodiscard]] const std::vector<std::uint32_t>& chunk_columns(std::size_t k) const { return columns_[k]; }

  [[nodiscard]] EntryIndex index_of(const FeatureKey& key) const {
    return hash_key(key, config_.table_entries);
  }

  /// Entries touched at least once, in first-touch order.
  [[nodiscard]] const std::vector<EntryIndex>& seen_entries() const { return seen_; }
  [[nodiscard]] bool seen(EntryIndex e) const { return seen_flag_[e] != 0; }

  /// Registers an access to `key`. The first touch of an entry allocates its chunks in
  /// order 0..K-1 while free slots remain. Returns the entry index.
  EntryIndex touch(const FeatureKey& key) {
    if (key.feature_id >= config_.num_features) {
      throw std::out_of_range("feature_id " + std::to_string(key.feature_id) + " >= configured feature count");
    }
    const EntryIndex e = index_of(key);
    if (!seen_flag_[e]) {
      seen_flag_[e] = 1;
      seen_.push_back(e);
      for (std::size_t k = 0; k < config_.chunks && !free_.empty(); ++k) allocate_chunk(e, k);
    }
    return e;
  }

  [[nodiscard]] std::uint64_t mask(EntryIndex e) const { return mask_[e]; }
  [[nodiscard]] bool is_live(EntryIndex e, std::size_t k) const { return (mask_[e] >> k) & 1U; }
  [[nodiscard]] SlotIndex address(EntryIndex e, std::size_t k) const { return addr_[e * config_.chunks + k]; }

  [[nodiscard]] HashEntry entry(EntryIndex e) const {
    HashEntry h;
    const std::size_t base = e * config_.chunks;
    h.chunk_addr.assign(addr_.begin() + base, addr_.begin() + base + config_.chunks);
    h.utility.assign(utility_.begin() + base, utility_.begin() + base + config_.chunks);
    h.freq.assign(freq_.begin() + base, freq_.begin() + base + config_.chunks);
    h.mask = mask_[e];
    h.last_update_iter = last_update_[e];
    return h;
  }

  /// Zero-padded D-vector of entry e: pruned chunks and dropped columns read as zero.
  void fetch_into(EntryIndex e, Eigen::Ref<Vector, 0, Eigen::InnerStride<>> out) const {
    out.setZero();
    if (!config_.payload) return;
    const std::uint64_t m = mask_[e];
    for (std::size_t k = 0; k < config_.chunks; ++k) {
      if (!((m >> k) & 1U)) continue;
      const auto row = arena_.slot(addr_[e * config_.chunks + k]);
      const auto& cols = columns_[k];
      for (std::size_t t = 0; t < cols.size(); ++t) out[cols[t]] = row[static_cast<Eigen::Index>(t)];
    }
  }

  [[nodiscard]] Vector fetch(EntryIndex e) const {
    Vector v(static_cast<Eigen::Index>(config_.dim));
    fetch_into(e, v);
    return v;
  }

  /// Embedding of `key` without registering an access.
  [[nodiscard]] Vector fetch_embedding(const FeatureKey& key) const { return fetch(index_of(key)); }

  /// Stored values of a live chunk, one per column of chunk_columns(k).
  auto chunk_values(EntryIndex e, std::size_t k) {
    require_live(e, k, "chunk_values");
    return arena_.slot(addr_[e * config_.chunks + k]).head(static_cast<Eigen::Index>(columns_[k].size()));
  }
  auto chunk_values(EntryIndex e, std::size_t k) const {
    require_live(e, k, "chunk_values");
    return arena_.slot(addr_[e * config_.chunks + k]).head(static_cast<Eigen::Index>(columns_[k].size()));
  }

  void evict_chunk(EntryIndex e, std::size_t k) {
    require_live(e, k, "evict_chunk");
    free_.push(addr_[e * config_.chunks + k]);
    mask_[e] &= ~(std::uint64_t{1} << k);
    --live_;
    ++total_evictions_;
  }

  /// Takes the top free slot for chunk k of e. Returns false, changing nothing, when the
  /// free stack is empty.
  bool allocate_chunk(EntryIndex e, std::size_t k, ChunkInit init = ChunkInit::kUniform) {
    if (k >= config_.chunks) throw ContractViolation("allocate_chunk: chunk index out of range");
    if (is_live(e, k)) throw ContractViolation("allocate_chunk: chunk is already live");
    const auto slot = free_.pop();
    if (!slot) return false;
    addr_[e * config_.chunks + k] = *slot;
    mask_[e] |= std::uint64_t{1} << k;
    ++live_;
    ++total_allocations_;
    if (config_.payload) initialize_slot(*slot, columns_[k].size(), init);
    return true;
  }

  /// Folds one iteration's accesses into chunk k: u <- gamma^delta u + a g, f <- gamma^delta f + a.
  /// In frequency mode g is taken as 1 regardless of the argument.
  double update_utility(EntryIndex e, std::size_t k, double accesses, double grad_l2, std::int64_t iter) {
    if (!(accesses >= 0.0)) throw std::invalid_argument("update_utility: accesses must be >= 0");
    if (!(grad_l2 >= 0.0)) throw std::invalid_argument("update_utility: gradient norm must be >= 0");
    if (k >= config_.chunks) throw ContractViolation("update_utility: chunk index out of range");
    decay_to(e, iter);
    const double g = config_.utility_mode == UtilityMode::kFrequency ? 1.0 : grad_l2;
    const std::size_t i = e * config_.chunks + k;
    utility_[i] += accesses * g;
    freq_[i] += accesses;
    return utility_[i];
  }

  /// Applies pending decay of every chunk of e up to `iter`.
  void decay_to(EntryIndex e, std::int64_t iter) {
    std::int64_t& last = last_update_[e];
    if (last == kNeverUpdated) {
      last = iter;
      return;
    }
    if (iter < last) throw ContractViolation("utility update goes back in time");
    if (iter == last) return;
    const double factor = std::pow(config_.gamma, static_cast<double>(iter - last));
    const std::size_t base = e * config_.chunks;
    for (std::size_t k = 0; k < config_.chunks; ++k) {
      utility_[base + k] = factor * utility_[base + k];
      freq_[base + k] = factor * freq_[base + k];
    }
    last = iter;
  }

  void decay_all(std::int64_t iter) {
    for (const EntryIndex e : seen_) decay_to(e, iter);
  }

  /// Utility of chunk k as of `iter`, without mutating; bit-identical to decay_to + read.
  [[nodiscard]] double utility_at(EntryIndex e, std::size_t k, std::int64_t iter) const {
    const std::int64_t last = last_update_[e];
    const double u = utility_[e * config_.chunks + k];
    if (last == kNeverUpdated || iter == last) return u;
    return std::pow(config_.gamma, static_cast<double>(iter - last)) * u;
  }
  [[nodiscard]] double utility(EntryIndex e, std::size_t k) const { return utility_[e * config_.chunks + k]; }
  [[nodiscard]] double frequency(EntryIndex e, std::size_t k) const { return freq_[e * config_.chunks + k]; }
  [[nodiscard]] std::int64_t last_update_iter(EntryIndex e) const { return last_update_[e]; }

  /// Restricts storage to the columns flagged in `keep` (size D). Live chunks keep the
  /// values of their surviving columns; columns kept but not previously stored start at
  /// zero. Returns false when the layout is unchanged.
  bool apply_column_mask(const std::vector<bool>& keep) {
    if (keep.size() != config_.dim) throw std::invalid_argument("column mask must have D entries");
    const std::size_t base_width = config_.dim / config_.chunks;
    std::vector<std::vector<std::uint32_t>> next(config_.chunks);
    for (std::size_t k = 0; k < config_.chunks; ++k) {
      for (std::size_t j = k * base_width; j < (k + 1) * base_width; ++j) {
        if (keep[j]) next[k].push_back(static_cast<std::uint32_t>(j));
      }
    }
    if (next == columns_) return false;
    std::size_t width = 0;
    for (const auto& cols : next) width = std::max(width, cols.size());
    if (config_.payload) {
      typename ChunkArena<Scalar>::Storage rebuilt =
          ChunkArena<Scalar>::Storage::Zero(static_cast<Eigen::Index>(config_.capacity_chunks),
                                            static_cast<Eigen::Index>(width));
      for (const EntryIndex e : seen_) {
        for (std::size_t k = 0; k < config_.chunks; ++k) {
          if (!is_live(e, k)) continue;
          const SlotIndex s = addr_[e * config_.chunks + k];
          const auto old_row = arena_.slot(s);
          for (std::size_t t = 0; t < next[k].size(); ++t) {
            const auto it = std::find(columns_[k].begin(), columns_[k].end(), next[k][t]);
            if (it != columns_[k].end()) {
              rebuilt(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) =
                  old_row[std::distance(columns_[k].begin(), it)];
            }
          }
        }
      }
      arena_.replace(std::move(rebuilt));
    }
    columns_ = std::move(next);
    slot_width_ = width;
    return true;
  }

  [[nodiscard]] std::vector<bool> column_mask() const {
    std::vector<bool> keep(config_.dim, false);
    for (const auto& cols : columns_) {
      for (const auto c : cols) keep[c] = true;
    }
    return keep;
  }

  [[nodiscard]] StoreStats stats() const {
    StoreStats s;
    s.live_chunks = live_;
    s.free_chunks = free_.size();
    s.capacity_chunks = config_.capacity_chunks;
    s.seen_entries = seen_.size();
    s.total_allocations = total_allocations_;
    s.total_evictions = total_evictions_;
    s.arena_bytes = static_cast<double>(config_.capacity_chunks) * static_cast<double>(slot_width_) * sizeof(Scalar);
    s.metadata_bytes = static_cast<double>(seen_.size()) * 3.0 * static_cast<double>(config_.chunks) * sizeof(Scalar);
    s.bytes_model_estimate = s.arena_bytes + s.metadata_bytes;
    s.training_overhead_ratio = training_overhead_ratio(config_.chunks, config_.dim);
    s.inference_overhead_ratio = inference_overhead_ratio(config_.chunks, config_.dim);
    return s;
  }

  /// Full consistency audit. Returns one message per violated invariant; empty when sound.
  [[nodiscard]] std::vector<std::string> audit() const {
    std::vector<std::string> problems;
    const std::size_t cap = config_.capacity_chunks;
    if (live_ + free_.size() != cap) {
      problems.push_back("conservation: live " + std::to_string(live_) + " + free " +
                         std::to_string(free_.size()) + " != capacity " + std::to_string(cap));
    }
    std::vector<std::uint8_t> owner(cap, 0);
    std::size_t counted_live = 0;
    for (EntryIndex e = 0; e < config_.table_entries; ++e) {
      if (mask_[e] >> config_.chunks) problems.push_back("mask bits beyond K at entry " + std::to_string(e));
      for (std::size_t k = 0; k < config_.chunks; ++k) {
        const std::size_t i = e * config_.chunks + k;
        if (utility_[i] < 0.0 || freq_[i] < 0.0) problems.push_back("negative utility at entry " + std::to_string(e));
        if (!is_live(e, k)) continue;
        ++counted_live;
        const SlotIndex s = addr_[i];
        if (s >= cap) {
          problems.push_back("live address out of range at entry " + std::to_string(e));
          continue;
        }
        if (owner[s]++) problems.push_back("slot " + std::to_string(s) + " owned twice");
      }
    }
    if (counted_live != live_) problems.push_back("live counter disagrees with masks");
    for (const SlotIndex s : free_.contents()) {
      if (s >= cap) {
        problems.push_back("free slot out of range");
        continue;
      }
      if (owner[s]++) problems.push_back("slot " + std::to_string(s) + " both free and live, or freed twice");
    }
    return problems;
  }

  // Raw access for snapshot serialization.
  struct RawState {
    StoreConfig config;
    std::vector<std::vector<std::uint32_t>> columns;
    std::size_t slot_width = 0;
    std::vector<EntryIndex> seen;
    std::vector<SlotIndex> addr;
    std::vector<double> utility;
    std::vector<double> freq;
    std::vector<std::uint64_t> mask;
    std::vector<std::int64_t> last_update;
    std::vector<SlotIndex> free_stack;
    std::size_t total_allocations = 0;
    std::size_t total_evictions = 0;
    typename ChunkArena<Scalar>::Storage arena;
    Rng rng;
  };

  [[nodiscard]] RawState raw_state() const {
    return RawState{config_, columns_, slot_width_, seen_, addr_, utility_, freq_, mask_, last_update_,
                    std::vector<SlotIndex>(free_.contents().begin(), free_.contents().end()),
                    total_allocations_, total_evictions_, arena_.values(), rng_};
  }

  static VhpiStore from_raw_state(RawState raw) {
    VhpiStore store(raw.config);
    store.columns_ = std::move(raw.columns);
    store.slot_width_ = raw.slot_width;
    store.seen_ = std::move(raw.seen);
    for (const EntryIndex e : store.seen_) store.seen_flag_.at(e) = 1;
    store.addr_ = std::move(raw.addr);
    store.utility_ = std::move(raw.utility);
    store.freq_ = std::move(raw.freq);
    store.mask_ = std::move(raw.mask);
    store.last_update_ = std::move(raw.last_update);
    store.free_.assign(std::move(raw.free_stack));
    store.total_allocations_ = raw.total_allocations;
    store.total_evictions_ = raw.total_evictions;
    store.arena_.replace(std::move(raw.arena));
    store.rng_ = raw.rng;
    store.live_ = 0;
    for (const auto m : store.mask_) store.live_ += static_cast<std::size_t>(std::popcount(m));
    return store;
  }

 private:
  void require_live(EntryIndex e, std::size_t k, const char* op) const {
    if (k >= config_.chunks) throw ContractViolation(std::string(op) + ": chunk index out of range");
    if (!is_live(e, k)) throw ContractViolation(std::string(op) + ": chunk is pruned");
  }

  void initialize_slot(SlotIndex s, std::size_t used, ChunkInit init) {
    auto row = arena_.slot(s);
    row.setZero();
    if (init == ChunkInit::kZeros) return;
    const double bound = 1.0 / std::sqrt(static_cast<double>(config_.dim));
    for (std::size_t t = 0; t < used; ++t) {
      row[static_cast<Eigen::Index>(t)] = static_cast<Scalar>(uniform_real(rng_, -bound, bound));
    }
  }

  StoreConfig config_;
  std::vector<std::vector<std::uint32_t>> columns_;
  std::size_t slot_width_ = 0;
  ChunkArena<Scalar> arena_;
  FreeAddressManager free_;
  std::vector<SlotIndex> addr_;
  std::vector<double> utility_;
  std::vector<double> freq_;
  std::vector<std::uint64_t> mask_;
  std::vector<std::int64_t> last_update_;
  std::vector<std::uint8_t> seen_flag_;
  std::vector<EntryIndex> seen_;
  std::size_t live_ = 0;
  std::size_t total_allocations_ = 0;
  std::size_t total_evictions_ = 0;
  Rng rng_;
};

}  // namespace fiited
