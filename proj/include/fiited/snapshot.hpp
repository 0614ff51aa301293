#pragma once

// Binary store snapshots. Layout is documented in docs/snapshot_format.md; every
// multi-byte field is little-endian regardless of host byte order.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "fiited/vhpi_store.hpp"

namespace fiited {

inline constexpr std::array<char, 8> kSnapshotMagic = {'F', 'I', 'I', 'T', 'E', 'D', 'S', 'N'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace snapshot_detail {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::uint8_t u8() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) throw SnapshotError("snapshot truncated");
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{u8()} << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes() {
    const std::uint64_t n = u64();
    if (n > (std::uint64_t{1} << 20)) throw SnapshotError("snapshot string field too long");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::uint64_t>(in_.gcount()) != n) throw SnapshotError("snapshot truncated");
    return s;
  }

 private:
  std::istream& in_;
};

template <typename Scalar>
void put_scalar(Writer& w, Scalar v) {
  if constexpr (std::is_same_v<Scalar, double>) {
    w.f64(v);
  } else {
    w.f32(v);
  }
}

template <typename Scalar>
Scalar get_scalar(Reader& r) {
  if constexpr (std::is_same_v<Scalar, double>) {
    return r.f64();
  } else {
    return r.f32();
  }
}

}  // namespace snapshot_detail

template <typename Scalar>
void write_snapshot(const VhpiStore<Scalar>& store, std::ostream& out) {
  static_assert(std::is_same_v<Scalar, double> || std::is_same_v<Scalar, float>);
  using snapshot_detail::Writer;
  const auto raw = store.raw_state();
  const auto& c = raw.config;
  Writer w(out);
  out.write(kSnapshotMagic.data(), kSnapshotMagic.size());
  w.u32(kSnapshotVersion);
  w.u32(sizeof(Scalar));
  w.u64(c.chunks);
  w.u64(c.dim);
  w.u64(c.capacity_chunks);
  w.u64(c.table_entries);
  w.u64(c.num_features);
  w.u8(c.payload ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(c.utility_mode));
  w.f64(c.gamma);
  w.u64(c.seed);
  w.u64(raw.total_allocations);
  w.u64(raw.total_evictions);
  for (const auto& cols : raw.columns) {
    w.u64(cols.size());
    for (const auto col : cols) w.u32(col);
  }
  w.u64(raw.slot_width);
  w.u64(raw.seen.size());
  for (const EntryIndex e : raw.seen) {
    w.u64(e);
    w.u64(raw.mask[e]);
    w.i64(raw.last_update[e]);
    for (std::size_t k = 0; k < c.chunks; ++k) w.u32(raw.addr[e * c.chunks + k]);
    for (std::size_t k = 0; k < c.chunks; ++k) w.f64(raw.utility[e * c.chunks + k]);
    for (std::size_t k = 0; k < c.chunks; ++k) w.f64(raw.freq[e * c.chunks + k]);
  }
  w.u64(raw.free_stack.size());
  for (const SlotIndex s : raw.free_stack) w.u32(s);
  w.u64(static_cast<std::uint64_t>(raw.arena.cols()));
  for (Eigen::Index i = 0; i < raw.arena.rows(); ++i) {
    for (Eigen::Index j = 0; j < raw.arena.cols(); ++j) snapshot_detail::put_scalar<Scalar>(w, raw.arena(i, j));
  }
  std::ostringstream rng_text;
  rng_text << raw.rng;
  w.bytes(rng_text.str());
  if (!out) throw SnapshotError("failed writing snapshot");
}

template <typename Scalar>
VhpiStore<Scalar> read_snapshot(std::istream& in) {
  using snapshot_detail::Reader;
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kSnapshotMagic) {
    throw SnapshotError("not a store snapshot (bad magic)");
  }
  Reader r(in);
  const std::uint32_t version = r.u32();
  if (version != kSnapshotVersion) throw SnapshotError("unsupported snapshot version " + std::to_string(version));
  const std::uint32_t scalar_bytes = r.u32();
  if (scalar_bytes != sizeof(Scalar)) {
    throw SnapshotError("snapshot scalar width " + std::to_string(scalar_bytes) + " does not match reader");
  }
  typename VhpiStore<Scalar>::RawState raw;
  auto& c = raw.config;
  c.chunks = r.u64();
  c.dim = r.u64();
  c.capacity_chunks = r.u64();
  c.table_entries = r.u64();
  c.num_features = r.u64();
  c.payload = r.u8() != 0;
  c.utility_mode = static_cast<UtilityMode>(r.u8());
  c.gamma = r.f64();
  c.seed = r.u64();
  try {
    c.validate();
  } catch (const std::invalid_argument& err) {
    throw SnapshotError(std::string("snapshot config invalid: ") + err.what());
  }
  raw.total_allocations = r.u64();
  raw.total_evictions = r.u64();
  raw.columns.resize(c.chunks);
  for (auto& cols : raw.columns) {
    const std::uint64_t n = r.u64();
    if (n > c.dim) throw SnapshotError("snapshot column layout corrupt");
    cols.resize(n);
    for (auto& col : cols) col = r.u32();
  }
  raw.slot_width = r.u64();
  const std::size_t n = c.table_entries;
  raw.addr.assign(n * c.chunks, 0);
  raw.utility.assign(n * c.chunks, 0.0);
  raw.freq.assign(n * c.chunks, 0.0);
  raw.mask.assign(n, 0);
  raw.last_update.assign(n, kNeverUpdated);
  const std::uint64_t seen = r.u64();
  if (seen > n) throw SnapshotError("snapshot seen-entry count exceeds table size");
  raw.seen.reserve(seen);
  for (std::uint64_t i = 0; i < seen; ++i) {
    const EntryIndex e = r.u64();
    if (e >= n) throw SnapshotError("snapshot entry index out of range");
    raw.seen.push_back(e);
    raw.mask[e] = r.u64();
    raw.last_update[e] = r.i64();
    for (std::size_t k = 0; k < c.chunks; ++k) raw.addr[e * c.chunks + k] = r.u32();
    for (std::size_t k = 0; k < c.chunks; ++k) raw.utility[e * c.chunks + k] = r.f64();
    for (std::size_t k = 0; k < c.chunks; ++k) raw.freq[e * c.chunks + k] = r.f64();
  }
  const std::uint64_t free_count = r.u64();
  if (free_count > c.capacity_chunks) throw SnapshotError("snapshot free stack larger than capacity");
  raw.free_stack.resize(free_count);
  for (auto& s : raw.free_stack) s = r.u32();
  const std::uint64_t arena_cols = r.u64();
  if (arena_cols > c.dim) throw SnapshotError("snapshot arena width corrupt");
  raw.arena.resize(static_cast<Eigen::Index>(c.capacity_chunks), static_cast<Eigen::Index>(arena_cols));
  for (Eigen::Index i = 0; i < raw.arena.rows(); ++i) {
    for (Eigen::Index j = 0; j < raw.arena.cols(); ++j) raw.arena(i, j) = snapshot_detail::get_scalar<Scalar>(r);
  }
  std::istringstream rng_text(r.bytes());
  rng_text >> raw.rng;
  if (!rng_text) throw SnapshotError("snapshot generator state corrupt");
  auto store = VhpiStore<Scalar>::from_raw_state(std::move(raw));
  if (const auto problems = store.audit(); !problems.empty()) {
    throw SnapshotError("snapshot fails store audit: " + problems.front());
  }
  return store;
}

template <typename Scalar>
void save_snapshot(const VhpiStore<Scalar>& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SnapshotError("cannot open " + path + " for writing");
  write_snapshot(store, out);
}

template <typename Scalar>
VhpiStore<Scalar> load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError("cannot open snapshot " + path);
  return read_snapshot<Scalar>(in);
}

/// Reads only the fixed header fields; used by tooling that does not know the scalar type.
struct SnapshotHeader {
  std::uint32_t version = 0;
  std::uint32_t scalar_bytes = 0;
  StoreConfig config;
  std::uint64_t total_allocations = 0;
  std::uint64_t total_evictions = 0;
};

inline SnapshotHeader read_snapshot_header(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kSnapshotMagic) {
    throw SnapshotError("not a store snapshot (bad magic)");
  }
  snapshot_detail::Reader r(in);
  SnapshotHeader h;
  h.version = r.u32();
  h.scalar_bytes = r.u32();
  h.config.chunks = r.u64();
  h.config.dim = r.u64();
  h.config.capacity_chunks = r.u64();
  h.config.table_entries = r.u64();
  h.config.num_features = r.u64();
  h.config.payload = r.u8() != 0;
  h.config.utility_mode = static_cast<UtilityMode>(r.u8());
  h.config.gamma = r.f64();
  h.config.seed = r.u64();
  h.total_allocations = r.u64();
  h.total_evictions = r.u64();
  return h;
}

}  // namespace fiited
