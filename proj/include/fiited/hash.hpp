#pragma once

#include <cstddef>
#include <cstdint>

namespace fiited {

/// A sparse feature (table) id paired with a categorical value of that feature.
struct FeatureKey {
  std::uint32_t feature_id = 0;
  std::uint64_t feature_value = 0;

  friend bool operator==(const FeatureKey&, const FeatureKey&) = default;
};

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// 64-bit digest of a key: mix64(value XOR mix64(feature_id + 0x51ed270b27a0e1d9)).
/// Only integer arithmetic, so the digest is identical on every platform.
constexpr std::uint64_t key_digest(const FeatureKey& key) noexcept {
  return mix64(key.feature_value ^ mix64(std::uint64_t{key.feature_id} + 0x51ed270b27a0e1d9ULL));
}

/// Maps a key onto [0, table_entries) with a multiply-high range reduction of its digest.
/// Requires table_entries > 0.
std::size_t hash_key(const FeatureKey& key, std::size_t table_entries) noexcept;

}  // namespace fiited
