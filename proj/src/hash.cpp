#include "fiited/hash.hpp"

namespace fiited {

std::size_t hash_key(const FeatureKey& key, std::size_t table_entries) noexcept {
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(key_digest(key)) * static_cast<std::uint64_t>(table_entries);
  return static_cast<std::size_t>(wide >> 64);
}

}  // namespace fiited
