#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace fiited {

using SlotIndex = std::uint32_t;

/// Raised when a caller breaks an operation's precondition (evicting a pruned chunk, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Chunk address manager: a LIFO stack of reusable arena slots.
///
/// A fresh manager holds every slot with slot 0 on top, so allocation hands out
/// 0, 1, 2, ... until the first eviction, after which the most recently freed
/// slot is always reused first.
class FreeAddressManager {
 public:
  FreeAddressManager() = default;
  explicit FreeAddressManager(std::size_t capacity) {
    stack_.reserve(capacity);
    for (std::size_t s = capacity; s > 0; --s) stack_.push_back(static_cast<SlotIndex>(s - 1));
  }

  std::optional<SlotIndex> pop() {
    if (stack_.empty()) return std::nullopt;
    const SlotIndex s = stack_.back();
    stack_.pop_back();
    return s;
  }

  void push(SlotIndex slot) { stack_.push_back(slot); }

  [[nodiscard]] std::size_t size() const { return stack_.size(); }
  [[nodiscard]] bool empty() const { return stack_.empty(); }
  [[nodiscard]] std::optional<SlotIndex> top() const {
    if (stack_.empty()) return std::nullopt;
    return stack_.back();
  }
  /// Bottom-to-top view of the stack.
  [[nodiscard]] std::span<const SlotIndex> contents() const { return stack_; }

  /// Replaces the contents wholesale (bottom-to-top); used when restoring snapshots.
  void assign(std::vector<SlotIndex> bottom_to_top) { stack_ = std::move(bottom_to_top); }

 private:
  std::vector<SlotIndex> stack_;
};

/// Physical chunk storage: capacity_chunks slots of `width` values each, row-major so one
/// slot is one contiguous row.
template <typename Scalar>
class ChunkArena {
 public:
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  ChunkArena() = default;
  ChunkArena(std::size_t capacity_chunks, std::size_t width)
      : values_(Storage::Zero(static_cast<Eigen::Index>(capacity_chunks),
                              static_cast<Eigen::Index>(width))) {
    if (capacity_chunks >= (std::size_t{1} << 32)) {
      throw std::invalid_argument("arena capacity must fit 32-bit slot indices");
    }
  }

  [[nodiscard]] std::size_t capacity() const { return static_cast<std::size_t>(values_.rows()); }
  [[nodiscard]] std::size_t width() const { return static_cast<std::size_t>(values_.cols()); }

  auto slot(SlotIndex s) { return values_.row(static_cast<Eigen::Index>(s)); }
  auto slot(SlotIndex s) const { return values_.row(static_cast<Eigen::Index>(s)); }

  [[nodiscard]] const Storage& values() const { return values_; }
  Storage& values() { return values_; }

  void replace(Storage values) { values_ = std::move(values); }

 private:
  Storage values_;
};

}  // namespace fiited
