#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "fiited/hash.hpp"

namespace fiited {

/// A mini-batch of click samples: F categorical values, a dense vector and a 0/1 label each.
struct Batch {
  std::size_t num_features = 0;
  std::vector<std::uint64_t> sparse;  // size() x num_features, row-major
  Eigen::MatrixXd dense;              // size() x dense_dim
  std::vector<int> labels;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] FeatureKey key(std::size_t sample, std::size_t feature) const {
    return {static_cast<std::uint32_t>(feature), sparse[sample * num_features + feature]};
  }

  void reset(std::size_t features, std::size_t dense_dim, std::size_t capacity) {
    num_features = features;
    sparse.clear();
    sparse.reserve(capacity * features);
    labels.clear();
    labels.reserve(capacity);
    dense.resize(static_cast<Eigen::Index>(capacity), static_cast<Eigen::Index>(dense_dim));
  }
  /// Drops unused preallocated dense rows after filling.
  void shrink_dense() { dense.conservativeResize(static_cast<Eigen::Index>(labels.size()), dense.cols()); }
};

/// Single-consumer stream of batches that can be rewound for another epoch.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  /// Fills `out` with up to `max_samples` samples; returns false once exhausted.
  virtual bool next_batch(std::size_t max_samples, Batch& out) = 0;
  virtual void reset() = 0;
  [[nodiscard]] virtual std::size_t num_features() const = 0;
  [[nodiscard]] virtual std::size_t dense_dim() const = 0;
};

}  // namespace fiited
