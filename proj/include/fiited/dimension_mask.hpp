#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace fiited {

/// Global per-column keep/prune state for dimension-level (2D) pruning.
///
/// During the cold start every column is live and accumulates the squared gradient of
/// every touched entry. The first decision keeps the round(keep_ratio * D) columns with
/// the most energy.
class DimensionMask {
 public:
  DimensionMask(std::size_t dim, double keep_ratio, std::int64_t cold_start_iters);

  [[nodiscard]] std::size_t dim() const { return keep_.size(); }
  [[nodiscard]] double keep_ratio() const { return keep_ratio_; }
  [[nodiscard]] std::int64_t cold_start_iters() const { return cold_start_iters_; }
  [[nodiscard]] const std::vector<bool>& keep() const { return keep_; }
  [[nodiscard]] const Eigen::VectorXd& energy() const { return energy_; }
  [[nodiscard]] bool decided() const { return decided_; }
  [[nodiscard]] std::size_t target_kept() const;

  /// energy[j] += sum over rows of grad(row, j)^2. Rows are per-entry gradient vectors.
  void accumulate(const Eigen::Ref<const Eigen::MatrixXd>& grad_rows);

  /// Top-energy column selection (ties to the lower index). Marks the mask decided.
  /// Throws std::invalid_argument when the ratio would keep no column.
  const std::vector<bool>& decide();

  /// Restores a previously decided mask (snapshot resume).
  void restore(std::vector<bool> keep, Eigen::VectorXd energy, bool decided);

 private:
  std::vector<bool> keep_;
  Eigen::VectorXd energy_;
  double keep_ratio_;
  std::int64_t cold_start_iters_;
  bool decided_ = false;
};

/// Free-function form of DimensionMask::accumulate.
inline void update_dimension_energy(DimensionMask& mask, const Eigen::Ref<const Eigen::MatrixXd>& grad_rows) {
  mask.accumulate(grad_rows);
}

/// Columns to keep given per-column energies: the `kept` largest, ties to the lower index.
std::vector<bool> select_top_columns(const Eigen::Ref<const Eigen::VectorXd>& energy, std::size_t kept);

/// Free-function form of DimensionMask::decide.
inline std::vector<bool> decide_dimensions(DimensionMask& mask) { return mask.decide(); }

}  // namespace fiited
