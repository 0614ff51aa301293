#include "fiited/dimension_mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fiited {

DimensionMask::DimensionMask(std::size_t dim, double keep_ratio, std::int64_t cold_start_iters)
    : keep_(dim, true),
      energy_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim))),
      keep_ratio_(keep_ratio),
      cold_start_iters_(cold_start_iters) {
  if (dim == 0) throw std::invalid_argument("dimension mask needs D > 0");
  if (!(keep_ratio >= 0.0 && keep_ratio <= 1.0)) throw std::invalid_argument("dimension keep ratio must be in [0, 1]");
  if (cold_start_iters < 0) throw std::invalid_argument("cold start length must be >= 0");
}

std::size_t DimensionMask::target_kept() const {
  return static_cast<std::size_t>(std::lround(keep_ratio_ * static_cast<double>(keep_.size())));
}

void DimensionMask::accumulate(const Eigen::Ref<const Eigen::MatrixXd>& grad_rows) {
  if (grad_rows.cols() != energy_.size()) throw std::invalid_argument("gradient rows must have D columns");
  energy_ += grad_rows.array().square().colwise().sum().matrix().transpose();
}

std::vector<bool> select_top_columns(const Eigen::Ref<const Eigen::VectorXd>& energy, std::size_t kept) {
  std::vector<std::size_t> order(static_cast<std::size_t>(energy.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return energy[static_cast<Eigen::Index>(a)] > energy[static_cast<Eigen::Index>(b)];
  });
  std::vector<bool> keep(order.size(), false);
  for (std::size_t i = 0; i < kept && i < order.size(); ++i) keep[order[i]] = true;
  return keep;
}

const std::vector<bool>& DimensionMask::decide() {
  const std::size_t kept = target_kept();
  if (kept == 0) throw std::invalid_argument("dimension keep ratio leaves no column");
  keep_ = select_top_columns(energy_, kept);
  decided_ = true;
  return keep_;
}

void DimensionMask::restore(std::vector<bool> keep, Eigen::VectorXd energy, bool decided) {
  if (keep.size() != keep_.size() || energy.size() != energy_.size()) {
    throw std::invalid_argument("restored dimension mask has the wrong width");
  }
  keep_ = std::move(keep);
  energy_ = std::move(energy);
  decided_ = decided;
}

}  // namespace fiited
