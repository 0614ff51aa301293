#include "fiited/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fiited {

void SyntheticSpec::validate() const {
  if (num_features == 0) throw std::invalid_argument("synthetic: num_features must be > 0");
  if (cardinalities.size() != num_features) {
    throw std::invalid_argument("synthetic: need one cardinality per feature");
  }
  for (const auto c : cardinalities) {
    if (c < 1) throw std::invalid_argument("synthetic: cardinalities must be >= 1");
  }
  if (!(zipf_exponent > 0.0)) throw std::invalid_argument("synthetic: zipf exponent must be > 0");
  if (!(hot_fraction > 0.0 && hot_fraction <= 1.0)) throw std::invalid_argument("synthetic: hot_fraction must be in (0, 1]");
  if (dense_dim == 0) throw std::invalid_argument("synthetic: dense_dim must be > 0");
  if (!(signal_column_fraction >= 0.0 && signal_column_fraction <= 1.0)) {
    throw std::invalid_argument("synthetic: signal_column_fraction must be in [0, 1]");
  }
  if (!(noise_column_scale >= 0.0)) throw std::invalid_argument("synthetic: noise_column_scale must be >= 0");
}

std::uint64_t SyntheticSpec::total_cardinality() const {
  return std::accumulate(cardinalities.begin(), cardinalities.end(), std::uint64_t{0});
}

ZipfTable::ZipfTable(std::uint64_t n, double exponent) : cdf_(n) {
  if (n == 0) throw std::invalid_argument("zipf table needs at least one rank");
  double total = 0.0;
  for (std::uint64_t r = 0; r < n; ++r) {
    total += std::exp(-exponent * std::log(static_cast<double>(r + 1)));
    cdf_[r] = total;
  }
  for (double& c : cdf_) c /= total;
  cdf_.back() = 1.0;
}

double ZipfTable::pmf(std::uint64_t rank) const {
  return rank == 0 ? cdf_[0] : cdf_[rank] - cdf_[rank - 1];
}

std::uint64_t ZipfTable::sample(Rng& rng) const {
  const double u = uniform01(rng);
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
}

double PlantedModel::logit(const std::uint64_t* values, const Eigen::Ref<const Eigen::RowVectorXd>& dense) const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(signal_columns.size()));
  for (std::size_t i = 0; i < signal_columns.size(); ++i) x[static_cast<Eigen::Index>(i)] = dense[static_cast<Eigen::Index>(signal_columns[i])];
  double z = 0.0;
  for (std::size_t f = 0; f < hot.size(); ++f) {
    const auto v = values[f];
    if (!hot[f][v]) continue;
    const auto row = static_cast<Eigen::Index>(v);
    z += bias[f][row];
    if (x.size() > 0) z += vectors[f].row(row).dot(x);
  }
  return z;
}

PlantedModel make_planted_model(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 1));
  PlantedModel m;
  const auto n_signal = static_cast<std::size_t>(std::lround(spec.signal_column_fraction * static_cast<double>(spec.dense_dim)));
  std::vector<std::size_t> cols(spec.dense_dim);
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  for (std::size_t i = 0; i < n_signal; ++i) {
    std::swap(cols[i], cols[i + uniform_index(rng, spec.dense_dim - i)]);
  }
  cols.resize(n_signal);
  std::sort(cols.begin(), cols.end());
  m.signal_columns = cols;

  const double vec_sd = n_signal > 0 ? spec.vector_scale / std::sqrt(static_cast<double>(n_signal)) : 0.0;
  for (std::size_t f = 0; f < spec.num_features; ++f) {
    const auto card = spec.cardinalities[f];
    const auto n_hot = static_cast<std::uint64_t>(std::llround(spec.hot_fraction * static_cast<double>(card)));
    std::vector<std::uint64_t> ids(card);
    std::iota(ids.begin(), ids.end(), std::uint64_t{0});
    for (std::uint64_t i = 0; i < n_hot && i < card; ++i) std::swap(ids[i], ids[i + uniform_index(rng, card - i)]);
    std::vector<bool> hot(card, false);
    for (std::uint64_t i = 0; i < n_hot && i < card; ++i) hot[ids[i]] = true;

    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(card));
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(card), static_cast<Eigen::Index>(n_signal));
    for (std::uint64_t v = 0; v < card; ++v) {
      if (!hot[v]) continue;
      const auto row = static_cast<Eigen::Index>(v);
      b[row] = spec.bias_scale * standard_normal(rng);
      for (Eigen::Index j = 0; j < t.cols(); ++j) t(row, j) = vec_sd * standard_normal(rng);
    }
    m.hot.push_back(std::move(hot));
    m.bias.push_back(std::move(b));
    m.vectors.push_back(std::move(t));
  }
  return m;
}

SyntheticGenerator::SyntheticGenerator(SyntheticSpec spec, std::uint64_t stream, std::size_t samples)
    : spec_(std::move(spec)), stream_(stream), total_(samples != 0 ? samples : spec_.samples) {
  spec_.validate();
  for (const auto c : spec_.cardinalities) zipf_.emplace_back(c, spec_.zipf_exponent);
  planted_ = make_planted_model(spec_);
  reset();
}

void SyntheticGenerator::reset() {
  rng_ = Rng(derive_seed(spec_.seed, 100 + stream_));
  emitted_ = 0;
  rank_to_value_.clear();
  for (const auto c : spec_.cardinalities) {
    std::vector<std::uint64_t> perm(c);
    std::iota(perm.begin(), perm.end(), std::uint64_t{0});
    rank_to_value_.push_back(std::move(perm));
  }
}

void SyntheticGenerator::reshuffle() {
  for (auto& perm : rank_to_value_) {
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng_, i)]);
  }
}

bool SyntheticGenerator::next_batch(std::size_t max_samples, Batch& out) {
  const std::size_t n = std::min(max_samples, total_ - emitted_);
  out.reset(spec_.num_features, spec_.dense_dim, n);
  if (n == 0) return false;
  std::vector<std::uint64_t> values(spec_.num_features);
  std::vector<bool> is_signal(spec_.dense_dim, false);
  for (const auto c : planted_.signal_columns) is_signal[c] = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (spec_.drift_period > 0 && emitted_ > 0 && emitted_ % spec_.drift_period == 0) reshuffle();
    for (std::size_t f = 0; f < spec_.num_features; ++f) {
      values[f] = rank_to_value_[f][zipf_[f].sample(rng_)];
      out.sparse.push_back(values[f]);
    }
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < spec_.dense_dim; ++j) {
      const double scale = is_signal[j] ? 1.0 : spec_.noise_column_scale;
      out.dense(row, static_cast<Eigen::Index>(j)) = scale * standard_normal(rng_);
    }
    const double z = planted_.logit(values.data(), out.dense.row(row));
    const double prob = 1.0 / (1.0 + std::exp(-z));
    out.labels.push_back(uniform01(rng_) < prob ? 1 : 0);
    ++emitted_;
  }
  return true;
}

}  // namespace fiited
