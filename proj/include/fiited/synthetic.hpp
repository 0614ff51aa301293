#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "fiited/batch.hpp"
#include "fiited/random.hpp"

namespace fiited {

/// Seeded click-data generator settings.
///
/// Feature values follow a Zipf(s) popularity law. A random `hot_fraction` of each
/// feature's values carries label signal: a planted bias plus a planted vector that is
/// dotted with the signal columns of the dense input. Labels are Bernoulli(sigmoid(logit)).
struct SyntheticSpec {
  std::size_t num_features = 8;
  std::vector<std::uint64_t> cardinalities = std::vector<std::uint64_t>(8, 10000);
  double zipf_exponent = 1.2;
  double hot_fraction = 0.5;
  std::size_t samples = 200000;
  std::uint64_t seed = 1;
  /// Samples between popularity reshuffles; 0 disables drift.
  std::size_t drift_period = 0;
  std::size_t dense_dim = 16;
  /// Fraction of dense columns the planted model reads; the rest carry no label signal.
  double signal_column_fraction = 1.0;
  /// Standard deviation of the no-signal dense columns (signal columns are N(0, 1)).
  double noise_column_scale = 1.0;
  double bias_scale = 1.0;
  double vector_scale = 1.0;

  void validate() const;
  [[nodiscard]] std::uint64_t total_cardinality() const;
};

/// Truncated Zipf law over ranks 0..n-1 with pmf proportional to (rank + 1)^-s.
class ZipfTable {
 public:
  ZipfTable(std::uint64_t n, double exponent);
  [[nodiscard]] std::uint64_t size() const { return cdf_.size(); }
  [[nodiscard]] double pmf(std::uint64_t rank) const;
  [[nodiscard]] std::uint64_t sample(Rng& rng) const;

 private:
  std::vector<double> cdf_;
};

/// The planted label model; depends only on the generator seed.
struct PlantedModel {
  std::vector<std::size_t> signal_columns;
  std::vector<std::vector<bool>> hot;     // [feature][value]
  std::vector<Eigen::VectorXd> bias;      // [feature](value)
  std::vector<Eigen::MatrixXd> vectors;   // [feature](value, signal column)

  [[nodiscard]] double logit(const std::uint64_t* values, const Eigen::Ref<const Eigen::RowVectorXd>& dense) const;
};

PlantedModel make_planted_model(const SyntheticSpec& spec);

class SyntheticGenerator final : public SampleSource {
 public:
  /// `stream` selects an independent sample sequence under the same planted model
  /// (0 = training, 1 = evaluation by convention). `samples` overrides spec.samples when
  /// nonzero.
  explicit SyntheticGenerator(SyntheticSpec spec, std::uint64_t stream = 0, std::size_t samples = 0);

  bool next_batch(std::size_t max_samples, Batch& out) override;
  void reset() override;
  [[nodiscard]] std::size_t num_features() const override { return spec_.num_features; }
  [[nodiscard]] std::size_t dense_dim() const override { return spec_.dense_dim; }

  [[nodiscard]] const SyntheticSpec& spec() const { return spec_; }
  [[nodiscard]] const PlantedModel& planted() const { return planted_; }
  /// Current rank-to-value permutation of one feature.
  [[nodiscard]] const std::vector<std::uint64_t>& popularity(std::size_t feature) const { return rank_to_value_[feature]; }

 private:
  void reshuffle();

  SyntheticSpec spec_;
  std::uint64_t stream_;
  std::size_t total_;
  std::size_t emitted_ = 0;
  std::vector<ZipfTable> zipf_;
  PlantedModel planted_;
  std::vector<std::vector<std::uint64_t>> rank_to_value_;
  Rng rng_;
};

}  // namespace fiited
