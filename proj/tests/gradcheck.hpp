#pragma once

// Central finite-difference check of InteractionModel::backward.

#include <algorithm>
#include <cmath>
#include <vector>

#include "fiited/interaction_model.hpp"

namespace gradcheck {

struct Result {
  double worst_relative = 0.0;
  std::size_t checked = 0;
};

struct Problem {
  fiited::InteractionModel<double> model;
  Eigen::MatrixXd embeddings;
  Eigen::MatrixXd dense;
  std::vector<int> labels;
};

inline Problem random_problem(const fiited::ModelConfig& cfg, std::size_t batch, std::uint64_t seed) {
  fiited::Rng rng(seed);
  Problem p{fiited::InteractionModel<double>(cfg), {}, {}, {}};
  const auto B = static_cast<Eigen::Index>(batch);
  p.embeddings.resize(B * static_cast<Eigen::Index>(cfg.num_features), static_cast<Eigen::Index>(cfg.embedding_dim));
  for (Eigen::Index i = 0; i < p.embeddings.size(); ++i) p.embeddings.data()[i] = fiited::standard_normal(rng) * 0.5;
  p.dense.resize(B, static_cast<Eigen::Index>(cfg.dense_dim));
  for (Eigen::Index i = 0; i < p.dense.size(); ++i) p.dense.data()[i] = fiited::standard_normal(rng);
  for (std::size_t s = 0; s < batch; ++s) p.labels.push_back(static_cast<int>(fiited::uniform_index(rng, 2)));
  auto& prm = p.model.params();
  for (auto& b : prm.b) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.1 * fiited::standard_normal(rng);
  }
  for (Eigen::Index i = 0; i < prm.dense_b.size(); ++i) prm.dense_b[i] = 0.1 * fiited::standard_normal(rng);
  return p;
}

inline double loss(Problem& p) { return p.model.forward(p.embeddings, p.dense, p.labels).loss; }

/// |a - n| / max(|a|, |n|, 1e-5); the floor keeps round-off on vanishing gradients from
/// dominating.
inline double relative(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
  return std::abs(analytic - numeric) / scale;
}

inline void check_block(Problem& p, double* values, const double* analytic, Eigen::Index n, double h, Result& r) {
  for (Eigen::Index i = 0; i < n; ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss(p);
    values[i] = saved - h;
    const double down = loss(p);
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    r.worst_relative = std::max(r.worst_relative, relative(analytic[i], numeric));
    ++r.checked;
  }
}

/// Compares every embedding and parameter gradient against central differences.
inline Result run(Problem& p, double h = 1e-6) {
  const auto fp = p.model.forward(p.embeddings, p.dense, p.labels);
  const auto g = p.model.backward(fp, p.embeddings, p.dense, p.labels);
  Result r;
  check_block(p, p.embeddings.data(), g.embeddings.data(), p.embeddings.size(), h, r);
  auto& prm = p.model.params();
  if (p.model.config().projection == fiited::DenseProjection::kLearned) {
    check_block(p, prm.dense_w.data(), g.params.dense_w.data(), prm.dense_w.size(), h, r);
  }
  check_block(p, prm.dense_b.data(), g.params.dense_b.data(), prm.dense_b.size(), h, r);
  for (std::size_t l = 0; l < prm.w.size(); ++l) {
    check_block(p, prm.w[l].data(), g.params.w[l].data(), prm.w[l].size(), h, r);
    check_block(p, prm.b[l].data(), g.params.b[l].data(), prm.b[l].size(), h, r);
  }
  return r;
}

}  // namespace gradcheck
