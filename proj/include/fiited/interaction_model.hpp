#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "fiited/random.hpp"

namespace fiited {

enum class DenseProjection { kLearned, kIdentity };

struct ModelConfig {
  std::size_t num_features = 8;   // F
  std::size_t embedding_dim = 16; // D
  std::size_t dense_dim = 16;
  std::vector<std::size_t> mlp_layers{32};  // hidden widths; a 1-wide logit layer follows
  double lr = 0.1;
  /// Step size for embedding rows; <= 0 reuses lr.
  double embedding_lr = 0.0;
  std::uint64_t seed = 1;
  /// kIdentity feeds dense input + bias straight into the interaction (needs dense_dim == D).
  DenseProjection projection = DenseProjection::kLearned;

  void validate() const {
    if (num_features == 0) throw std::invalid_argument("model: num_features must be > 0");
    if (embedding_dim == 0) throw std::invalid_argument("model: embedding_dim must be > 0");
    if (dense_dim == 0) throw std::invalid_argument("model: dense_dim must be > 0");
    if (projection == DenseProjection::kIdentity && dense_dim != embedding_dim) {
      throw std::invalid_argument("model: identity projection needs dense_dim == embedding_dim");
    }
    for (const auto w : mlp_layers) {
      if (w == 0) throw std::invalid_argument("model: hidden layer widths must be > 0");
    }
    if (!(lr > 0.0)) throw std::invalid_argument("model: lr must be > 0");
  }
  [[nodiscard]] double effective_embedding_lr() const { return embedding_lr > 0.0 ? embedding_lr : lr; }
};

/// Embedding interaction model: dense projection z, all pairwise dot products among
/// {z, e_1..e_F}, then an MLP over [z, dots] with ReLU hidden layers and one logit.
///
/// Embeddings arrive as a (B*F) x D matrix, row s*F + f holding feature f of sample s.
template <typename Scalar>
class InteractionModel {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  struct Params {
    Matrix dense_w;  // D x dense_dim (unused with identity projection)
    Vector dense_b;  // D
    std::vector<Matrix> w;  // layer l: out x in
    std::vector<Vector> b;
  };

  struct ForwardPass {
    Matrix z;                  // B x D
    Matrix h0;                 // B x interaction_width
    std::vector<Matrix> pre;   // per layer, B x out
    std::vector<Matrix> act;   // per hidden layer, B x out (ReLU)
    Vector logits;             // B
    double loss = 0.0;         // mean log loss
    std::size_t correct = 0;   // predictions (p >= 0.5) matching labels
  };

  struct Gradients {
    Params params;
    Matrix embeddings;  // (B*F) x D, w.r.t. the zero-padded fetched vectors
  };

  explicit InteractionModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    Rng rng(derive_seed(config_.seed, 0x30de1));
    const auto D = static_cast<Eigen::Index>(config_.embedding_dim);
    const auto dd = static_cast<Eigen::Index>(config_.dense_dim);
    params_.dense_w = Matrix::Zero(D, dd);
    if (config_.projection == DenseProjection::kLearned) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dd));
      fill_uniform(params_.dense_w, bound, rng);
    }
    params_.dense_b = Vector::Zero(D);
    std::size_t in = interaction_width();
    std::vector<std::size_t> widths = config_.mlp_layers;
    widths.push_back(1);
    for (const std::size_t out : widths) {
      Matrix w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
      fill_uniform(w, std::sqrt(6.0 / static_cast<double>(in)), rng);
      params_.w.push_back(std::move(w));
      params_.b.push_back(Vector::Zero(static_cast<Eigen::Index>(out)));
      in = out;
    }
  }

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] std::size_t interaction_width() const {
    const std::size_t vectors = config_.num_features + 1;
    return config_.embedding_dim + vectors * (vectors - 1) / 2;
  }
  [[nodiscard]] Params& params() { return params_; }
  [[nodiscard]] const Params& params() const { return params_; }

  [[nodiscard]] ForwardPass forward(const Matrix& embeddings, const Matrix& dense, std::span<const int> labels) const {
    const auto B = dense.rows();
    const auto F = static_cast<Eigen::Index>(config_.num_features);
    const auto D = static_cast<Eigen::Index>(config_.embedding_dim);
    check_shapes(embeddings, dense, labels);
    ForwardPass fp;
    if (config_.projection == DenseProjection::kLearned) {
      fp.z = dense * params_.dense_w.transpose();
    } else {
      fp.z = dense;
    }
    fp.z.rowwise() += params_.dense_b.transpose();

    fp.h0.resize(B, static_cast<Eigen::Index>(interaction_width()));
    Matrix V(F + 1, D);
    for (Eigen::Index s = 0; s < B; ++s) {
      V.row(0) = fp.z.row(s);
      V.bottomRows(F) = embeddings.middleRows(s * F, F);
      const Matrix G = V * V.transpose();
      fp.h0.row(s).head(D) = fp.z.row(s);
      Eigen::Index p = D;
      for (Eigen::Index i = 0; i <= F; ++i) {
        for (Eigen::Index j = i + 1; j <= F; ++j) fp.h0(s, p++) = G(i, j);
      }
    }

    const Matrix* input = &fp.h0;
    const std::size_t L = params_.w.size();
    for (std::size_t l = 0; l < L; ++l) {
      Matrix pre = (*input) * params_.w[l].transpose();
      pre.rowwise() += params_.b[l].transpose();
      fp.pre.push_back(std::move(pre));
      if (l + 1 < L) {
        fp.act.push_back(fp.pre.back().cwiseMax(Scalar(0)));
        input = &fp.act.back();
      }
    }
    fp.logits = fp.pre.back().col(0);

    double total = 0.0;
    for (Eigen::Index s = 0; s < B; ++s) {
      const double l = static_cast<double>(fp.logits[s]);
      const double y = labels[static_cast<std::size_t>(s)];
      total += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
      if ((l >= 0.0 ? 1 : 0) == labels[static_cast<std::size_t>(s)]) ++fp.correct;
    }
    fp.loss = B > 0 ? total / static_cast<double>(B) : 0.0;
    return fp;
  }

  /// Gradients of the mean log loss of `fp` w.r.t. every parameter and fetched embedding.
  [[nodiscard]] Gradients backward(const ForwardPass& fp, const Matrix& embeddings, const Matrix& dense,
                                   std::span<const int> labels) const {
    const auto B = dense.rows();
    const auto F = static_cast<Eigen::Index>(config_.num_features);
    const auto D = static_cast<Eigen::Index>(config_.embedding_dim);
    Gradients g;
    const std::size_t L = params_.w.size();
    g.params.w.resize(L);
    g.params.b.resize(L);

    Matrix delta(B, 1);
    for (Eigen::Index s = 0; s < B; ++s) {
      const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(fp.logits[s])));
      delta(s, 0) = static_cast<Scalar>((p - labels[static_cast<std::size_t>(s)]) / static_cast<double>(B));
    }
    for (std::size_t l = L; l-- > 0;) {
      const Matrix& input = l == 0 ? fp.h0 : fp.act[l - 1];
      g.params.w[l] = delta.transpose() * input;
      g.params.b[l] = delta.colwise().sum().transpose();
      Matrix upstream = delta * params_.w[l];
      if (l > 0) {
        delta = upstream.cwiseProduct((fp.pre[l - 1].array() > Scalar(0)).template cast<Scalar>().matrix());
      } else {
        delta = std::move(upstream);  // dL/dh0
      }
    }

    Matrix dz = delta.leftCols(D);
    g.embeddings = Matrix::Zero(B * F, D);
    Matrix V(F + 1, D);
    Matrix dV(F + 1, D);
    for (Eigen::Index s = 0; s < B; ++s) {
      V.row(0) = fp.z.row(s);
      V.bottomRows(F) = embeddings.middleRows(s * F, F);
      dV.setZero();
      Eigen::Index p = D;
      for (Eigen::Index i = 0; i <= F; ++i) {
        for (Eigen::Index j = i + 1; j <= F; ++j) {
          const Scalar gd = delta(s, p++);
          dV.row(i) += gd * V.row(j);
          dV.row(j) += gd * V.row(i);
        }
      }
      dz.row(s) += dV.row(0);
      g.embeddings.middleRows(s * F, F) = dV.bottomRows(F);
    }
    if (config_.projection == DenseProjection::kLearned) {
      g.params.dense_w = dz.transpose() * dense;
    } else {
      g.params.dense_w = Matrix::Zero(params_.dense_w.rows(), params_.dense_w.cols());
    }
    g.params.dense_b = dz.colwise().sum().transpose();
    return g;
  }

  /// Plain SGD step on the dense parameters.
  void apply(const Params& grads, double lr) {
    const auto step = static_cast<Scalar>(lr);
    if (config_.projection == DenseProjection::kLearned) params_.dense_w -= step * grads.dense_w;
    params_.dense_b -= step * grads.dense_b;
    for (std::size_t l = 0; l < params_.w.size(); ++l) {
      params_.w[l] -= step * grads.w[l];
      params_.b[l] -= step * grads.b[l];
    }
  }

 private:
  static void fill_uniform(Matrix& m, double bound, Rng& rng) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<Scalar>(uniform_real(rng, -bound, bound));
    }
  }

  void check_shapes(const Matrix& embeddings, const Matrix& dense, std::span<const int> labels) const {
    const auto B = dense.rows();
    if (dense.cols() != static_cast<Eigen::Index>(config_.dense_dim)) throw std::invalid_argument("dense width mismatch");
    if (embeddings.rows() != B * static_cast<Eigen::Index>(config_.num_features) ||
        embeddings.cols() != static_cast<Eigen::Index>(config_.embedding_dim)) {
      throw std::invalid_argument("embedding matrix must be (B*F) x D");
    }
    if (labels.size() != static_cast<std::size_t>(B)) throw std::invalid_argument("label count mismatch");
  }

  ModelConfig config_;
  Params params_;
};

}  // namespace fiited
