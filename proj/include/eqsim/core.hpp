// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Similarity primitives and the grid/matrix data model shared by the
// losses, the toy model and the metrics.

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eqsim/error.hpp"

namespace eqsim {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Image or text feature vector.
using EmbVector = Vector<double>;

enum class Modality { image, text };

inline constexpr double kEqualityTolerance = 1e-9;
inline constexpr double kDegenerateNorm = 1e-12;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.derived().array().isFinite().all();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& x, const char* what) {
  require(all_finite(x), ErrorKind::NonFinite, std::string(what) + " has non-finite entries");
}

/// u.v / (|u| |v|). Symmetric in its arguments bit for bit.
template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedU>& u,
                                            const Eigen::MatrixBase<DerivedV>& v) {
  using Scalar = typename DerivedU::Scalar;
  require(u.size() == v.size(), ErrorKind::DimensionMismatch,
          "cosine_similarity: dims " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  require(nu >= Scalar(kDegenerateNorm) && nv >= Scalar(kDegenerateNorm), ErrorKind::DegenerateVector,
          "cosine_similarity: vector norm below 1e-12");
  return u.dot(v) / (nu * nv);
}

/// The four cross scores of two matched pairs: s12 is image 1 against text 2.
template <typename Scalar>
struct BasicSimilarityGrid {
  Scalar s11{}, s12{}, s21{}, s22{};
  bool normalized = false;

  /// Pair 1 and pair 2 swapped.
  BasicSimilarityGrid relabeled() const { return {s22, s21, s12, s11, normalized}; }
};

using SimilarityGrid = BasicSimilarityGrid<double>;

/// N x N image-by-text score matrix of a batch; scores(i, j) = s(image i, text j).
template <typename Scalar>
struct BasicBatchSimilarities {
  Matrix<Scalar> scores;
  Scalar temperature = Scalar(1);
  bool normalized = false;

  Index n() const { return scores.rows(); }
};

using BatchSimilarities = BasicBatchSimilarities<double>;

template <typename Scalar>
void validate(const BasicBatchSimilarities<Scalar>& m) {
  require(m.scores.rows() == m.scores.cols(), ErrorKind::ShapeMismatch, "similarity matrix must be square");
  require(m.n() >= 2, ErrorKind::ShapeMismatch, "similarity matrix needs n >= 2");
  require_finite(m.scores, "similarity matrix");
}

template <typename Scalar>
BasicBatchSimilarities<Scalar> batch_similarity(std::span<const Vector<Scalar>> images,
                                                std::span<const Vector<Scalar>> texts, Scalar temperature) {
  require(images.size() == texts.size(), ErrorKind::LengthMismatch, "batch_similarity: image/text counts differ");
  require(images.size() >= 2, ErrorKind::ShapeMismatch, "batch_similarity: need at least 2 pairs");
  require(temperature > Scalar(0) && std::isfinite(static_cast<double>(temperature)), ErrorKind::BadTemperature,
          "batch_similarity: temperature must be positive");
  const auto n = static_cast<Index>(images.size());
  BasicBatchSimilarities<Scalar> out;
  out.scores.resize(n, n);
  out.temperature = temperature;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      out.scores(i, j) = cosine_similarity(images[i], texts[j]) / temperature;
    }
  }
  return out;
}

template <typename Scalar>
BasicBatchSimilarities<Scalar> batch_similarity(const std::vector<Vector<Scalar>>& images,
                                                const std::vector<Vector<Scalar>>& texts, Scalar temperature) {
  return batch_similarity(std::span<const Vector<Scalar>>(images), std::span<const Vector<Scalar>>(texts),
                          temperature);
}

/// Row-wise softmax with max subtraction.
template <typename Derived>
auto softmax_rowwise(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out = x;
  for (Index r = 0; r < out.rows(); ++r) {
    const Scalar top = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - top).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename Scalar>
BasicBatchSimilarities<Scalar> softmax_rows(const BasicBatchSimilarities<Scalar>& m) {
  require(!m.normalized, ErrorKind::AlreadyNormalized, "softmax_rows: matrix already normalized");
  BasicBatchSimilarities<Scalar> out;
  out.scores = softmax_rowwise(m.scores);
  out.temperature = m.temperature;
  out.normalized = true;
  return out;
}

template <typename Scalar>
BasicSimilarityGrid<Scalar> grid_from_matrix(const BasicBatchSimilarities<Scalar>& m, Index i, Index j) {
  require(i >= 0 && j >= 0 && i < m.n() && j < m.n(), ErrorKind::IndexOutOfRange,
          "grid_from_matrix: index out of range");
  require(i != j, ErrorKind::SamePairIndex, "grid_from_matrix: i == j");
  return {m.scores(i, i), m.scores(i, j), m.scores(j, i), m.scores(j, j), m.normalized};
}

/// Grid from four embeddings using plain cosine similarity.
template <typename Scalar>
BasicSimilarityGrid<Scalar> grid_from_embeddings(const Vector<Scalar>& image1, const Vector<Scalar>& text1,
                                                 const Vector<Scalar>& image2, const Vector<Scalar>& text2) {
  return {cosine_similarity(image1, text1), cosine_similarity(image1, text2), cosine_similarity(image2, text1),
          cosine_similarity(image2, text2), false};
}

}  // namespace eqsim
