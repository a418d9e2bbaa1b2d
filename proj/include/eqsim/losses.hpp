// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Contrastive retrieval loss, the two equivariance regularizers with hinge
// margins, the close/distant pair split and the combined objective.
//
// Every scalar function here also has a matching gradient with respect to the
// similarity matrix so the toy model can backpropagate by hand.

#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eqsim/core.hpp"

namespace eqsim {

enum class EqSimMode { off, hybrid, v1_all, v2_all, v2_close_only };

std::string_view to_string(EqSimMode mode) noexcept;
EqSimMode parse_eqsim_mode(std::string_view text);

struct EqSimConfig {
  double alpha = 0.04;
  double beta = 0.5;
  Index k_close = 8;
  bool use_softmax = true;
  EqSimMode mode = EqSimMode::hybrid;

  void validate() const {
    require(std::isfinite(alpha) && alpha >= 0.0, ErrorKind::InvalidConfig, "eqsim.alpha must be >= 0");
    require(std::isfinite(beta) && beta >= 0.0, ErrorKind::InvalidConfig, "eqsim.beta must be >= 0");
    require(k_close >= 0, ErrorKind::InvalidConfig, "eqsim.k_close must be >= 0");
  }

  bool uses_partition() const { return mode == EqSimMode::hybrid || mode == EqSimMode::v2_close_only; }
};

/// Unordered index pairs (i < j), each list sorted lexicographically.
struct PairPartition {
  std::vector<std::pair<Index, Index>> close;
  std::vector<std::pair<Index, Index>> distant;
};

template <typename Scalar>
struct BasicLossBreakdown {
  Scalar retrieval{};
  Scalar equivariance{};
  Scalar total{};
  long n_close_pairs = 0;
  long n_distant_pairs = 0;
};

using LossBreakdown = BasicLossBreakdown<double>;

namespace detail {

template <typename Scalar>
Scalar hinge(Scalar x) {
  return x > Scalar(0) ? x : Scalar(0);
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  using std::exp;
  using std::log;
  const auto top = x.maxCoeff();
  return top + log((x.derived().array() - top).exp().sum());
}

inline std::vector<std::pair<Index, Index>> all_pairs(Index n) {
  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  return pairs;
}

}  // namespace detail

/// Symmetric InfoNCE over rows and columns of a raw score matrix.
template <typename Scalar>
Scalar itc_loss(const BasicBatchSimilarities<Scalar>& m) {
  validate(m);
  require(!m.normalized, ErrorKind::NormalizationMismatch, "itc_loss expects raw scores");
  const Index n = m.n();
  Scalar rows{0}, cols{0};
  for (Index i = 0; i < n; ++i) {
    rows += detail::log_sum_exp(m.scores.row(i)) - m.scores(i, i);
    cols += detail::log_sum_exp(m.scores.col(i)) - m.scores(i, i);
  }
  return (rows / Scalar(n) + cols / Scalar(n)) / Scalar(2);
}

/// d itc_loss / d scores.
template <typename Scalar>
Matrix<Scalar> itc_loss_gradient(const BasicBatchSimilarities<Scalar>& m) {
  const Index n = m.n();
  const Matrix<Scalar> row_soft = softmax_rowwise(m.scores);
  const Matrix<Scalar> col_soft = softmax_rowwise(m.scores.transpose()).transpose();
  return (row_soft + col_soft - Scalar(2) * Matrix<Scalar>::Identity(n, n)) / Scalar(2 * n);
}

/// [(s12 - s21)^2 - alpha]_+
template <typename Scalar>
Scalar eqsim_v1(const BasicSimilarityGrid<Scalar>& g, double alpha) {
  const Scalar d = g.s12 - g.s21;
  return detail::hinge(d * d - Scalar(alpha));
}

/// Both difference-of-difference identities, each hinged on its own.
template <typename Scalar>
Scalar eqsim_v2(const BasicSimilarityGrid<Scalar>& g, double alpha) {
  const Scalar text_dev = (g.s11 - g.s12) - (g.s22 - g.s21);
  const Scalar image_dev = (g.s11 - g.s21) - (g.s22 - g.s12);
  return detail::hinge(text_dev * text_dev - Scalar(alpha)) + detail::hinge(image_dev * image_dev - Scalar(alpha));
}

/// Splits all unordered pairs into close (either side in the other's top-k
/// off-diagonal row scores, ties to the lower index) and distant.
template <typename Scalar>
PairPartition classify_pairs(const BasicBatchSimilarities<Scalar>& m, Index k_close) {
  validate(m);
  const Index n = m.n();
  require(k_close >= 0 && k_close < n, ErrorKind::BadK,
          "classify_pairs: k_close=" + std::to_string(k_close) + " needs 0 <= k < n=" + std::to_string(n));
  std::vector<char> close(static_cast<std::size_t>(n * n), 0);
  std::vector<Index> order;
  for (Index i = 0; i < n; ++i) {
    order.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::partial_sort(order.begin(), order.begin() + k_close, order.end(), [&](Index a, Index b) {
      const Scalar sa = m.scores(i, a), sb = m.scores(i, b);
      return sa != sb ? sa > sb : a < b;
    });
    for (Index t = 0; t < k_close; ++t) {
      const Index j = order[static_cast<std::size_t>(t)];
      close[static_cast<std::size_t>(std::min(i, j) * n + std::max(i, j))] = 1;
    }
  }
  PairPartition out;
  for (const auto& [i, j] : detail::all_pairs(n)) {
    (close[static_cast<std::size_t>(i * n + j)] ? out.close : out.distant).emplace_back(i, j);
  }
  return out;
}

template <typename Scalar>
struct EqLossResult {
  Scalar value{};
  PairPartition partition;
};

/// Partition used by a mode: top-k split for the partition-aware modes,
/// otherwise every pair is treated as distant.
template <typename Scalar>
PairPartition partition_for(const BasicBatchSimilarities<Scalar>& m, const EqSimConfig& cfg) {
  if (cfg.uses_partition()) return classify_pairs(m, cfg.k_close);
  return PairPartition{{}, detail::all_pairs(m.n())};
}

/// Equivariance term on an already (optionally) normalized matrix. Each
/// unordered pair contributes once; each side is averaged over its pairs.
template <typename Scalar>
EqLossResult<Scalar> eq_loss(const BasicBatchSimilarities<Scalar>& m, const EqSimConfig& cfg) {
  cfg.validate();
  validate(m);
  require(m.normalized == cfg.use_softmax, ErrorKind::NormalizationMismatch,
          "eq_loss: matrix normalization does not match use_softmax");
  EqLossResult<Scalar> out;
  out.partition = partition_for(m, cfg);
  const auto mean_over = [&](const std::vector<std::pair<Index, Index>>& pairs, auto&& term) {
    if (pairs.empty()) return Scalar(0);
    Scalar sum{0};
    for (const auto& [i, j] : pairs) sum += term(grid_from_matrix(m, i, j), cfg.alpha);
    return sum / Scalar(static_cast<double>(pairs.size()));
  };
  const auto v1 = [](const BasicSimilarityGrid<Scalar>& g, double a) { return eqsim_v1(g, a); };
  const auto v2 = [](const BasicSimilarityGrid<Scalar>& g, double a) { return eqsim_v2(g, a); };
  const auto& p = out.partition;
  switch (cfg.mode) {
    case EqSimMode::off:
      out.value = Scalar(0);
      break;
    case EqSimMode::hybrid:
      out.value = mean_over(p.close, v2) + mean_over(p.distant, v1);
      break;
    case EqSimMode::v1_all:
      out.value = mean_over(p.distant, v1);
      break;
    case EqSimMode::v2_all:
      out.value = mean_over(p.distant, v2);
      break;
    case EqSimMode::v2_close_only:
      out.value = mean_over(p.close, v2);
      break;
  }
  return out;
}

/// d eq_loss / d scores with the partition held fixed.
template <typename Scalar>
Matrix<Scalar> eq_loss_gradient(const BasicBatchSimilarities<Scalar>& m, const EqSimConfig& cfg,
                                const PairPartition& partition) {
  const Index n = m.n();
  Matrix<Scalar> grad = Matrix<Scalar>::Zero(n, n);
  const Scalar alpha(cfg.alpha);

  const auto add_v1 = [&](Index i, Index j, Scalar weight) {
    const Scalar d = m.scores(i, j) - m.scores(j, i);
    if (d * d - alpha <= Scalar(0)) return;
    grad(i, j) += weight * Scalar(2) * d;
    grad(j, i) -= weight * Scalar(2) * d;
  };
  const auto add_v2 = [&](Index i, Index j, Scalar weight) {
    const Scalar s11 = m.scores(i, i), s12 = m.scores(i, j), s21 = m.scores(j, i), s22 = m.scores(j, j);
    const Scalar text_dev = (s11 - s12) - (s22 - s21);
    if (text_dev * text_dev - alpha > Scalar(0)) {
      const Scalar w = weight * Scalar(2) * text_dev;
      grad(i, i) += w;
      grad(i, j) -= w;
      grad(j, j) -= w;
      grad(j, i) += w;
    }
    const Scalar image_dev = (s11 - s21) - (s22 - s12);
    if (image_dev * image_dev - alpha > Scalar(0)) {
      const Scalar w = weight * Scalar(2) * image_dev;
      grad(i, i) += w;
      grad(j, i) -= w;
      grad(j, j) -= w;
      grad(i, j) += w;
    }
  };
  const auto apply = [&](const std::vector<std::pair<Index, Index>>& pairs, auto&& add) {
    if (pairs.empty()) return;
    const Scalar weight = Scalar(1) / Scalar(static_cast<double>(pairs.size()));
    for (const auto& [i, j] : pairs) add(i, j, weight);
  };
  switch (cfg.mode) {
    case EqSimMode::off:
      break;
    case EqSimMode::hybrid:
      apply(partition.close, add_v2);
      apply(partition.distant, add_v1);
      break;
    case EqSimMode::v1_all:
      apply(partition.distant, add_v1);
      break;
    case EqSimMode::v2_all:
      apply(partition.distant, add_v2);
      break;
    case EqSimMode::v2_close_only:
      apply(partition.close, add_v2);
      break;
  }
  return grad;
}

/// Pulls a gradient on Y = softmax_rows(X) back onto X.
template <typename Scalar>
Matrix<Scalar> softmax_rows_backward(const Matrix<Scalar>& y, const Matrix<Scalar>& dy) {
  Matrix<Scalar> dx(y.rows(), y.cols());
  for (Index r = 0; r < y.rows(); ++r) {
    const Scalar inner = dy.row(r).dot(y.row(r));
    dx.row(r) = y.row(r).array() * (dy.row(r).array() - inner);
  }
  return dx;
}

/// Matrix the equivariance term sees under cfg.
template <typename Scalar>
BasicBatchSimilarities<Scalar> equivariance_input(const BasicBatchSimilarities<Scalar>& raw, const EqSimConfig& cfg) {
  return cfg.use_softmax ? softmax_rows(raw) : raw;
}

/// retrieval + beta * equivariance.
template <typename Scalar>
BasicLossBreakdown<Scalar> total_loss(const BasicBatchSimilarities<Scalar>& m, const EqSimConfig& cfg) {
  cfg.validate();
  BasicLossBreakdown<Scalar> out;
  out.retrieval = itc_loss(m);
  const auto eq = eq_loss(equivariance_input(m, cfg), cfg);
  out.equivariance = eq.value;
  out.total = out.retrieval + Scalar(cfg.beta) * out.equivariance;
  out.n_close_pairs = static_cast<long>(eq.partition.close.size());
  out.n_distant_pairs = static_cast<long>(eq.partition.distant.size());
  return out;
}

/// The two ratios that equal 1 for an equivariant grid; absent when either
/// denominator is within eps of zero.
template <typename Scalar>
std::optional<std::pair<Scalar, Scalar>> equivariance_ratio(const BasicSimilarityGrid<Scalar>& g, double eps = 1e-6) {
  using std::abs;
  const Scalar den1 = g.s11 - g.s21;
  const Scalar den2 = g.s22 - g.s12;
  if (!(abs(den1) > Scalar(eps)) || !(abs(den2) > Scalar(eps))) return std::nullopt;
  return std::pair<Scalar, Scalar>{(g.s11 - g.s12) / den1, (g.s22 - g.s21) / den2};
}

}  // namespace eqsim
