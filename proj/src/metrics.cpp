// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

namespace eqsim {

SamplePoints sample_points(const SimilarityGrid& g) {
  SamplePoints p;
  p.text = g.s11 > g.s12 && g.s22 > g.s21;
  p.image = g.s11 > g.s21 && g.s22 > g.s12;
  p.group = p.text && p.image;
  return p;
}

GroupMetricsReport group_metrics(std::span<const SimilarityGrid> grids) {
  require(!grids.empty(), ErrorKind::EmptyEvalSet, "group_metrics: no grids");
  GroupMetricsReport r;
  r.n_samples = static_cast<long>(grids.size());
  r.per_sample.reserve(grids.size());
  long text = 0, image = 0, group = 0;
  for (const auto& g : grids) {
    const auto p = sample_points(g);
    text += p.text;
    image += p.image;
    group += p.group;
    r.per_sample.push_back(p);
  }
  const double n = static_cast<double>(r.n_samples);
  r.text_score = static_cast<double>(text) / n;
  r.image_score = static_cast<double>(image) / n;
  r.group_score = static_cast<double>(group) / n;
  return r;
}

ValseReport valse_metrics(std::span<const double> correct_scores, std::span<const double> foil_scores,
                          double threshold) {
  require(correct_scores.size() == foil_scores.size(), ErrorKind::LengthMismatch,
          "valse_metrics: correct and foil counts differ");
  require(!correct_scores.empty(), ErrorKind::EmptyEvalSet, "valse_metrics: no scores");
  const auto above = std::count_if(correct_scores.begin(), correct_scores.end(), [&](double s) { return s > threshold; });
  const auto below = std::count_if(foil_scores.begin(), foil_scores.end(), [&](double s) { return s < threshold; });
  ValseReport r;
  r.threshold = threshold;
  r.p_c = static_cast<double>(above) / static_cast<double>(correct_scores.size());
  r.p_f = static_cast<double>(below) / static_cast<double>(foil_scores.size());
  r.acc = static_cast<double>(above + below) / static_cast<double>(correct_scores.size() + foil_scores.size());
  r.min_pc_pf = std::min(r.p_c, r.p_f);
  return r;
}

namespace {

// Entries ranked ahead of the diagonal along one line of the matrix.
template <typename Line>
Index rank_of_diagonal(const Line& line, Index diag) {
  const double d = line(diag);
  Index rank = 0;
  for (Index j = 0; j < line.size(); ++j) {
    if (j == diag) continue;
    if (line(j) > d || (line(j) == d && j < diag)) ++rank;
  }
  return rank;
}

}  // namespace

RecallReport recall_at_k(const BatchSimilarities& m, std::span<const Index> ks) {
  validate(m);
  const Index n = m.n();
  for (Index k : ks)
    require(k >= 1 && k <= n, ErrorKind::BadK, "recall_at_k: k=" + std::to_string(k) + " outside [1, n]");
  std::vector<Index> row_rank(static_cast<std::size_t>(n)), col_rank(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    row_rank[static_cast<std::size_t>(i)] = rank_of_diagonal(m.scores.row(i), i);
    col_rank[static_cast<std::size_t>(i)] = rank_of_diagonal(m.scores.col(i), i);
  }
  RecallReport r;
  for (Index k : ks) {
    const auto hits = [&](const std::vector<Index>& ranks) {
      return static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [&](Index rank) { return rank < k; })) /
             static_cast<double>(n);
    };
    r.text_to_image[k] = hits(row_rank);
    r.image_to_text[k] = hits(col_rank);
  }
  return r;
}

EquivarianceScore equivariance_score(const SimilarityGrid& g) {
  EquivarianceScore e;
  e.text_direction = std::abs((g.s11 - g.s12) - (g.s22 - g.s21));
  e.image_direction = std::abs((g.s11 - g.s21) - (g.s22 - g.s12));
  e.combined = e.text_direction + e.image_direction;
  return e;
}

Histogram histogram(std::span<const double> values, int n_bins, std::optional<std::pair<double, double>> range) {
  require(!values.empty(), ErrorKind::EmptyValues, "histogram: no values");
  require(n_bins >= 1, ErrorKind::InvalidConfig, "histogram: n_bins must be >= 1");
  for (double v : values) require(std::isfinite(v), ErrorKind::NonFinite, "histogram: non-finite value");

  const bool observed = !range.has_value();
  double lo, hi;
  if (range) {
    std::tie(lo, hi) = *range;
    require(hi > lo, ErrorKind::InvalidConfig, "histogram: empty range");
  } else {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
  }

  Histogram h;
  h.n_values = static_cast<long>(values.size());
  h.counts.assign(static_cast<std::size_t>(n_bins), 0);
  h.edges.resize(static_cast<std::size_t>(n_bins) + 1);
  const double width = (hi - lo) / n_bins;
  for (int b = 0; b <= n_bins; ++b) h.edges[static_cast<std::size_t>(b)] = lo + width * b;
  h.edges.back() = hi;

  for (double v : values) {
    if (v < lo || v > hi || (!observed && v == hi)) continue;
    int bin = width > 0.0 ? static_cast<int>(std::floor((v - lo) / width)) : 0;
    bin = std::clamp(bin, 0, n_bins - 1);
    // Guard against floor() landing one bin off next to an edge.
    while (bin > 0 && v < h.edges[static_cast<std::size_t>(bin)]) --bin;
    while (bin + 1 < n_bins && v >= h.edges[static_cast<std::size_t>(bin) + 1]) ++bin;
    ++h.counts[static_cast<std::size_t>(bin)];
  }

  double sum = 0.0;
  for (double v : values) sum += v;
  h.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - h.mean) * (v - h.mean);
  h.std = std::sqrt(sq / static_cast<double>(values.size()));
  return h;
}

}  // namespace eqsim
