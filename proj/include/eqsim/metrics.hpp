// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "eqsim/core.hpp"

namespace eqsim {

struct SamplePoints {
  bool text = false;
  bool image = false;
  bool group = false;
};

struct GroupMetricsReport {
  double text_score = 0.0;
  double image_score = 0.0;
  double group_score = 0.0;
  long n_samples = 0;
  std::vector<SamplePoints> per_sample;
};

/// Per-grid win conditions (strict inequalities, ties lose):
/// text  : s11 > s12 and s22 > s21
/// image : s11 > s21 and s22 > s12
/// group : both.
SamplePoints sample_points(const SimilarityGrid& g);
GroupMetricsReport group_metrics(std::span<const SimilarityGrid> grids);

struct ValseReport {
  double acc = 0.0;
  double p_c = 0.0;
  double p_f = 0.0;
  double min_pc_pf = 0.0;
  double threshold = 0.5;
};

ValseReport valse_metrics(std::span<const double> correct_scores, std::span<const double> foil_scores,
                          double threshold = 0.5);

struct RecallReport {
  /// Row direction: diagonal ranked within its row.
  std::map<Index, double> text_to_image;
  /// Column direction: diagonal ranked within its column.
  std::map<Index, double> image_to_text;
};

/// Diagonal counts as a hit at k when fewer than k entries outrank it; an
/// equal score outranks it only if its index is lower.
RecallReport recall_at_k(const BatchSimilarities& m, std::span<const Index> ks);

struct EquivarianceScore {
  double text_direction = 0.0;   // |(s11 - s12) - (s22 - s21)|
  double image_direction = 0.0;  // |(s11 - s21) - (s22 - s12)|
  double combined = 0.0;
};

EquivarianceScore equivariance_score(const SimilarityGrid& g);

struct Histogram {
  std::vector<double> edges;  // n_bins + 1
  std::vector<long> counts;
  double mean = 0.0;
  double std = 0.0;  // population
  long n_values = 0;
};

/// Equal-width bins over [lo, hi) when a range is given; over the observed
/// [min, max] otherwise (max lands in the last bin). Mean and std use all values.
Histogram histogram(std::span<const double> values, int n_bins,
                    std::optional<std::pair<double, double>> range = std::nullopt);

}  // namespace eqsim
