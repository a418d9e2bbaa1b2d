// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment runner behind the `eqsim` tool: config parsing, the dataset /
// checkpoint / report / histogram / manifest schemas, and the subcommands.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eqsim/benchbuild.hpp"
#include "eqsim/metrics.hpp"
#include "eqsim/model.hpp"
#include "eqsim/synthgen.hpp"
#include "eqsim/textio.hpp"

namespace eqsim {

struct EvalConfig {
  long n_eval = 2000;
  AspectMix aspect_mix{1.0, 1.0, 1.0, 1.0};
  double valse_threshold = 0.5;
  std::vector<Index> recall_ks{1, 5, 10};
  int bins = 20;
  std::vector<std::string> metrics{"group", "valse", "recall", "eqscore"};

  bool wants(const std::string& metric) const;
};

struct ExperimentConfig {
  std::string run_label = "default";
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  WorldConfig world;
  Index embed_dim = 16;
  Index hidden_img = 0;
  Index hidden_txt = 0;
  double edit_fraction = 0.5;
  TrainConfig train;
  EvalConfig eval;

  /// Copies the run seed into the world and training configs.
  void apply_seed(std::uint64_t new_seed);
  ModelShape model_shape() const { return {world.d_img, world.d_txt, embed_dim, hidden_img, hidden_txt}; }
  void validate() const;
};

/// Shipped defaults: 8x4x4x6 slots, noise 0.1, image dim 12, text dim 8,
/// 16-d embeddings, Adam(1e-3), 2000 steps of batch 16, hybrid EqSim with
/// alpha 0.04, beta 0.5, k 8 on temperature-scaled cosine scores.
ExperimentConfig default_experiment_config();

/// Reads run/world/model/train/eqsim/eval records; other kinds are ignored so
/// the echo inside any output file parses back to the same config.
ExperimentConfig parse_experiment_config(const std::vector<Record>& records);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::vector<Record> config_records(const ExperimentConfig& cfg);
std::string format_config(const ExperimentConfig& cfg);

// Dataset files ---------------------------------------------------------------

std::string format_eval_set(const ExperimentConfig& cfg, const std::vector<PairSample>& samples);
std::vector<PairSample> parse_eval_set(const std::vector<Record>& records);

// Checkpoints -----------------------------------------------------------------

struct Checkpoint {
  ExperimentConfig config;
  EncoderParams params;
  std::optional<LossBreakdown> final_loss;
};

std::string format_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::vector<Record>& records);
std::string format_history(const ExperimentConfig& cfg, const std::vector<LossBreakdown>& history);

// Evaluation ------------------------------------------------------------------

struct AspectScores {
  long n = 0;
  double text_score = 0.0;
  double image_score = 0.0;
  double group_score = 0.0;
};

struct EquivarianceSummary {
  Histogram text_direction;
  Histogram image_direction;
  Histogram combined;
};

struct RunReport {
  ExperimentConfig config;
  std::optional<LossBreakdown> final_loss;
  std::optional<GroupMetricsReport> group;
  std::optional<ValseReport> valse;
  std::optional<RecallReport> recall;
  std::optional<EquivarianceSummary> equivariance;
  std::map<Aspect, AspectScores> per_aspect;
  long n_eval = 0;
};

/// Cosine similarity grids of the encoded eval pairs.
std::vector<SimilarityGrid> eval_grids(const EncoderParams& params, const std::vector<PairSample>& samples);
EquivarianceSummary summarize_equivariance(const std::vector<SimilarityGrid>& grids, int bins);
RunReport evaluate(const Checkpoint& ckpt, const std::vector<PairSample>& samples, const EvalConfig& eval);
std::string format_report(const RunReport& report);
std::string format_eqscore(const ExperimentConfig& cfg, const EquivarianceSummary& summary);

// In-process pipelines used by the commands and by the acceptance suite ------

std::vector<PairSample> make_eval_set(const ExperimentConfig& cfg);
TrainResult run_training(const ExperimentConfig& cfg);

// Benchmark-construction I/O -------------------------------------------------

std::vector<AgFrame> parse_ag_frames(const std::vector<Record>& records);
std::vector<GebcBoundary> parse_gebc_boundaries(const std::vector<Record>& records);
std::vector<Segment> parse_youcook2_segments(const std::vector<Record>& records);
/// Frames listed by `face_frames frames=...` records, if any.
std::optional<std::set<long>> parse_face_frames(const std::vector<Record>& records);

// Command line ----------------------------------------------------------------

/// Runs the tool with argv-style arguments (args[0] is the program name).
/// Returns the process exit code: 0 ok, 2 config/schema, 3 I/O, 4 numeric
/// failure, 5 shape mismatch.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eqsim
