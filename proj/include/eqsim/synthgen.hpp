// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic "minimal semantic change" world. A scene is four categorical
// slots; each modality observes the one-hot slot code through its own fixed
// random projection plus Gaussian noise.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "eqsim/core.hpp"
#include "eqsim/model.hpp"
#include "eqsim/random.hpp"

namespace eqsim {

enum class Aspect { object = 0, count = 1, location = 2, attribute = 3 };

inline constexpr std::array<Aspect, 4> kAspects{Aspect::object, Aspect::count, Aspect::location, Aspect::attribute};

std::string_view to_string(Aspect aspect) noexcept;
Aspect parse_aspect(std::string_view text);

/// count is 1-based in [1, max_count]; the other slots are 0-based ids.
struct SemanticSlots {
  int object = 0;
  int count = 1;
  int location = 0;
  int attribute = 0;

  int get(Aspect a) const;
  void set(Aspect a, int value);
  bool operator==(const SemanticSlots&) const = default;
};

int hamming(const SemanticSlots& a, const SemanticSlots& b);

struct WorldConfig {
  /// Cardinality per aspect, indexed by Aspect (for count: max_count).
  std::array<int, 4> cardinality{8, 4, 4, 6};
  Index d_img = 32;
  Index d_txt = 32;
  double noise_std = 0.1;
  std::uint64_t seed = 0;

  int card(Aspect a) const { return cardinality[static_cast<std::size_t>(a)]; }
  Index code_dim() const;
  void validate() const;
};

/// One-hot concatenation of the four slots (object | count | location | attribute).
EmbVector slot_code(const SemanticSlots& slots, const WorldConfig& cfg);
void validate_slots(const SemanticSlots& slots, const WorldConfig& cfg);

/// Holds the per-modality projections, which depend only on cfg.seed.
class World {
 public:
  explicit World(WorldConfig cfg);

  const WorldConfig& config() const { return cfg_; }
  const Matrix<double>& projection(Modality m) const { return m == Modality::image ? image_proj_ : text_proj_; }

  EmbVector render(const SemanticSlots& slots, Modality modality, Rng& rng) const;
  SemanticSlots draw_slots(Rng& rng) const;

 private:
  WorldConfig cfg_;
  Matrix<double> image_proj_;
  Matrix<double> text_proj_;
};

EmbVector render(const SemanticSlots& slots, const WorldConfig& cfg, Modality modality, Rng& rng);

/// Changes only `aspect`, to a value drawn uniformly from the other values.
SemanticSlots minimal_edit(const SemanticSlots& slots, Aspect aspect, const WorldConfig& cfg, Rng& rng);

struct PairSample {
  long id = 0;
  EmbVector image1, text1, image2, text2;
  SemanticSlots slots1, slots2;
  Aspect edited_aspect = Aspect::object;
  int hamming = 0;
};

/// Weights per aspect, indexed by Aspect.
using AspectMix = std::array<double, 4>;

std::vector<PairSample> generate_eval_set(const World& world, long n, const AspectMix& mix, Rng& rng);

/// Infinite stream of training batches. floor(edit_fraction * batch_size / 2)
/// couples per batch are a fresh scene and a minimal edit of it; the rest of
/// the batch is independent fresh scenes.
class TrainStream final : public BatchSource {
 public:
  TrainStream(const World& world, Index batch_size, double edit_fraction, Rng rng);

  Batch next() override;
  /// Slots behind the most recent batch, in batch order.
  const std::vector<SemanticSlots>& last_slots() const { return last_slots_; }
  Index couples_per_batch() const { return couples_; }

 private:
  const World* world_;
  Index batch_size_;
  Index couples_;
  Rng rng_;
  std::vector<SemanticSlots> last_slots_;
};

}  // namespace eqsim
