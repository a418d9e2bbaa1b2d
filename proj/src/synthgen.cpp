// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqsim/synthgen.hpp"

#include <cmath>
#include <string>

namespace eqsim {

std::string_view to_string(Aspect aspect) noexcept {
  switch (aspect) {
    case Aspect::object: return "object";
    case Aspect::count: return "count";
    case Aspect::location: return "location";
    case Aspect::attribute: return "attribute";
  }
  return "object";
}

Aspect parse_aspect(std::string_view text) {
  for (Aspect a : kAspects)
    if (to_string(a) == text) return a;
  throw Error(ErrorKind::InvalidConfig,
              "unknown aspect '" + std::string(text) + "' (object|count|location|attribute)");
}

int SemanticSlots::get(Aspect a) const {
  switch (a) {
    case Aspect::object: return object;
    case Aspect::count: return count;
    case Aspect::location: return location;
    case Aspect::attribute: return attribute;
  }
  return 0;
}

void SemanticSlots::set(Aspect a, int value) {
  switch (a) {
    case Aspect::object: object = value; break;
    case Aspect::count: count = value; break;
    case Aspect::location: location = value; break;
    case Aspect::attribute: attribute = value; break;
  }
}

int hamming(const SemanticSlots& a, const SemanticSlots& b) {
  int d = 0;
  for (Aspect x : kAspects) d += a.get(x) != b.get(x);
  return d;
}

Index WorldConfig::code_dim() const {
  Index d = 0;
  for (int c : cardinality) d += c;
  return d;
}

void WorldConfig::validate() const {
  for (Aspect a : kAspects)
    require(card(a) >= 1, ErrorKind::InvalidConfig, "world." + std::string(to_string(a)) + " cardinality must be >= 1");
  require(d_img >= static_cast<Index>(kAspects.size()) && d_txt >= static_cast<Index>(kAspects.size()),
          ErrorKind::InvalidConfig, "world.d_img and world.d_txt must be >= 4");
  require(std::isfinite(noise_std) && noise_std >= 0.0, ErrorKind::InvalidConfig, "world.noise_std must be >= 0");
}

namespace {

// Index of a slot value inside its aspect's one-hot block.
int slot_offset(Aspect a, int value) { return a == Aspect::count ? value - 1 : value; }

}  // namespace

void validate_slots(const SemanticSlots& slots, const WorldConfig& cfg) {
  for (Aspect a : kAspects) {
    const int v = slot_offset(a, slots.get(a));
    require(v >= 0 && v < cfg.card(a), ErrorKind::SlotOutOfRange,
            std::string(to_string(a)) + "=" + std::to_string(slots.get(a)) + " outside its cardinality");
  }
}

EmbVector slot_code(const SemanticSlots& slots, const WorldConfig& cfg) {
  validate_slots(slots, cfg);
  EmbVector code = EmbVector::Zero(cfg.code_dim());
  Index base = 0;
  for (Aspect a : kAspects) {
    code(base + slot_offset(a, slots.get(a))) = 1.0;
    base += cfg.card(a);
  }
  return code;
}

World::World(WorldConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const Index code = cfg_.code_dim();
  // Unit-variance coordinates: each code has exactly four active entries.
  const double scale = 1.0 / std::sqrt(static_cast<double>(kAspects.size()));
  const auto draw = [&](Index rows, std::string_view name) {
    Rng rng = Rng::substream(cfg_.seed, name);
    Matrix<double> p(rows, code);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < code; ++c) p(r, c) = scale * rng.normal();
    return p;
  };
  image_proj_ = draw(cfg_.d_img, "world/image");
  text_proj_ = draw(cfg_.d_txt, "world/text");
}

EmbVector World::render(const SemanticSlots& slots, Modality modality, Rng& rng) const {
  EmbVector v = projection(modality) * slot_code(slots, cfg_);
  if (cfg_.noise_std > 0.0)
    for (Index i = 0; i < v.size(); ++i) v(i) += cfg_.noise_std * rng.normal();
  return v;
}

SemanticSlots World::draw_slots(Rng& rng) const {
  SemanticSlots s;
  s.object = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg_.card(Aspect::object))));
  s.count = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg_.card(Aspect::count))));
  s.location = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg_.card(Aspect::location))));
  s.attribute = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg_.card(Aspect::attribute))));
  return s;
}

EmbVector render(const SemanticSlots& slots, const WorldConfig& cfg, Modality modality, Rng& rng) {
  return World(cfg).render(slots, modality, rng);
}

SemanticSlots minimal_edit(const SemanticSlots& slots, Aspect aspect, const WorldConfig& cfg, Rng& rng) {
  validate_slots(slots, cfg);
  const int card = cfg.card(aspect);
  require(card >= 2, ErrorKind::UneditableAspect,
          std::string(to_string(aspect)) + " has fewer than 2 values");
  const int current = slot_offset(aspect, slots.get(aspect));
  int pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(card - 1)));
  if (pick >= current) ++pick;
  SemanticSlots out = slots;
  out.set(aspect, aspect == Aspect::count ? pick + 1 : pick);
  return out;
}

std::vector<PairSample> generate_eval_set(const World& world, long n, const AspectMix& mix, Rng& rng) {
  require(n >= 0, ErrorKind::InvalidConfig, "eval set size must be >= 0");
  double total = 0.0;
  for (double w : mix) {
    require(std::isfinite(w) && w >= 0.0, ErrorKind::InvalidConfig, "aspect weights must be >= 0");
    total += w;
  }
  require(total > 0.0, ErrorKind::InvalidConfig, "aspect weights must not all be zero");
  for (Aspect a : kAspects)
    if (mix[static_cast<std::size_t>(a)] > 0.0)
      require(world.config().card(a) >= 2, ErrorKind::UneditableAspect,
              std::string(to_string(a)) + " has weight but fewer than 2 values");

  std::vector<PairSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long id = 0; id < n; ++id) {
    PairSample s;
    s.id = id;
    s.slots1 = world.draw_slots(rng);
    s.edited_aspect = kAspects[rng.categorical(mix)];
    s.slots2 = minimal_edit(s.slots1, s.edited_aspect, world.config(), rng);
    s.hamming = hamming(s.slots1, s.slots2);
    s.image1 = world.render(s.slots1, Modality::image, rng);
    s.text1 = world.render(s.slots1, Modality::text, rng);
    s.image2 = world.render(s.slots2, Modality::image, rng);
    s.text2 = world.render(s.slots2, Modality::text, rng);
    out.push_back(std::move(s));
  }
  return out;
}

TrainStream::TrainStream(const World& world, Index batch_size, double edit_fraction, Rng rng)
    : world_(&world), batch_size_(batch_size), rng_(std::move(rng)) {
  require(batch_size >= 2, ErrorKind::InvalidConfig, "train stream batch_size must be >= 2");
  require(edit_fraction >= 0.0 && edit_fraction <= 1.0, ErrorKind::InvalidConfig,
          "train.edit_fraction must lie in [0, 1]");
  couples_ = static_cast<Index>(std::floor(edit_fraction * static_cast<double>(batch_size) / 2.0));
}

Batch TrainStream::next() {
  std::vector<Aspect> editable;
  for (Aspect a : kAspects)
    if (world_->config().card(a) >= 2) editable.push_back(a);

  last_slots_.clear();
  for (Index c = 0; c < couples_; ++c) {
    const SemanticSlots base = world_->draw_slots(rng_);
    if (editable.empty()) {
      last_slots_.push_back(base);
      last_slots_.push_back(world_->draw_slots(rng_));
      continue;
    }
    const Aspect a = editable[rng_.below(editable.size())];
    last_slots_.push_back(base);
    last_slots_.push_back(minimal_edit(base, a, world_->config(), rng_));
  }
  while (static_cast<Index>(last_slots_.size()) < batch_size_) last_slots_.push_back(world_->draw_slots(rng_));

  Batch b;
  b.images.reserve(last_slots_.size());
  b.texts.reserve(last_slots_.size());
  for (const auto& s : last_slots_) {
    b.images.push_back(world_->render(s, Modality::image, rng_));
    b.texts.push_back(world_->render(s, Modality::text, rng_));
  }
  return b;
}

}  // namespace eqsim
