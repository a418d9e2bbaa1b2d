// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqsim/benchbuild.hpp"

#include <algorithm>
#include <cctype>

#include "eqsim/error.hpp"

namespace eqsim {

namespace {

constexpr const char* kAgChangeRule = "ag:two_of_three_changed";
constexpr const char* kAgSkipRule = "ag:skip_after_select";
constexpr const char* kGebcStrideRule = "gebc:skip_one_boundary";
constexpr const char* kGebcWordRule = "gebc:action_word";
constexpr const char* kDistinctRule = "distinct_captions";
constexpr const char* kYcMiddleRule = "youcook2:middle_frame";
constexpr const char* kYcFrameRule = "youcook2:frame_filter";

void tally(FilterStats* stats, bool kept, const std::string& rule, long n = 1) {
  if (!stats) return;
  (kept ? stats->kept : stats->dropped)[rule] += n;
}

const std::string& pick(const std::vector<std::string>& values, Rng& rng) { return values[rng.below(values.size())]; }

// Uniform draw from values other than `current`.
std::string pick_other(const std::vector<std::string>& values, const std::string& current, Rng& rng) {
  std::vector<std::string> others;
  for (const auto& v : values)
    if (v != current) others.push_back(v);
  require(!others.empty(), ErrorKind::EmptySubset, "no alternative to '" + current + "'");
  return pick(others, rng);
}

}  // namespace

std::string ag_caption(const AgFrame& f) {
  require(!f.attention_rel.empty(), ErrorKind::MissingField, "AgFrame.attention_rel is empty");
  require(!f.spatial_rel.empty(), ErrorKind::MissingField, "AgFrame.spatial_rel is empty");
  require(!f.object.empty(), ErrorKind::MissingField, "AgFrame.object is empty");
  return "The person is " + f.attention_rel + " " + f.object + " which is " + f.spatial_rel + " him/her.";
}

int relationship_changes(const AgFrame& a, const AgFrame& b) {
  return (a.attention_rel != b.attention_rel) + (a.spatial_rel != b.spatial_rel) + (a.contact_rel != b.contact_rel);
}

std::vector<CandidatePair> ag_select_pairs(const std::vector<AgFrame>& frames, FilterStats* stats) {
  for (std::size_t k = 1; k < frames.size(); ++k)
    require(frames[k].index > frames[k - 1].index, ErrorKind::Schema, "AG frames must have increasing index");
  std::vector<CandidatePair> out;
  const std::size_t n = frames.size();
  std::size_t anchor = 0;
  while (anchor < n) {
    std::size_t j = anchor + 1;
    while (j < n && relationship_changes(frames[anchor], frames[j]) < 2) {
      tally(stats, false, kAgChangeRule);
      ++j;
    }
    if (j >= n) {
      ++anchor;
      continue;
    }
    tally(stats, true, kAgChangeRule);
    CandidatePair p;
    p.source = "ag";
    p.item1 = {std::to_string(frames[anchor].index), ag_caption(frames[anchor])};
    p.item2 = {std::to_string(frames[j].index), ag_caption(frames[j])};
    p.filter_trace = {kAgChangeRule, kAgSkipRule};
    out.push_back(std::move(p));
    // The frame right after a chosen one is too close to it; resume at j + 2.
    if (j + 1 < n) tally(stats, false, kAgSkipRule);
    anchor = j + 2;
  }
  return out;
}

const std::set<std::string>& default_action_words() {
  static const std::set<std::string> words{"up", "down", "upward", "downward", "towards"};
  return words;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      current.push_back(static_cast<char>(std::tolower(u)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

bool contains_action_word(std::string_view caption, const std::set<std::string>& action_words) {
  const auto tokens = word_tokens(caption);
  return std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) { return action_words.contains(t); });
}

std::vector<CandidatePair> gebc_select(const std::vector<GebcBoundary>& boundaries,
                                       const std::set<std::string>& action_words, FilterStats* stats) {
  for (std::size_t k = 1; k < boundaries.size(); ++k)
    require(boundaries[k].index > boundaries[k - 1].index, ErrorKind::Schema,
            "GEBC boundaries must have increasing index");
  std::vector<CandidatePair> out;
  for (std::size_t i = 0; i + 2 < boundaries.size(); i += 2) {
    const auto& a = boundaries[i];
    const auto& b = boundaries[i + 2];
    tally(stats, true, kGebcStrideRule);
    if (contains_action_word(a.caption_before, action_words) || contains_action_word(b.caption_before, action_words)) {
      tally(stats, false, kGebcWordRule);
      continue;
    }
    tally(stats, true, kGebcWordRule);
    if (a.caption_before == b.caption_before) {
      tally(stats, false, kDistinctRule);
      continue;
    }
    tally(stats, true, kDistinctRule);
    CandidatePair p;
    p.source = "gebc";
    p.item1 = {a.frame_before, a.caption_before};
    p.item2 = {b.frame_before, b.caption_before};
    p.filter_trace = {kGebcStrideRule, kGebcWordRule, kDistinctRule};
    out.push_back(std::move(p));
  }
  return out;
}

FramePredicate pass_all_frames() {
  return [](long) { return true; };
}

FramePredicate reject_listed_frames(std::set<long> rejected) {
  return [rejected = std::move(rejected)](long frame) { return !rejected.contains(frame); };
}

std::vector<std::pair<long, std::string>> youcook2_select(const std::vector<Segment>& segments,
                                                          const FramePredicate& keep_frame, FilterStats* stats) {
  std::vector<std::pair<long, std::string>> out;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& s = segments[k];
    require(s.start < s.end, ErrorKind::BadSegment,
            "segment " + std::to_string(k) + ": start " + std::to_string(s.start) + " >= end " + std::to_string(s.end));
    // floor division that also holds for negative frame numbers
    const long sum = s.start + s.end;
    const long middle = sum >= 0 ? sum / 2 : -((-sum + 1) / 2);
    tally(stats, true, kYcMiddleRule);
    if (!keep_frame(middle)) {
      tally(stats, false, kYcFrameRule);
      continue;
    }
    tally(stats, true, kYcFrameRule);
    out.emplace_back(middle, s.caption);
  }
  return out;
}

std::string_view to_string(KubricAspect aspect) noexcept {
  switch (aspect) {
    case KubricAspect::location: return "location";
    case KubricAspect::counting: return "counting";
    case KubricAspect::attribute: return "attribute";
  }
  return "location";
}

KubricVocabulary KubricVocabulary::defaults() {
  return {{"2", "3", "4", "5"},
          {"red", "blue", "green", "yellow", "metal", "rubber"},
          {"clocks", "cubes", "spheres", "cylinders", "cups"},
          {"on the left of the table", "on the right of the table", "in the middle of the table",
           "at the back of the table"}};
}

std::string kubric_caption(const KubricScene& scene) {
  require(!scene.count.empty() && !scene.attribute.empty() && !scene.object.empty() && !scene.location.empty(),
          ErrorKind::MissingField, "kubric scene has an empty slot");
  return "There are " + scene.count + " " + scene.attribute + " " + scene.object + " " + scene.location + ".";
}

CaptionEdit kubric_caption_pair(KubricAspect aspect, const KubricScene& scene, const std::string& new_value) {
  KubricScene edited = scene;
  std::string* slot = nullptr;
  switch (aspect) {
    case KubricAspect::location: slot = &edited.location; break;
    case KubricAspect::counting: slot = &edited.count; break;
    case KubricAspect::attribute: slot = &edited.attribute; break;
  }
  require(*slot != new_value, ErrorKind::UneditableAspect, "new value equals the current one");
  CaptionEdit e;
  e.old_phrase = *slot;
  *slot = new_value;
  e.new_phrase = new_value;
  e.caption1 = kubric_caption(scene);
  e.caption2 = kubric_caption(edited);
  return e;
}

CaptionEdit kubric_captions(KubricAspect aspect, const KubricVocabulary& vocab, Rng& rng) {
  require(!vocab.counts.empty() && !vocab.attributes.empty() && !vocab.objects.empty() && !vocab.locations.empty(),
          ErrorKind::MissingField, "kubric vocabulary has an empty slot list");
  const auto& changing = aspect == KubricAspect::location   ? vocab.locations
                         : aspect == KubricAspect::counting ? vocab.counts
                                                            : vocab.attributes;
  require(changing.size() >= 2, ErrorKind::UneditableAspect,
          std::string(to_string(aspect)) + " needs at least 2 vocabulary values");
  KubricScene scene{pick(vocab.counts, rng), pick(vocab.attributes, rng), pick(vocab.objects, rng),
                    pick(vocab.locations, rng)};
  const std::string& current = aspect == KubricAspect::location   ? scene.location
                               : aspect == KubricAspect::counting ? scene.count
                                                                  : scene.attribute;
  return kubric_caption_pair(aspect, scene, pick_other(changing, current, rng));
}

std::string_view to_string(SdEditCategory category) noexcept {
  switch (category) {
    case SdEditCategory::object_change: return "object_change";
    case SdEditCategory::scene_change: return "scene_change";
    case SdEditCategory::attribute_change: return "attribute_change";
  }
  return "object_change";
}

SdVocabulary SdVocabulary::defaults() {
  SdVocabulary v;
  v.subsets.push_back({{"horse", "cattle", "elephant", "goat", "deer", "camel", "zebra"},
                       {"standing on the grass", "in the desert", "near the river", "in the zoo"},
                       {"with a sunglasses", "with a hat", "with a saddle"}});
  v.subsets.push_back({{"dog", "cat", "rabbit", "fox"},
                       {"in the winter", "on the sofa", "in the garden", "on the beach"},
                       {"with a sunglasses", "with a scarf", "with a collar"}});
  v.subsets.push_back({{"car", "bus", "truck", "motorcycle"},
                       {"on the street", "in the winter", "in a parking lot", "near the bridge"},
                       {"with red paint", "with a roof rack", "with headlights on"}});
  return v;
}

const SdSubset* SdVocabulary::subset_of(const std::string& object) const {
  for (const auto& s : subsets)
    if (std::find(s.objects.begin(), s.objects.end(), object) != s.objects.end()) return &s;
  return nullptr;
}

std::string sd_caption(const SdSlots& slots) {
  require(!slots.object.empty(), ErrorKind::MissingField, "sd caption needs an object");
  std::string c = "A photo of a " + slots.object;
  if (!slots.attribute.empty()) c += " " + slots.attribute;
  if (!slots.scene.empty()) c += " " + slots.scene;
  return c + ".";
}

CaptionEdit sd_caption_edit(const SdSlots& base, SdEditCategory category, const SdVocabulary& vocab, Rng& rng) {
  const SdSubset* subset = vocab.subset_of(base.object);
  require(subset != nullptr, ErrorKind::EmptySubset, "object '" + base.object + "' belongs to no subset");
  SdSlots edited = base;
  CaptionEdit e;
  switch (category) {
    case SdEditCategory::object_change:
      e.old_phrase = base.object;
      edited.object = pick_other(subset->objects, base.object, rng);
      e.new_phrase = edited.object;
      break;
    case SdEditCategory::scene_change:
      e.old_phrase = base.scene;
      edited.scene = pick_other(subset->scenes, base.scene, rng);
      e.new_phrase = edited.scene;
      break;
    case SdEditCategory::attribute_change:
      e.old_phrase = base.attribute;
      edited.attribute = pick_other(subset->attributes, base.attribute, rng);
      e.new_phrase = edited.attribute;
      break;
  }
  e.caption1 = sd_caption(base);
  e.caption2 = sd_caption(edited);
  return e;
}

}  // namespace eqsim
