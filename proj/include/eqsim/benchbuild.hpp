// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Benchmark construction as pure pipelines over annotation records: scene
// graph caption templating and sparse frame pairing, event-boundary pairing
// with an action-word filter, middle-frame selection with an injected frame
// predicate, and minimal caption edits for rendered/generated subsets.

#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eqsim/random.hpp"

namespace eqsim {

struct AgFrame {
  long index = 0;
  std::string attention_rel;
  std::string spatial_rel;
  std::string contact_rel;
  std::string object;
};

struct GebcBoundary {
  long index = 0;
  std::string caption_before;
  std::string caption_after;
  std::string frame_before;
  std::string frame_after;
};

struct CandidateItem {
  std::string frame;
  std::string caption;
  bool operator==(const CandidateItem&) const = default;
};

struct CandidatePair {
  std::string source;
  CandidateItem item1;
  CandidateItem item2;
  std::vector<std::string> filter_trace;
};

/// Per-rule tallies reported by the selectors.
struct FilterStats {
  std::map<std::string, long> kept;
  std::map<std::string, long> dropped;
};

/// "The person is <attention> <object> which is <spatial> him/her."
std::string ag_caption(const AgFrame& f);

/// Number of differing fields among (attention, spatial, contact).
int relationship_changes(const AgFrame& a, const AgFrame& b);

std::vector<CandidatePair> ag_select_pairs(const std::vector<AgFrame>& frames, FilterStats* stats = nullptr);

const std::set<std::string>& default_action_words();

/// Lower-cased alphanumeric tokens.
std::vector<std::string> word_tokens(std::string_view text);
bool contains_action_word(std::string_view caption, const std::set<std::string>& action_words);

std::vector<CandidatePair> gebc_select(const std::vector<GebcBoundary>& boundaries,
                                       const std::set<std::string>& action_words = default_action_words(),
                                       FilterStats* stats = nullptr);

struct Segment {
  long start = 0;
  long end = 0;
  std::string caption;
};

using FramePredicate = std::function<bool(long frame)>;

/// Keeps every frame.
FramePredicate pass_all_frames();
/// Rejects exactly the listed frames.
FramePredicate reject_listed_frames(std::set<long> rejected);

/// (floor((start + end) / 2), caption) for every segment whose middle frame
/// passes the predicate.
std::vector<std::pair<long, std::string>> youcook2_select(const std::vector<Segment>& segments,
                                                          const FramePredicate& keep_frame,
                                                          FilterStats* stats = nullptr);

enum class KubricAspect { location, counting, attribute };

std::string_view to_string(KubricAspect aspect) noexcept;

struct KubricScene {
  std::string count;
  std::string attribute;
  std::string object;
  std::string location;
};

struct KubricVocabulary {
  std::vector<std::string> counts;
  std::vector<std::string> attributes;
  std::vector<std::string> objects;
  std::vector<std::string> locations;

  static KubricVocabulary defaults();
};

struct CaptionEdit {
  std::string caption1;
  std::string caption2;
  std::string old_phrase;  // empty when the phrase was added
  std::string new_phrase;
};

/// "There are <count> <attribute> <object> <location>."
std::string kubric_caption(const KubricScene& scene);
/// Deterministic pair: scene vs the same scene with one aspect set to new_value.
CaptionEdit kubric_caption_pair(KubricAspect aspect, const KubricScene& scene, const std::string& new_value);
/// Draws a scene from the vocabulary and a different value for the aspect.
CaptionEdit kubric_captions(KubricAspect aspect, const KubricVocabulary& vocab, Rng& rng);

enum class SdEditCategory { object_change, scene_change, attribute_change };

std::string_view to_string(SdEditCategory category) noexcept;

/// Objects that may replace one another, with the scenes and attributes
/// that read sensibly for all of them.
struct SdSubset {
  std::vector<std::string> objects;
  std::vector<std::string> scenes;
  std::vector<std::string> attributes;
};

struct SdVocabulary {
  std::vector<SdSubset> subsets;

  static SdVocabulary defaults();
  const SdSubset* subset_of(const std::string& object) const;
};

struct SdSlots {
  std::string object;
  std::string attribute;  // may be empty
  std::string scene;      // may be empty
};

/// "A photo of a <object>[ <attribute>][ <scene>]."
std::string sd_caption(const SdSlots& slots);
CaptionEdit sd_caption_edit(const SdSlots& base, SdEditCategory category, const SdVocabulary& vocab, Rng& rng);

}  // namespace eqsim
