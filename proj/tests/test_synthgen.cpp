// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>

#include <doctest.h>

#include "eqsim/random.hpp"
#include "eqsim/synthgen.hpp"

using namespace eqsim;

namespace {

WorldConfig small_world(double noise = 0.0) {
  WorldConfig cfg;
  cfg.d_img = 12;
  cfg.d_txt = 8;
  cfg.noise_std = noise;
  cfg.seed = 42;
  return cfg;
}

}  // namespace

TEST_SUITE("synthgen") {
  TEST_CASE("slot codes and hamming") {
    const auto cfg = small_world();
    CHECK(cfg.code_dim() == 22);
    const SemanticSlots a{1, 2, 3, 4};
    const auto code = slot_code(a, cfg);
    CHECK(code.sum() == 4.0);
    CHECK(code(1) == 1.0);
    CHECK(code(8 + 1) == 1.0);  // count is 1-based
    CHECK(code(12 + 3) == 1.0);
    CHECK(code(16 + 4) == 1.0);
    SemanticSlots b = a;
    b.set(Aspect::location, 0);
    CHECK(hamming(a, b) == 1);
    CHECK_THROWS_AS(validate_slots(SemanticSlots{0, 0, 0, 0}, cfg), Error);
  }

  TEST_CASE("noise-free rendering is linear in the slot code") {
    const World world(small_world());
    Rng rng(1);
    const SemanticSlots a{3, 2, 1, 5};
    SemanticSlots b = a;
    b.set(Aspect::attribute, 0);
    for (Modality m : {Modality::image, Modality::text}) {
      CHECK(world.render(a, m, rng) == world.render(a, m, rng));
      const EmbVector delta = world.render(a, m, rng) - world.render(b, m, rng);
      const EmbVector expect = world.projection(m) * (slot_code(a, world.config()) - slot_code(b, world.config()));
      CHECK((delta - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("seeded noisy rendering is reproducible") {
    const World world(small_world(0.1));
    Rng a(9), b(9);
    const SemanticSlots s{0, 1, 0, 0};
    CHECK(world.render(s, Modality::image, a) == world.render(s, Modality::image, b));
    CHECK(World(small_world(0.1)).projection(Modality::text) == world.projection(Modality::text));
  }

  TEST_CASE("minimal edits") {
    WorldConfig cfg = small_world();
    cfg.cardinality = {8, 3, 4, 6};
    Rng rng(2);
    const SemanticSlots base{0, 2, 0, 0};
    std::map<int, int> counts;
    for (int i = 0; i < 200; ++i) {
      const auto e = minimal_edit(base, Aspect::count, cfg, rng);
      CHECK(hamming(base, e) == 1);
      ++counts[e.count];
    }
    CHECK(counts.count(2) == 0);
    CHECK(counts.size() == 2);

    cfg.cardinality[1] = 1;
    CHECK_THROWS_AS(minimal_edit(SemanticSlots{0, 1, 0, 0}, Aspect::count, cfg, rng), Error);
  }

  TEST_CASE("edits of a 4-way slot are uniform over the alternatives") {
    const auto cfg = small_world();
    Rng rng(3);
    std::map<int, long> counts;
    const long n = 10000;
    for (long i = 0; i < n; ++i) ++counts[minimal_edit(SemanticSlots{0, 1, 2, 0}, Aspect::location, cfg, rng).location];
    REQUIRE(counts.size() == 3);
    const double sigma = std::sqrt(n * (1.0 / 3.0) * (2.0 / 3.0));
    for (const auto& [value, c] : counts) CHECK(std::abs(static_cast<double>(c) - n / 3.0) < 3.0 * sigma);
  }

  TEST_CASE("eval sets") {
    const World world(small_world(0.1));
    Rng rng(4);
    CHECK(generate_eval_set(world, 0, {1, 1, 1, 1}, rng).empty());
    for (const auto& s : generate_eval_set(world, 100, {0, 0, 0, 1}, rng)) {
      CHECK(s.edited_aspect == Aspect::attribute);
      CHECK(s.hamming == 1);
      CHECK(s.slots1.get(Aspect::attribute) != s.slots2.get(Aspect::attribute));
    }
    const auto big = generate_eval_set(world, 2000, {1, 1, 1, 1}, rng);
    std::map<Aspect, long> per;
    for (const auto& s : big) ++per[s.edited_aspect];
    const double sigma = std::sqrt(2000 * 0.25 * 0.75);
    for (Aspect a : kAspects) CHECK(std::abs(static_cast<double>(per[a]) - 500.0) < 3.0 * sigma);
    CHECK_THROWS_AS(generate_eval_set(world, 5, {0, 0, 0, 0}, rng), Error);
  }

  TEST_CASE("training stream") {
    const World world(small_world(0.1));
    TrainStream none(world, 4, 0.0, Rng(5));
    CHECK(none.couples_per_batch() == 0);
    TrainStream full(world, 4, 1.0, Rng(5));
    CHECK(full.couples_per_batch() == 2);
    const auto batch = full.next();
    CHECK(batch.images.size() == 4);
    const auto& slots = full.last_slots();
    CHECK(hamming(slots[0], slots[1]) == 1);
    CHECK(hamming(slots[2], slots[3]) == 1);

    TrainStream a(world, 8, 0.5, Rng(6)), b(world, 8, 0.5, Rng(6));
    for (int step = 0; step < 3; ++step) {
      const auto x = a.next(), y = b.next();
      for (std::size_t i = 0; i < x.images.size(); ++i) {
        CHECK(x.images[i] == y.images[i]);
        CHECK(x.texts[i] == y.texts[i]);
      }
    }
  }
}
