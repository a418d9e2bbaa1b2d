// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include <doctest.h>

#include "eqsim/core.hpp"
#include "eqsim/random.hpp"

using namespace eqsim;

namespace {

EmbVector vec(std::initializer_list<double> xs) {
  EmbVector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("cosine similarity of simple vectors") {
    CHECK(cosine_similarity(vec({1, 0}), vec({1, 0})) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine_similarity(vec({1, 0}), vec({0, 1})) == doctest::Approx(0.0));
    // 32 / (sqrt(14) * sqrt(77)), evaluated to 16 digits by hand.
    CHECK(std::abs(cosine_similarity(vec({1, 2, 3}), vec({4, 5, 6})) - 0.9746318461970762) < 1e-12);
  }

  TEST_CASE("cosine similarity rejects bad input") {
    CHECK_THROWS_AS(cosine_similarity(vec({1, 0}), vec({1, 0, 0})), Error);
    try {
      cosine_similarity(vec({0, 0}), vec({1, 0}));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateVector);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(cosine_similarity(vec({nan, 1}), vec({1, 0})), Error);
  }

  TEST_CASE("batch similarity of orthonormal pairs") {
    std::vector<EmbVector> xs{vec({1, 0}), vec({0, 1})};
    const auto m = batch_similarity(xs, xs, 1.0);
    CHECK(m.scores.isApprox(Matrix<double>::Identity(2, 2)));
    CHECK_FALSE(m.normalized);
  }

  TEST_CASE("batch similarity scales with inverse temperature") {
    Rng rng(5);
    std::vector<EmbVector> images, texts;
    for (int i = 0; i < 3; ++i) {
      EmbVector a(4), b(4);
      for (Index k = 0; k < 4; ++k) {
        a(k) = rng.normal();
        b(k) = rng.normal();
      }
      images.push_back(a);
      texts.push_back(b);
    }
    const auto one = batch_similarity(images, texts, 1.0);
    const auto half = batch_similarity(images, texts, 0.5);
    CHECK((half.scores - 2.0 * one.scores).cwiseAbs().maxCoeff() < 1e-12);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        const double naive = images[i].dot(texts[j]) / (images[i].norm() * texts[j].norm());
        CHECK(one.scores(static_cast<Index>(i), static_cast<Index>(j)) == doctest::Approx(naive).epsilon(1e-12));
      }
    CHECK_THROWS_AS(batch_similarity(images, texts, 0.0), Error);
    texts.pop_back();
    CHECK_THROWS_AS(batch_similarity(images, texts, 1.0), Error);
  }

  TEST_CASE("row softmax") {
    BatchSimilarities m;
    m.scores.resize(3, 3);
    m.scores << 0, 0, 0, 1000, 1000, 1000, 1, 2, 3;
    const auto p = softmax_rows(m);
    CHECK(p.normalized);
    CHECK(p.scores(0, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(p.scores(1, 2) == doctest::Approx(1.0 / 3.0));
    // exp(k) / (e + e^2 + e^3) for k = 1, 2, 3.
    CHECK(std::abs(p.scores(2, 0) - 0.09003057317038046) < 1e-12);
    CHECK(std::abs(p.scores(2, 1) - 0.24472847105479767) < 1e-12);
    CHECK(std::abs(p.scores(2, 2) - 0.6652409557748219) < 1e-12);
    CHECK_THROWS_AS(softmax_rows(p), Error);

    BatchSimilarities two;
    two.scores = Matrix<double>::Zero(2, 2);
    CHECK(softmax_rows(two).scores(1, 0) == doctest::Approx(0.5));
  }

  TEST_CASE("grid extraction") {
    BatchSimilarities m;
    m.scores = Matrix<double>::Identity(2, 2);
    const auto g = grid_from_matrix(m, 0, 1);
    CHECK(g.s11 == 1.0);
    CHECK(g.s12 == 0.0);
    CHECK(g.s21 == 0.0);
    CHECK(g.s22 == 1.0);

    Rng rng(8);
    m.scores.resize(4, 4);
    for (Index i = 0; i < 16; ++i) m.scores(i / 4, i % 4) = rng.uniform();
    const auto a = grid_from_matrix(m, 2, 3);
    CHECK(a.s11 == m.scores(2, 2));
    CHECK(a.s12 == m.scores(2, 3));
    CHECK(a.s21 == m.scores(3, 2));
    CHECK(a.s22 == m.scores(3, 3));
    const auto b = grid_from_matrix(m, 3, 2);
    CHECK(b.s11 == a.s22);
    CHECK(b.s12 == a.s21);
    CHECK(b.s21 == a.s12);
    CHECK(b.s22 == a.s11);
    CHECK_THROWS_AS(grid_from_matrix(m, 1, 1), Error);
    CHECK_THROWS_AS(grid_from_matrix(m, 0, 4), Error);
  }

  TEST_CASE("error kinds map to exit codes") {
    CHECK(exit_code(ErrorKind::InvalidConfig) == 2);
    CHECK(exit_code(ErrorKind::Schema) == 2);
    CHECK(exit_code(ErrorKind::Io) == 3);
    CHECK(exit_code(ErrorKind::NonFiniteLoss) == 4);
    CHECK(exit_code(ErrorKind::ShapeMismatch) == 5);
    CHECK(exit_code(ErrorKind::DimensionMismatch) == 5);
  }
}

TEST_SUITE("random") {
  TEST_CASE("named sub-streams are reproducible and distinct") {
    Rng a = Rng::substream(1, "eval"), b = Rng::substream(1, "eval"), c = Rng::substream(1, "init");
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }

  TEST_CASE("uniform, below and categorical stay in range") {
    Rng rng(3);
    const std::array<double, 3> w{0.0, 1.0, 3.0};
    std::array<long, 3> seen{};
    for (int i = 0; i < 4000; ++i) {
      const double u = rng.uniform();
      CHECK((u >= 0.0 && u < 1.0));
      CHECK(rng.below(7) < 7u);
      ++seen[rng.categorical(w)];
    }
    CHECK(seen[0] == 0);
    // Expected 3000 of 4000; sigma ~ 27.
    CHECK(std::abs(seen[2] - 3000) < 110);
  }
}
