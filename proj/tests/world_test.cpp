/* Copyright 2026 The MDG Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "mdg/world.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"

namespace mdg {
namespace {

void expect_invariants(const SyntheticWorld& w) {
  const int j = w.concepts();
  for (int c = 0; c < j; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    EXPECT_NEAR(w.anchor(cu).values().norm(), 1.0, 1e-12);
    EXPECT_GE(encode_audio(w, w.prior().component(cu).mean).dot(w.anchor(cu)), 0.99);
    for (int k = 0; k < c; ++k) {
      EXPECT_LE(w.anchor(cu).dot(w.anchor(static_cast<std::size_t>(k))), 0.5);
    }
    const ConditionPair p = emit_condition(w, cu, 100 + c);
    EXPECT_NEAR(p.video.values().norm(), 1.0, 1e-12);
    EXPECT_NEAR(p.text.values().norm(), 1.0, 1e-12);
  }
  double total = 0.0;
  for (const auto& comp : w.prior().components()) total += comp.weight;
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(World, NoiselessConditionsEqualAnchors) {
  const SyntheticWorld w = make_world(2, 8, 8, 0.0, 1);
  for (std::size_t c = 0; c < 2; ++c) {
    const ConditionPair p = emit_condition(w, c, 5);
    EXPECT_EQ(p.video, w.anchor(c));
    EXPECT_EQ(p.text, w.anchor(c));
  }
  expect_invariants(w);
}

TEST(World, DefaultAndSpecifiedWorldsSatisfyInvariants) {
  expect_invariants(make_world(8, 16, 8, 0.1, 42));
  expect_invariants(make_world(WorldOptions{}));
  for (std::uint64_t seed = 0; seed < 20; ++seed) expect_invariants(make_world(4, 12, 6, 0.05, seed));
}

TEST(World, SeededDeterminism) {
  const SyntheticWorld a = make_world(8, 16, 8, 0.1, 42), b = make_world(8, 16, 8, 0.1, 42);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(a.anchor(c), b.anchor(c));
  EXPECT_EQ(a.audio_encoder().weight(), b.audio_encoder().weight());
  EXPECT_EQ(a.audio_encoder().bias(), b.audio_encoder().bias());
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_EQ(a.prior().component(c).mean, b.prior().component(c).mean);
    EXPECT_EQ(a.prior().component(c).variance, b.prior().component(c).variance);
  }
  EXPECT_NE(make_world(8, 16, 8, 0.1, 43).anchor(0), a.anchor(0));
}

TEST(World, Errors) {
  try {
    make_world(8, 2, 8, 0.1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidDims);
  }
  EXPECT_THROW(make_world(1, 8, 8, 0.1, 1), Error);
  EXPECT_THROW(make_world(4, 8, 1, 0.1, 1), Error);
  EXPECT_THROW(make_world(4, 8, 8, -0.1, 1), Error);
  // 32 directions in R^3 with pairwise cosine <= 0.5 do not exist.
  try {
    make_world(32, 3, 8, 0.1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvariantViolation);
    EXPECT_NE(std::string(e.what()).find("anchor"), std::string::npos);
  }
  const SyntheticWorld w = make_world(WorldOptions{});
  try {
    emit_condition(w, 8, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownConcept);
  }
}

TEST(EmitCondition, NoiseConcentratesNearAnchor) {
  const SyntheticWorld w = make_world(8, 16, 8, 0.05, 42);
  std::vector<double> cos;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    cos.push_back(emit_condition(w, 2, s).video.dot(w.anchor(2)));
  }
  std::sort(cos.begin(), cos.end());
  // 99% of draws at or above 1 - 2 sigma.
  EXPECT_GE(cos[10], 1.0 - 2 * 0.05);
  EXPECT_NE(emit_condition(w, 2, 1).video, emit_condition(w, 2, 2).video);
  EXPECT_NE(emit_condition(w, 2, 1).video, emit_condition(w, 2, 1).text);
  EXPECT_EQ(emit_condition(w, 2, 1).video, emit_condition(w, 2, 1).video);
}

TEST(AudioEncoder, VjpMatchesFiniteDifferences) {
  const SyntheticWorld w = make_world(WorldOptions{});
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 20; ++rep) {
    const Vector z = oracle::gaussian(8, rng), u = oracle::gaussian(16, rng);
    const Matrix j = oracle::central_jacobian(
        [&](const Vector& x) { return encode_audio(w, x).values(); }, z, 1e-6);
    const Vector want = j.transpose() * u;
    EXPECT_LE(oracle::relative_error(w.audio_encoder().vjp(z, u), want), 1e-5);
  }
}

TEST(AudioEncoder, ScaleInvariantWithoutBias) {
  std::mt19937_64 rng(13);
  Matrix m(6, 4);
  for (Eigen::Index i = 0; i < 6; ++i) m.row(i) = oracle::gaussian(4, rng).transpose();
  const AudioEncoder enc(m, Vector::Zero(6));
  for (int rep = 0; rep < 10; ++rep) {
    const Vector z = oracle::gaussian(4, rng);
    EXPECT_LE((enc.encode(2.0 * z).values() - enc.encode(z).values()).norm(), 1e-15);
  }
  EXPECT_THROW(enc.encode(Vector::Zero(4)), Error);
  EXPECT_THROW(enc.encode(Vector::Zero(5)), Error);
}

TEST(World, NoiselessMatchedTripletIsNearlyDependent) {
  const SyntheticWorld w = make_world(8, 16, 8, 0.0, 42);
  for (std::size_t c = 0; c < 8; ++c) {
    const Embedding ea = encode_audio(w, w.prior().component(c).mean);
    EXPECT_LE(volume(w.anchor(c), ea, w.anchor(c)), 0.15);
  }
}

TEST(World, MismatchedAudioSpansLargerVolume) {
  // With v = p the volume is identically zero, so separation is measured with
  // noisy conditions: matched audio must span less volume than another
  // concept's audio in at least 95% of (c, c') pairs.
  const SyntheticWorld w = make_world(8, 16, 8, 0.05, 42);
  int wins = 0, pairs = 0;
  for (std::size_t c = 0; c < 8; ++c) {
    const ConditionPair p = emit_condition(w, c, 1000 + c);
    const double matched = volume(p.video, encode_audio(w, w.prior().component(c).mean), p.text);
    for (std::size_t k = 0; k < 8; ++k) {
      if (k == c) continue;
      ++pairs;
      wins += volume(p.video, encode_audio(w, w.prior().component(k).mean), p.text) > matched;
    }
  }
  EXPECT_GE(wins, static_cast<int>(std::ceil(0.95 * pairs)));
}

TEST(World, CleanLatentSamplesFollowComponent) {
  const SyntheticWorld w = make_world(WorldOptions{});
  std::mt19937_64 rng(14);
  Vector sum = Vector::Zero(8);
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += sample_clean_latent(w, 5, rng);
  const Vector mean = sum / n;
  const double se = w.options().latent_std / std::sqrt(double(n));
  EXPECT_LE((mean - w.prior().component(5).mean).cwiseAbs().maxCoeff(), 4 * se);
}

}  // namespace
}  // namespace mdg
