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

// A seeded synthetic tri-modal world. Every concept owns a unit anchor in the
// shared space; video and text encoders emit noisy copies of the anchor, and
// the audio encoder is an affine map of the audio latent followed by
// normalization. Clean audio latents of a concept follow one component of a
// diagonal Gaussian mixture whose mean encodes onto that concept's anchor.

#ifndef MDG_WORLD_HPP_
#define MDG_WORLD_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mdg/diffusion.hpp"
#include "mdg/error.hpp"
#include "mdg/geometry.hpp"

namespace mdg {

struct WorldOptions {
  int concepts = 8;       // J
  int embed_dim = 16;     // D
  int latent_dim = 8;     // L
  double sigma_mod = 0.05;
  std::uint64_t seed = 42;
  double anchor_cos_cap = 0.5;
  int max_anchor_attempts = 1000;
  double latent_mean_norm = 1.0;
  double latent_std = 1.0;
  double bias_scale = 0.1;
};

namespace detail {

inline Vector gaussian_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols,
                              std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  }
  return m;
}

}  // namespace detail

/// e = normalize(W z + b), with the vector-Jacobian product used by guidance.
class AudioEncoder {
 public:
  AudioEncoder() = default;
  AudioEncoder(Matrix w, Vector b) : w_(std::move(w)), b_(std::move(b)) {
    if (w_.rows() != b_.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "encoder W and b disagree");
    }
  }

  const Matrix& weight() const noexcept { return w_; }
  const Vector& bias() const noexcept { return b_; }
  Eigen::Index latent_dim() const noexcept { return w_.cols(); }
  Eigen::Index embed_dim() const noexcept { return w_.rows(); }

  Embedding encode(const Vector& z0) const { return normalize(project(z0)); }

  /// u -> W^T (I - e e^T) u / ||W z0 + b||.
  Vector vjp(const Vector& z0, const Vector& u) const {
    const Vector y = project(z0);
    const double n = y.norm();
    if (!(n > kZeroNormThreshold)) {
      throw Error(ErrorCode::kZeroVector, "audio pre-embedding vanished");
    }
    const Vector e = y / n;
    return w_.transpose() * ((u - e * e.dot(u)) / n);
  }

 private:
  Vector project(const Vector& z0) const {
    if (z0.size() != w_.cols()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "audio latent has length " + std::to_string(z0.size()) +
                      ", encoder expects " + std::to_string(w_.cols()));
    }
    return w_ * z0 + b_;
  }

  Matrix w_;
  Vector b_;
};

struct ConditionPair {
  Embedding video;
  Embedding text;
};

class SyntheticWorld {
 public:
  SyntheticWorld() = default;
  SyntheticWorld(WorldOptions options, std::vector<Embedding> anchors,
                 AudioEncoder encoder, GaussianMixturePrior prior)
      : options_(options),
        anchors_(std::move(anchors)),
        encoder_(std::move(encoder)),
        prior_(std::move(prior)) {}

  const WorldOptions& options() const noexcept { return options_; }
  int concepts() const noexcept { return static_cast<int>(anchors_.size()); }
  int embed_dim() const noexcept { return options_.embed_dim; }
  int latent_dim() const noexcept { return options_.latent_dim; }
  const std::vector<Embedding>& anchors() const noexcept { return anchors_; }
  const Embedding& anchor(std::size_t c) const {
    check_concept(c);
    return anchors_[c];
  }
  const AudioEncoder& audio_encoder() const noexcept { return encoder_; }
  const GaussianMixturePrior& prior() const noexcept { return prior_; }

  void check_concept(std::size_t c) const {
    if (c >= anchors_.size()) {
      throw Error(ErrorCode::kUnknownConcept,
                  "concept " + std::to_string(c) + " not in world of " +
                      std::to_string(anchors_.size()));
    }
  }

 private:
  WorldOptions options_;
  std::vector<Embedding> anchors_;
  AudioEncoder encoder_;
  GaussianMixturePrior prior_;
};

inline constexpr double kEncoderAnchorCosine = 0.99;

/// Builds a world deterministically from `options`.
///
/// Anchors are drawn one at a time and redrawn (up to max_anchor_attempts)
/// until every pairwise cosine is below the cap. Latent means have norm
/// latent_mean_norm and are mutually orthogonal when J <= L; W is then solved
/// so that W mu_c + b = anchor_c exactly, with a random component on the
/// complement of span{mu_c}.
inline SyntheticWorld make_world(const WorldOptions& options) {
  const int j = options.concepts;
  const int d = options.embed_dim;
  const int l = options.latent_dim;
  if (d < 3 || l < 2 || j < 2) {
    throw Error(ErrorCode::kInvalidDims,
                "world needs D >= 3, L >= 2, J >= 2 (got D=" +
                    std::to_string(d) + ", L=" + std::to_string(l) +
                    ", J=" + std::to_string(j) + ")");
  }
  if (!(options.sigma_mod >= 0.0) || !(options.latent_std > 0.0) ||
      !(options.latent_mean_norm > 0.0) || !(options.bias_scale >= 0.0)) {
    throw Error(ErrorCode::kConfigInvalid,
                "world noise scales must be nonnegative (latent scales positive)");
  }
  std::mt19937_64 rng(options.seed);

  std::vector<Embedding> anchors;
  anchors.reserve(static_cast<std::size_t>(j));
  for (int c = 0; c < j; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < options.max_anchor_attempts; ++attempt) {
      Embedding cand = normalize(detail::gaussian_vector(d, rng));
      bool ok = true;
      for (const auto& a : anchors) {
        if (a.dot(cand) > options.anchor_cos_cap) {
          ok = false;
          break;
        }
      }
      if (ok) {
        anchors.push_back(std::move(cand));
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw Error(ErrorCode::kInvariantViolation,
                  "could not place anchor " + std::to_string(c) + " of " +
                      std::to_string(j) + " in D=" + std::to_string(d) +
                      " with pairwise cosine <= " +
                      std::to_string(options.anchor_cos_cap) + " after " +
                      std::to_string(options.max_anchor_attempts) +
                      " attempts");
    }
  }

  Matrix means(l, j);
  if (j <= l) {
    Eigen::HouseholderQR<Matrix> qr(detail::gaussian_matrix(l, j, rng));
    const Matrix q = qr.householderQ() * Matrix::Identity(l, j);
    means = options.latent_mean_norm * q;
  } else {
    for (int c = 0; c < j; ++c) {
      means.col(c) =
          options.latent_mean_norm * detail::gaussian_vector(l, rng).normalized();
    }
  }

  const Vector bias =
      options.bias_scale * detail::gaussian_vector(d, rng) / std::sqrt(double(d));
  Matrix targets(d, j);
  for (int c = 0; c < j; ++c) {
    targets.col(c) = anchors[static_cast<std::size_t>(c)].values() - bias;
  }
  const Matrix pinv = means.completeOrthogonalDecomposition().pseudoInverse();
  const Matrix complement = Matrix::Identity(l, l) - means * pinv;
  const Matrix free_part = detail::gaussian_matrix(d, l, rng) /
                           (options.latent_mean_norm * std::sqrt(double(l)));
  AudioEncoder encoder(targets * pinv + free_part * complement, bias);

  std::vector<MixtureComponent> comps;
  comps.reserve(static_cast<std::size_t>(j));
  for (int c = 0; c < j; ++c) {
    comps.push_back({1.0 / j, means.col(c),
                     Vector::Constant(l, options.latent_std * options.latent_std)});
  }

  SyntheticWorld world(options, std::move(anchors), std::move(encoder),
                       GaussianMixturePrior(std::move(comps)));
  for (int c = 0; c < j; ++c) {
    const auto& comp = world.prior().component(static_cast<std::size_t>(c));
    const double cos = world.audio_encoder().encode(comp.mean).dot(
        world.anchor(static_cast<std::size_t>(c)));
    if (cos < kEncoderAnchorCosine) {
      throw Error(ErrorCode::kInvariantViolation,
                  "audio encoder maps concept " + std::to_string(c) +
                      " mean to cosine " + std::to_string(cos) +
                      " with its anchor (need >= 0.99); J > L cannot be "
                      "fitted exactly");
    }
  }
  return world;
}

inline SyntheticWorld make_world(int concepts, int embed_dim, int latent_dim,
                                 double sigma_mod, std::uint64_t seed) {
  WorldOptions o;
  o.concepts = concepts;
  o.embed_dim = embed_dim;
  o.latent_dim = latent_dim;
  o.sigma_mod = sigma_mod;
  o.seed = seed;
  return make_world(o);
}

/// Video and text embeddings for concept c: normalize(anchor + sigma * noise)
/// with independent noise per modality.
inline ConditionPair emit_condition(const SyntheticWorld& world, std::size_t c,
                                    std::uint64_t seed) {
  world.check_concept(c);
  std::mt19937_64 rng(seed);
  const double s = world.options().sigma_mod;
  const Vector& a = world.anchor(c).values();
  if (s == 0.0) return {world.anchor(c), world.anchor(c)};
  Vector nv = detail::gaussian_vector(a.size(), rng);
  Vector np = detail::gaussian_vector(a.size(), rng);
  return {normalize(a + s * nv), normalize(a + s * np)};
}

inline Embedding encode_audio(const SyntheticWorld& world, const Vector& z0) {
  return world.audio_encoder().encode(z0);
}

/// Draws a clean latent from the mixture component of concept c.
inline Vector sample_clean_latent(const SyntheticWorld& world, std::size_t c,
                                  std::mt19937_64& rng) {
  const auto& comp = world.prior().component(c);
  Vector noise = detail::gaussian_vector(comp.mean.size(), rng);
  return comp.mean + (comp.variance.array().sqrt() * noise.array()).matrix();
}

}  // namespace mdg

#endif  // MDG_WORLD_HPP_
