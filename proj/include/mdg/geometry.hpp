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

// Tri-modal embedding geometry: unit embeddings, the 3x3 Gram matrix of a
// (video, audio, text) triplet, the volume of the parallelotope it spans and
// the analytic gradient of that volume.

#ifndef MDG_GEOMETRY_HPP_
#define MDG_GEOMETRY_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "mdg/error.hpp"

namespace mdg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Matrix3 = Eigen::Matrix3d;

inline constexpr double kZeroNormThreshold = 1e-12;
inline constexpr double kDefaultVolumeFloor = 1e-6;
inline constexpr double kDetClampTolerance = 1e-9;
inline constexpr double kDetErrorTolerance = 1e-6;

/// Column order of the embedding matrix Z = [e^v, e^a, e^p].
enum class Modality : int { kVideo = 0, kAudio = 1, kText = 2 };

constexpr const char* to_string(Modality m) {
  switch (m) {
    case Modality::kVideo: return "video";
    case Modality::kAudio: return "audio";
    case Modality::kText: return "text";
  }
  return "?";
}

/// A unit-norm vector in the shared semantic space. Only `normalize` (or the
/// checked factory below) produces one, so every instance satisfies
/// ||values|| = 1 up to roundoff.
class Embedding {
 public:
  Embedding() = default;

  /// Wraps already-unit values without rescaling them (bit-exact round trips
  /// through serialization). Throws InvalidArgument when | ||v|| - 1 | > 1e-9.
  static Embedding from_unit(Vector v) {
    if (v.size() < 3) {
      throw Error(ErrorCode::kInvalidDims, "embeddings need at least 3 dimensions");
    }
    if (!v.allFinite() || std::abs(v.norm() - 1.0) > 1e-9) {
      throw Error(ErrorCode::kInvalidArgument, "values are not unit-norm");
    }
    return Embedding(std::move(v));
  }

  const Vector& values() const noexcept { return values_; }
  Eigen::Index dim() const noexcept { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }

  double dot(const Embedding& other) const {
    if (other.dim() != dim()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "embedding dimensions " + std::to_string(dim()) + " and " +
                      std::to_string(other.dim()));
    }
    return values_.dot(other.values_);
  }

  friend bool operator==(const Embedding& a, const Embedding& b) {
    return a.values_ == b.values_;
  }

 private:
  explicit Embedding(Vector v) : values_(std::move(v)) {}
  friend Embedding normalize(const Vector& v);

  Vector values_;
};

/// Returns v / ||v||. Throws ZeroVector when ||v|| <= 1e-12 and InvalidDims
/// when v has fewer than three coordinates.
inline Embedding normalize(const Vector& v) {
  if (v.size() < 3) {
    throw Error(ErrorCode::kInvalidDims,
                "embeddings need at least 3 dimensions, got " +
                    std::to_string(v.size()));
  }
  const double n = v.norm();
  if (!(n > kZeroNormThreshold)) {
    throw Error(ErrorCode::kZeroVector, "cannot normalize a zero-norm vector");
  }
  return Embedding(v / n);
}

/// Gram matrix K = Z^T Z of a (video, audio, text) triplet with its
/// determinant and volume sqrt(max(det K, 0)).
struct TripletGram {
  Matrix z;         // D x 3
  Matrix3 k;        // 3 x 3, symmetric PSD
  double det = 0.0;
  double volume = 0.0;
};

namespace detail {

inline double det3(const Matrix3& k) {
  return k(0, 0) * (k(1, 1) * k(2, 2) - k(1, 2) * k(2, 1)) -
         k(0, 1) * (k(1, 0) * k(2, 2) - k(1, 2) * k(2, 0)) +
         k(0, 2) * (k(1, 0) * k(2, 1) - k(1, 1) * k(2, 0));
}

// adj(K) for symmetric K; finite whenever K is.
inline Matrix3 adjugate3(const Matrix3& k) {
  Matrix3 a;
  a(0, 0) = k(1, 1) * k(2, 2) - k(1, 2) * k(2, 1);
  a(0, 1) = k(0, 2) * k(2, 1) - k(0, 1) * k(2, 2);
  a(0, 2) = k(0, 1) * k(1, 2) - k(0, 2) * k(1, 1);
  a(1, 0) = k(1, 2) * k(2, 0) - k(1, 0) * k(2, 2);
  a(1, 1) = k(0, 0) * k(2, 2) - k(0, 2) * k(2, 0);
  a(1, 2) = k(0, 2) * k(1, 0) - k(0, 0) * k(1, 2);
  a(2, 0) = k(1, 0) * k(2, 1) - k(1, 1) * k(2, 0);
  a(2, 1) = k(0, 1) * k(2, 0) - k(0, 0) * k(2, 1);
  a(2, 2) = k(0, 0) * k(1, 1) - k(0, 1) * k(1, 0);
  return a;
}

inline double volume_from_det(double det) {
  if (!std::isfinite(det)) {
    throw Error(ErrorCode::kNumericalError, "non-finite Gram determinant");
  }
  if (det < -kDetErrorTolerance) {
    throw Error(ErrorCode::kNumericalError,
                "Gram determinant " + std::to_string(det) +
                    " is negative beyond roundoff");
  }
  return std::sqrt(std::max(det, 0.0));
}

}  // namespace detail

/// Builds the Gram matrix of three raw column vectors (not necessarily unit).
inline TripletGram gram_of_columns(const Vector& c0, const Vector& c1,
                                   const Vector& c2) {
  if (c0.size() != c1.size() || c0.size() != c2.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "triplet columns have dimensions " + std::to_string(c0.size()) +
                    ", " + std::to_string(c1.size()) + ", " +
                    std::to_string(c2.size()));
  }
  TripletGram g;
  g.z.resize(c0.size(), 3);
  g.z.col(0) = c0;
  g.z.col(1) = c1;
  g.z.col(2) = c2;
  g.k = g.z.transpose() * g.z;
  g.det = detail::det3(g.k);
  g.volume = detail::volume_from_det(g.det);
  return g;
}

inline TripletGram gram(const Embedding& ev, const Embedding& ea,
                        const Embedding& ep) {
  return gram_of_columns(ev.values(), ea.values(), ep.values());
}

inline double volume(const TripletGram& g) {
  return detail::volume_from_det(g.det);
}

inline double volume(const Embedding& ev, const Embedding& ea,
                     const Embedding& ep) {
  return gram(ev, ea, ep).volume;
}

/// True when `volume_grad` differentiates V^2 = det K instead of V.
inline bool uses_squared_objective(const TripletGram& g,
                                   double v_floor = kDefaultVolumeFloor) {
  return g.volume < v_floor;
}

/// Gradient of the volume with respect to one (unconstrained) column of Z.
///
/// grad_{z_c} det K = 2 (Z adj K)_{:,c}, hence grad_{z_c} V = (Z adj K)_{:,c} / V
/// which equals V (Z K^-1)_{:,c} wherever K is invertible. Below `v_floor` the
/// gradient of V^2 is returned instead so the result stays bounded at
/// degenerate triplets.
inline Vector volume_grad(const TripletGram& g, Modality column,
                          double v_floor = kDefaultVolumeFloor) {
  const Matrix3 adj = detail::adjugate3(g.k);
  const Vector z_adj = g.z * adj.col(static_cast<int>(column));
  if (!uses_squared_objective(g, v_floor)) {
    return z_adj / g.volume;
  }
  Vector grad_sq = 2.0 * z_adj;
  if (!grad_sq.allFinite()) {
    throw Error(ErrorCode::kSingularGram,
                "adjugate fallback produced a non-finite gradient");
  }
  return grad_sq;
}

inline double cosine_distance(const Embedding& e1, const Embedding& e2) {
  return std::clamp(1.0 - e1.dot(e2), 0.0, 2.0);
}

/// Cosine similarity of two raw vectors.
inline double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "cosine of unequal lengths");
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > kZeroNormThreshold) || !(nb > kZeroNormThreshold)) {
    throw Error(ErrorCode::kZeroVector, "cosine of a zero-norm vector");
  }
  return a.dot(b) / (na * nb);
}

}  // namespace mdg

#endif  // MDG_GEOMETRY_HPP_
