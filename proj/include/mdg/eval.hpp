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

// Evaluation metrics: tri-modal semantic consistency (volume and cross-modal
// cosine distances), the Frechet distance between Gaussian fits of two
// embedding populations, nearest-anchor retrieval accuracy and a paired sign
// test.

#ifndef MDG_EVAL_HPP_
#define MDG_EVAL_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mdg/contrastive.hpp"
#include "mdg/error.hpp"
#include "mdg/geometry.hpp"
#include "mdg/world.hpp"

namespace mdg {

struct SemanticMetrics {
  double volume = 0.0;
  double dcos_tv = 0.0;
  double dcos_ta = 0.0;
  double dcos_va = 0.0;
  double dcos = 0.0;  // dcos_tv + dcos_ta + dcos_va
};

struct SemanticReport {
  std::vector<SemanticMetrics> samples;
  SemanticMetrics mean;
};

inline SemanticMetrics semantic_metrics(const Triplet& t) {
  SemanticMetrics m;
  m.volume = volume(t.video, t.audio, t.text);
  m.dcos_tv = cosine_distance(t.text, t.video);
  m.dcos_ta = cosine_distance(t.text, t.audio);
  m.dcos_va = cosine_distance(t.video, t.audio);
  m.dcos = m.dcos_tv + m.dcos_ta + m.dcos_va;
  return m;
}

inline SemanticReport semantic_report(std::span<const Triplet> triplets) {
  if (triplets.empty()) {
    throw Error(ErrorCode::kEmptyInput, "semantic report of no samples");
  }
  SemanticReport r;
  r.samples.reserve(triplets.size());
  for (const auto& t : triplets) r.samples.push_back(semantic_metrics(t));
  const double n = static_cast<double>(r.samples.size());
  for (const auto& s : r.samples) {
    r.mean.volume += s.volume;
    r.mean.dcos_tv += s.dcos_tv;
    r.mean.dcos_ta += s.dcos_ta;
    r.mean.dcos_va += s.dcos_va;
    r.mean.dcos += s.dcos;
  }
  r.mean.volume /= n;
  r.mean.dcos_tv /= n;
  r.mean.dcos_ta /= n;
  r.mean.dcos_va /= n;
  r.mean.dcos /= n;
  return r;
}

struct GaussianFit {
  Vector mean;
  Matrix covariance;
};

/// Sample mean and unbiased (n - 1) covariance.
inline GaussianFit fit_gaussian(std::span<const Vector> samples) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::kTooFewSamples,
                "need at least two samples, got " +
                    std::to_string(samples.size()));
  }
  const Eigen::Index d = samples.front().size();
  Matrix x(static_cast<Eigen::Index>(samples.size()), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != d) {
      throw Error(ErrorCode::kDimensionMismatch, "samples differ in dimension");
    }
    if (!samples[i].allFinite()) {
      throw Error(ErrorCode::kNonFiniteInput,
                  "sample " + std::to_string(i) + " is not finite");
    }
    x.row(static_cast<Eigen::Index>(i)) = samples[i].transpose();
  }
  GaussianFit fit;
  fit.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - fit.mean.transpose();
  fit.covariance = (centered.transpose() * centered) /
                   static_cast<double>(samples.size() - 1);
  return fit;
}

namespace detail {

// Eigenvalues of a symmetric PSD matrix with roundoff negatives clamped to 0.
inline Vector psd_eigenvalues(const Eigen::SelfAdjointEigenSolver<Matrix>& es,
                              double scale) {
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::kNumericalError, "eigendecomposition failed");
  }
  Vector ev = es.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, scale);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol) {
      throw Error(ErrorCode::kNumericalError,
                  "covariance has eigenvalue " + std::to_string(ev[i]));
    }
    ev[i] = std::max(ev[i], 0.0);
  }
  return ev;
}

inline Matrix psd_sqrt(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const Vector ev = psd_eigenvalues(es, s.cwiseAbs().maxCoeff());
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace detail

/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}).
///
/// tr (S1 S2)^{1/2} is evaluated as tr (S1^{1/2} S2 S1^{1/2})^{1/2}, whose
/// argument is symmetric PSD.
inline double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  if (a.mean.size() != b.mean.size() ||
      a.covariance.rows() != a.mean.size() ||
      b.covariance.rows() != b.mean.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "Gaussian parameters differ in dimension");
  }
  if (!a.mean.allFinite() || !b.mean.allFinite() ||
      !a.covariance.allFinite() || !b.covariance.allFinite()) {
    throw Error(ErrorCode::kNonFiniteInput, "non-finite Gaussian parameters");
  }
  const Matrix sa = 0.5 * (a.covariance + a.covariance.transpose());
  const Matrix sb = 0.5 * (b.covariance + b.covariance.transpose());
  const Matrix root_a = detail::psd_sqrt(sa);
  const Matrix middle = root_a * sb * root_a;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (middle + middle.transpose()));
  const Vector ev =
      detail::psd_eigenvalues(es, std::max(1.0, middle.cwiseAbs().maxCoeff()));
  const double d = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() -
                   2.0 * ev.cwiseSqrt().sum();
  return std::max(d, 0.0);
}

struct FrechetReport {
  GaussianFit a;
  GaussianFit b;
  double distance = 0.0;
};

inline FrechetReport frechet_report(std::span<const Vector> set_a,
                                    std::span<const Vector> set_b) {
  FrechetReport r;
  r.a = fit_gaussian(set_a);
  r.b = fit_gaussian(set_b);
  r.distance = frechet_distance(r.a, r.b);
  return r;
}

inline double frechet_distance(std::span<const Vector> set_a,
                               std::span<const Vector> set_b) {
  return frechet_report(set_a, set_b).distance;
}

inline std::vector<Vector> embedding_values(std::span<const Embedding> es) {
  std::vector<Vector> out;
  out.reserve(es.size());
  for (const auto& e : es) out.push_back(e.values());
  return out;
}

/// Index of the anchor with the largest cosine to `e` (first on ties).
inline std::size_t nearest_anchor(std::span<const Embedding> anchors,
                                  const Embedding& e) {
  if (anchors.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no anchors to retrieve from");
  }
  std::size_t best = 0;
  double best_cos = anchors[0].dot(e);
  for (std::size_t c = 1; c < anchors.size(); ++c) {
    const double cos = anchors[c].dot(e);
    if (cos > best_cos) {
      best_cos = cos;
      best = c;
    }
  }
  return best;
}

using LabeledEmbedding = std::pair<Embedding, std::size_t>;

inline double retrieval_accuracy(std::span<const Embedding> anchors,
                                 std::span<const LabeledEmbedding> generated) {
  if (generated.empty()) {
    throw Error(ErrorCode::kEmptyInput, "retrieval accuracy of no samples");
  }
  std::size_t hits = 0;
  for (const auto& [e, target] : generated) {
    if (nearest_anchor(anchors, e) == target) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(generated.size());
}

inline double retrieval_accuracy(const SyntheticWorld& world,
                                 std::span<const LabeledEmbedding> generated) {
  return retrieval_accuracy(world.anchors(), generated);
}

struct SignTest {
  int n_less = 0;     // candidate < reference
  int n_greater = 0;
  int n_ties = 0;
  double p_less = 1.0;       // one-sided: candidate tends to be smaller
  double p_two_sided = 1.0;
};

namespace detail {

// P(X >= k) for X ~ Binomial(n, 1/2).
inline double binomial_upper_tail(int k, int n) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  double total = 0.0;
  const double log_half_n = n * std::log(0.5);
  for (int i = k; i <= n; ++i) {
    total += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                      std::lgamma(n - i + 1.0) + log_half_n);
  }
  return std::min(total, 1.0);
}

}  // namespace detail

/// Exact sign test on paired values; ties are dropped.
inline SignTest sign_test(std::span<const double> candidate,
                          std::span<const double> reference) {
  if (candidate.size() != reference.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "sign test needs paired samples");
  }
  SignTest s;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (candidate[i] < reference[i]) {
      ++s.n_less;
    } else if (candidate[i] > reference[i]) {
      ++s.n_greater;
    } else {
      ++s.n_ties;
    }
  }
  const int n = s.n_less + s.n_greater;
  if (n == 0) return s;
  s.p_less = detail::binomial_upper_tail(s.n_less, n);
  s.p_two_sided = std::min(
      1.0, 2.0 * detail::binomial_upper_tail(std::max(s.n_less, s.n_greater), n));
  return s;
}

}  // namespace mdg

#endif  // MDG_EVAL_HPP_
