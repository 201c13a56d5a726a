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

// Latent diffusion substrate: variance-preserving noise schedule, forward
// marginal, clean-latent prediction, deterministic DDIM reverse step,
// classifier-free guidance, and an exact Gaussian-mixture posterior that
// plays the role of a trained noise predictor eps_theta(z_t, t, cond).
//
// A trained eps_theta minimizes E ||eps - eps_theta(z_t, t, cond)||^2 over
// z_0 ~ data, eps ~ N(0, I) and t. Its minimizer is the posterior mean
// E[eps | z_t], which is what `oracle_denoiser` computes in closed form.

#ifndef MDG_DIFFUSION_HPP_
#define MDG_DIFFUSION_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "mdg/error.hpp"
#include "mdg/geometry.hpp"

namespace mdg {

/// Linear-beta schedule on a grid of T training steps. Timesteps are 1-based;
/// alpha_bar(0) = 1 by convention so a reverse step to t = 0 lands on the
/// clean prediction.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  static NoiseSchedule from_betas(std::vector<double> betas) {
    if (betas.empty()) {
      throw Error(ErrorCode::kInvalidRange, "schedule needs at least one step");
    }
    NoiseSchedule s;
    s.alpha_bars_.reserve(betas.size() + 1);
    s.alpha_bars_.push_back(1.0);
    double prod = 1.0;
    for (double b : betas) {
      if (!(b > 0.0 && b < 1.0)) {
        throw Error(ErrorCode::kInvalidRange,
                    "beta must lie in (0, 1), got " + std::to_string(b));
      }
      prod *= 1.0 - b;
      s.alpha_bars_.push_back(prod);
    }
    s.betas_ = std::move(betas);
    return s;
  }

  int steps() const noexcept { return static_cast<int>(betas_.size()); }
  const std::vector<double>& betas() const noexcept { return betas_; }

  /// beta_t for t in [1, T].
  double beta(int t) const {
    check(t, 1);
    return betas_[static_cast<std::size_t>(t - 1)];
  }

  /// Cumulative product prod_{i <= t} (1 - beta_i) for t in [0, T].
  double alpha_bar(int t) const {
    check(t, 0);
    return alpha_bars_[static_cast<std::size_t>(t)];
  }

 private:
  void check(int t, int lo) const {
    if (t < lo || t > steps()) {
      throw Error(ErrorCode::kTimestepOutOfRange,
                  "timestep " + std::to_string(t) + " outside [" +
                      std::to_string(lo) + ", " + std::to_string(steps()) + "]");
    }
  }

  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

inline constexpr int kDefaultGridSteps = 1000;
inline constexpr int kDefaultDdimSteps = 30;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;
inline constexpr double kDefaultCfgScale = 2.5;

inline NoiseSchedule make_schedule(int grid_steps = kDefaultGridSteps,
                                   double beta_start = kDefaultBetaStart,
                                   double beta_end = kDefaultBetaEnd) {
  if (grid_steps < 1) {
    throw Error(ErrorCode::kInvalidRange, "schedule needs T >= 1");
  }
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw Error(ErrorCode::kInvalidRange,
                "need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(grid_steps));
  for (int i = 0; i < grid_steps; ++i) {
    const double frac =
        grid_steps == 1 ? 0.0 : static_cast<double>(i) / (grid_steps - 1);
    betas[static_cast<std::size_t>(i)] =
        beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

/// Evenly spaced descending DDIM timesteps ending at T, e.g. T = 1000 with 30
/// steps gives 1000, 967, ..., 33. The reverse pass after the last entry goes
/// to t = 0.
inline std::vector<int> ddim_timesteps(const NoiseSchedule& schedule,
                                       int num_steps) {
  const int grid = schedule.steps();
  if (num_steps < 1 || num_steps > grid) {
    throw Error(ErrorCode::kInvalidRange,
                "DDIM steps must lie in [1, " + std::to_string(grid) + "]");
  }
  std::vector<int> ts(static_cast<std::size_t>(num_steps));
  for (int k = 0; k < num_steps; ++k) {
    const long long num = static_cast<long long>(num_steps - k) * grid;
    ts[static_cast<std::size_t>(k)] =
        static_cast<int>((num + num_steps / 2) / num_steps);
  }
  return ts;
}

struct LatentState {
  Vector z;
  int t = 0;
};

/// z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps.
inline LatentState forward_sample(const Vector& z0, int t, const Vector& eps,
                                  const NoiseSchedule& schedule) {
  if (eps.size() != z0.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "noise and latent lengths differ");
  }
  const double ab = schedule.alpha_bar(t);
  return {std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps, t};
}

/// z~_0 = (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).
inline Vector predict_clean(const LatentState& zt, const Vector& eps_hat,
                            const NoiseSchedule& schedule) {
  if (zt.t < 1) {
    throw Error(ErrorCode::kTimestepOutOfRange,
                "clean prediction needs t >= 1");
  }
  if (eps_hat.size() != zt.z.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "noise and latent lengths differ");
  }
  const double ab = schedule.alpha_bar(zt.t);
  return (zt.z - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

/// Deterministic DDIM update from t to t_prev (eta_DDIM = 0).
inline LatentState ddim_step(const LatentState& zt, const Vector& eps_hat,
                             int t_prev, const NoiseSchedule& schedule) {
  if (t_prev > zt.t) {
    throw Error(ErrorCode::kTimestepOrder,
                "DDIM step must not increase t (" + std::to_string(zt.t) +
                    " -> " + std::to_string(t_prev) + ")");
  }
  if (t_prev == zt.t) return zt;
  const Vector z0 = predict_clean(zt, eps_hat, schedule);
  const double ab_prev = schedule.alpha_bar(t_prev);
  if (ab_prev == 1.0) return {z0, t_prev};
  return {std::sqrt(ab_prev) * z0 + std::sqrt(1.0 - ab_prev) * eps_hat, t_prev};
}

/// eps_uncond + s (eps_cond - eps_uncond).
inline Vector cfg_combine(const Vector& eps_cond, const Vector& eps_uncond,
                          double scale) {
  if (eps_cond.size() != eps_uncond.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "conditional and unconditional predictions differ in length");
  }
  return eps_uncond + scale * (eps_cond - eps_uncond);
}

/// Diagonal-covariance Gaussian mixture over clean latents, one component per
/// concept.
struct MixtureComponent {
  double weight = 1.0;
  Vector mean;
  Vector variance;
};

class GaussianMixturePrior {
 public:
  GaussianMixturePrior() = default;

  explicit GaussianMixturePrior(std::vector<MixtureComponent> components)
      : components_(std::move(components)) {
    if (components_.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "mixture needs a component");
    }
    const Eigen::Index dim = components_.front().mean.size();
    double total = 0.0;
    for (const auto& c : components_) {
      if (c.mean.size() != dim || c.variance.size() != dim || dim < 1) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "mixture components disagree on latent dimension");
      }
      if (!(c.weight > 0.0) || !((c.variance.array() > 0.0).all())) {
        throw Error(ErrorCode::kInvalidArgument,
                    "mixture weights and variances must be positive");
      }
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      for (auto& c : components_) c.weight /= total;
    }
  }

  std::size_t size() const noexcept { return components_.size(); }
  Eigen::Index dim() const noexcept {
    return components_.empty() ? 0 : components_.front().mean.size();
  }
  const MixtureComponent& component(std::size_t c) const {
    if (c >= components_.size()) {
      throw Error(ErrorCode::kUnknownConcept,
                  "concept " + std::to_string(c) + " not in mixture of " +
                      std::to_string(components_.size()));
    }
    return components_[c];
  }
  const std::vector<MixtureComponent>& components() const noexcept {
    return components_;
  }

 private:
  std::vector<MixtureComponent> components_;
};

namespace detail {

struct ComponentPosterior {
  Vector eps;        // E[eps | z_t, c]
  Vector gain;       // d E[z_0 | z_t, c] / d z_t (diagonal)
  Vector log_grad;   // d log N(z_t; sqrt(ab) mu, ab var + 1 - ab) / d z_t
  double log_density = 0.0;
};

inline ComponentPosterior component_posterior(const MixtureComponent& c,
                                              const Vector& zt, double ab) {
  const double sa = std::sqrt(ab);
  const double s1 = std::sqrt(1.0 - ab);
  const Eigen::ArrayXd marg_var = ab * c.variance.array() + (1.0 - ab);
  const Eigen::ArrayXd resid = zt.array() - sa * c.mean.array();
  ComponentPosterior p;
  p.gain = (sa * c.variance.array() / marg_var).matrix();
  const Vector post_mean = c.mean + (p.gain.array() * resid).matrix();
  p.eps = (zt - sa * post_mean) / s1;
  p.log_grad = (-resid / marg_var).matrix();
  p.log_density =
      -0.5 * ((2.0 * std::numbers::pi * marg_var).log().sum() +
              (resid.square() / marg_var).sum());
  return p;
}

inline void check_denoiser_inputs(const LatentState& zt,
                                  const GaussianMixturePrior& prior,
                                  const NoiseSchedule& schedule) {
  if (zt.z.size() != prior.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "latent length does not match the prior");
  }
  if (zt.t < 1 || zt.t > schedule.steps()) {
    throw Error(ErrorCode::kTimestepOutOfRange,
                "denoiser needs t in [1, T]");
  }
}

inline Vector responsibilities(const std::vector<ComponentPosterior>& posts,
                               const GaussianMixturePrior& prior) {
  const std::size_t n = posts.size();
  Vector logits(static_cast<Eigen::Index>(n));
  for (std::size_t c = 0; c < n; ++c) {
    logits[static_cast<Eigen::Index>(c)] =
        std::log(prior.component(c).weight) + posts[c].log_density;
  }
  const double m = logits.maxCoeff();
  Vector r = (logits.array() - m).exp().matrix();
  return r / r.sum();
}

}  // namespace detail

/// Exact E[eps | z_t] under the mixture prior. With `condition` the posterior
/// of that single component is used; otherwise components are weighted by
/// their responsibilities (computed in log space).
inline Vector oracle_denoiser(const LatentState& zt,
                              const GaussianMixturePrior& prior,
                              std::optional<std::size_t> condition,
                              const NoiseSchedule& schedule) {
  detail::check_denoiser_inputs(zt, prior, schedule);
  const double ab = schedule.alpha_bar(zt.t);
  if (condition) {
    return detail::component_posterior(prior.component(*condition), zt.z, ab)
        .eps;
  }
  std::vector<detail::ComponentPosterior> posts;
  posts.reserve(prior.size());
  for (const auto& c : prior.components()) {
    posts.push_back(detail::component_posterior(c, zt.z, ab));
  }
  const Vector r = detail::responsibilities(posts, prior);
  Vector eps = Vector::Zero(zt.z.size());
  for (std::size_t c = 0; c < posts.size(); ++c) {
    eps += r[static_cast<Eigen::Index>(c)] * posts[c].eps;
  }
  return eps;
}

/// Jacobian d eps_hat / d z_t of `oracle_denoiser` (L x L).
inline Matrix oracle_denoiser_jacobian(const LatentState& zt,
                                       const GaussianMixturePrior& prior,
                                       std::optional<std::size_t> condition,
                                       const NoiseSchedule& schedule) {
  detail::check_denoiser_inputs(zt, prior, schedule);
  const double ab = schedule.alpha_bar(zt.t);
  const double sa = std::sqrt(ab);
  const double s1 = std::sqrt(1.0 - ab);
  const Eigen::Index n = zt.z.size();
  auto component_jac = [&](const detail::ComponentPosterior& p) {
    Matrix j = Matrix::Identity(n, n);
    j.diagonal().array() -= sa * p.gain.array();
    return Matrix(j / s1);
  };
  if (condition) {
    return component_jac(
        detail::component_posterior(prior.component(*condition), zt.z, ab));
  }
  std::vector<detail::ComponentPosterior> posts;
  posts.reserve(prior.size());
  for (const auto& c : prior.components()) {
    posts.push_back(detail::component_posterior(c, zt.z, ab));
  }
  const Vector r = detail::responsibilities(posts, prior);
  Vector mean_log_grad = Vector::Zero(n);
  for (std::size_t c = 0; c < posts.size(); ++c) {
    mean_log_grad += r[static_cast<Eigen::Index>(c)] * posts[c].log_grad;
  }
  Matrix jac = Matrix::Zero(n, n);
  for (std::size_t c = 0; c < posts.size(); ++c) {
    const double rc = r[static_cast<Eigen::Index>(c)];
    jac += rc * component_jac(posts[c]);
    // d r_c / d z = r_c (g_c - sum_k r_k g_k)
    jac += rc * posts[c].eps * (posts[c].log_grad - mean_log_grad).transpose();
  }
  return jac;
}

}  // namespace mdg

#endif  // MDG_DIFFUSION_HPP_
