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

// Training-free multimodal guidance of a DDIM sampler. At every guided step
// the clean-latent prediction is encoded into the shared space and the noisy
// latent is moved to shrink the volume spanned by (video, audio, text), or,
// for the baseline, to shrink the two audio-involving cosine distances.

#ifndef MDG_GUIDANCE_HPP_
#define MDG_GUIDANCE_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mdg/diffusion.hpp"
#include "mdg/error.hpp"
#include "mdg/geometry.hpp"
#include "mdg/world.hpp"

namespace mdg {

enum class GuidanceMode { kNone, kPairwise, kVolume };
enum class OptimizerKind { kGd, kAdam };

constexpr std::string_view to_string(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::kNone: return "none";
    case GuidanceMode::kPairwise: return "pairwise";
    case GuidanceMode::kVolume: return "volume";
  }
  return "?";
}

constexpr std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::kGd ? "gd" : "adam";
}

inline GuidanceMode parse_mode(std::string_view s) {
  if (s == "none") return GuidanceMode::kNone;
  if (s == "pairwise") return GuidanceMode::kPairwise;
  if (s == "volume") return GuidanceMode::kVolume;
  throw Error(ErrorCode::kConfigInvalid,
              "unknown guidance mode '" + std::string(s) + "'");
}

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "gd") return OptimizerKind::kGd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw Error(ErrorCode::kConfigInvalid,
              "unknown optimizer '" + std::string(s) + "'");
}

struct GuidanceConfig {
  GuidanceMode mode = GuidanceMode::kVolume;
  double eta = 0.1;
  int inner_steps = 1;
  double warmup_fraction = 0.2;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Carry Adam moments across denoising steps instead of resetting them.
  bool persist_adam_state = false;
  bool detach_denoiser = true;
  double v_floor = kDefaultVolumeFloor;
  double cfg_scale = kDefaultCfgScale;
  int ddim_steps = kDefaultDdimSteps;

  void validate() const {
    auto bad = [](const std::string& what) {
      throw Error(ErrorCode::kConfigInvalid, what);
    };
    if (!(eta >= 0.0) || !std::isfinite(eta)) bad("eta must be >= 0");
    if (inner_steps < 0) bad("inner_steps must be >= 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
      bad("warmup_fraction must lie in [0, 1]");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
        !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
      bad("adam betas must lie in [0, 1) and eps must be positive");
    }
    if (!(v_floor >= 0.0)) bad("v_floor must be >= 0");
    if (!std::isfinite(cfg_scale)) bad("cfg_scale must be finite");
    if (ddim_steps < 1) bad("ddim_steps must be >= 1");
  }

  /// Number of leading DDIM iterations that run without guidance.
  int warmup_steps() const {
    return static_cast<int>(
        std::ceil(warmup_fraction * ddim_steps - 1e-9));
  }
};

/// Plain gradient descent: z - eta * grad.
inline Vector guidance_step(const Vector& z, const Vector& grad, double eta) {
  if (z.size() != grad.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "gradient and latent differ");
  }
  return z - eta * grad;
}

inline LatentState guidance_step(const LatentState& zt, const Vector& grad,
                                 double eta) {
  return {guidance_step(zt.z, grad, eta), zt.t};
}

/// Gradient descent or bias-corrected Adam on the latent.
class LatentOptimizer {
 public:
  LatentOptimizer(OptimizerKind kind, double eta, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
      : kind_(kind), eta_(eta), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  explicit LatentOptimizer(const GuidanceConfig& c)
      : LatentOptimizer(c.optimizer, c.eta, c.adam_beta1, c.adam_beta2,
                        c.adam_eps) {}

  void reset() {
    m_.resize(0);
    v_.resize(0);
    count_ = 0;
  }

  int count() const noexcept { return count_; }

  Vector step(const Vector& z, const Vector& grad) {
    if (kind_ == OptimizerKind::kGd) {
      ++count_;
      return guidance_step(z, grad, eta_);
    }
    if (z.size() != grad.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "gradient and latent differ");
    }
    if (m_.size() != grad.size()) {
      m_ = Vector::Zero(grad.size());
      v_ = Vector::Zero(grad.size());
      count_ = 0;
    }
    ++count_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, count_);
    const double c2 = 1.0 - std::pow(beta2_, count_);
    const Eigen::ArrayXd m_hat = m_.array() / c1;
    const Eigen::ArrayXd v_hat = v_.array() / c2;
    return z - (eta_ * m_hat / (v_hat.sqrt() + eps_)).matrix();
  }

 private:
  OptimizerKind kind_;
  double eta_;
  double beta1_;
  double beta2_;
  double eps_;
  Vector m_;
  Vector v_;
  int count_ = 0;
};

template <typename E>
concept DifferentiableEncoder = requires(const E& e, const Vector& z) {
  { e.encode(z) } -> std::convertible_to<Embedding>;
  { e.vjp(z, z) } -> std::convertible_to<Vector>;
};

template <typename P>
concept NoisePredictor = requires(const P& p, const LatentState& s) {
  { p.predict(s) } -> std::convertible_to<Vector>;
  { p.jacobian(s) } -> std::convertible_to<Matrix>;
};

/// Classifier-free guided oracle: eps_u + s (eps_c - eps_u) with both terms
/// taken from the exact mixture posterior.
class OracleCfgDenoiser {
 public:
  OracleCfgDenoiser(const GaussianMixturePrior& prior,
                    const NoiseSchedule& schedule,
                    std::optional<std::size_t> condition, double cfg_scale)
      : prior_(&prior),
        schedule_(&schedule),
        condition_(condition),
        scale_(cfg_scale) {
    if (condition_) prior.component(*condition_);
  }

  Vector predict(const LatentState& s) const {
    const Vector eps_u = oracle_denoiser(s, *prior_, std::nullopt, *schedule_);
    if (!condition_) return eps_u;
    const Vector eps_c = oracle_denoiser(s, *prior_, condition_, *schedule_);
    return cfg_combine(eps_c, eps_u, scale_);
  }

  Matrix jacobian(const LatentState& s) const {
    const Matrix ju =
        oracle_denoiser_jacobian(s, *prior_, std::nullopt, *schedule_);
    if (!condition_) return ju;
    const Matrix jc =
        oracle_denoiser_jacobian(s, *prior_, condition_, *schedule_);
    return ju + scale_ * (jc - ju);
  }

 private:
  const GaussianMixturePrior* prior_;
  const NoiseSchedule* schedule_;
  std::optional<std::size_t> condition_;
  double scale_;
};

struct ObjectiveResult {
  double objective = 0.0;  // the value whose gradient is returned
  double volume = 0.0;
  bool squared = false;    // objective is V^2 (below the volume floor)
  Vector gradient;         // d objective / d z_t
  Vector clean;            // z~_0
  Embedding audio;         // encode(z~_0)
};

/// Guidance objective at z_t and its gradient with respect to z_t.
///
/// The chain is z_t -> z~_0 (clean prediction) -> e^a (encoder) -> objective.
/// With `detach_denoiser` the noise prediction `eps_hat` is held constant so
/// d z~_0 / d z_t = I / sqrt(abar_t); otherwise the predictor is re-evaluated
/// at z_t and its Jacobian enters the chain.
template <DifferentiableEncoder Enc, NoisePredictor Pred>
ObjectiveResult objective_and_grad(const LatentState& zt, const Vector& eps_hat,
                                   const Embedding& ev, const Embedding& ep,
                                   const Enc& encoder, const Pred& predictor,
                                   const NoiseSchedule& schedule,
                                   const GuidanceConfig& config) {
  if (config.mode == GuidanceMode::kNone) {
    throw Error(ErrorCode::kConfigInvalid,
                "objective requested with guidance mode none");
  }
  const Vector eps = config.detach_denoiser ? eps_hat : predictor.predict(zt);
  ObjectiveResult r;
  r.clean = predict_clean(zt, eps, schedule);
  r.audio = encoder.encode(r.clean);

  const TripletGram g = gram(ev, r.audio, ep);
  r.volume = g.volume;
  Vector grad_audio;
  if (config.mode == GuidanceMode::kVolume) {
    r.squared = uses_squared_objective(g, config.v_floor);
    r.objective = r.squared ? std::max(g.det, 0.0) : g.volume;
    grad_audio = volume_grad(g, Modality::kAudio, config.v_floor);
  } else {
    r.objective = 2.0 - (ev.values() + ep.values()).dot(r.audio.values());
    grad_audio = -(ev.values() + ep.values());
  }

  const Vector grad_clean = encoder.vjp(r.clean, grad_audio);
  const double ab = schedule.alpha_bar(zt.t);
  if (config.detach_denoiser) {
    r.gradient = grad_clean / std::sqrt(ab);
  } else {
    // d z~_0 / d z_t = (I - sqrt(1 - abar) J_eps) / sqrt(abar)
    const Matrix jac = predictor.jacobian(zt);
    r.gradient = (grad_clean - std::sqrt(1.0 - ab) * jac.transpose() * grad_clean) /
                 std::sqrt(ab);
  }
  return r;
}

struct StepRecord {
  int t = 0;
  int t_prev = 0;
  bool guided = false;
  Vector z_before;
  Vector z_after;
  double volume_before = 0.0;
  double volume_after = 0.0;
  // Cosine distances of encode(z~_0) after guidance.
  double dcos_va = 0.0;
  double dcos_pa = 0.0;
  double dcos_vp = 0.0;
  std::vector<double> inner_objectives;
};

struct GuidedTrajectory {
  std::vector<StepRecord> steps;
  Vector final_latent;
  Embedding final_audio;
  double final_volume = 0.0;
};

/// Deterministic DDIM from a given z_T through the timesteps of `schedule`.
template <NoisePredictor Pred>
Vector ddim_sample(const Pred& predictor, const NoiseSchedule& schedule,
                   int num_steps, Vector z_T) {
  const std::vector<int> ts = ddim_timesteps(schedule, num_steps);
  LatentState s{std::move(z_T), ts.front()};
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    s = ddim_step(s, predictor.predict(s), t_prev, schedule);
  }
  return s.z;
}

/// Guided sampling loop. Starting from z_T ~ N(0, I) drawn from `seed`, each
/// DDIM iteration predicts eps at z_t; past the warmup prefix it runs
/// `inner_steps` optimizer updates of z_t with eps held fixed (or re-evaluated
/// when not detached), then re-predicts eps at the updated latent and takes
/// the DDIM step.
template <DifferentiableEncoder Enc, NoisePredictor Pred>
GuidedTrajectory mdg_sample(const Enc& encoder, const Pred& predictor,
                            const Embedding& ev, const Embedding& ep,
                            const NoiseSchedule& schedule,
                            const GuidanceConfig& config, std::uint64_t seed,
                            Eigen::Index latent_dim) {
  config.validate();
  std::mt19937_64 rng(seed);
  Vector z = detail::gaussian_vector(latent_dim, rng);

  const std::vector<int> ts = ddim_timesteps(schedule, config.ddim_steps);
  const int warmup = config.warmup_steps();
  const bool active =
      config.mode != GuidanceMode::kNone && config.inner_steps > 0;
  LatentOptimizer opt(config);

  GuidedTrajectory traj;
  traj.steps.reserve(ts.size());
  LatentState s{std::move(z), ts.front()};
  for (std::size_t k = 0; k < ts.size(); ++k) {
    StepRecord rec;
    rec.t = ts[k];
    rec.t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    rec.guided = active && static_cast<int>(k) >= warmup;
    rec.z_before = s.z;

    Vector eps = predictor.predict(s);
    rec.volume_before =
        volume(ev, encoder.encode(predict_clean(s, eps, schedule)), ep);

    if (rec.guided) {
      if (!config.persist_adam_state) opt.reset();
      const Vector eps_fixed = eps;
      for (int n = 0; n < config.inner_steps; ++n) {
        const ObjectiveResult r = objective_and_grad(
            s, eps_fixed, ev, ep, encoder, predictor, schedule, config);
        rec.inner_objectives.push_back(r.objective);
        s.z = opt.step(s.z, r.gradient);
      }
      eps = predictor.predict(s);
    }

    rec.z_after = s.z;
    const Embedding ea = encoder.encode(predict_clean(s, eps, schedule));
    rec.volume_after = volume(ev, ea, ep);
    rec.dcos_va = cosine_distance(ev, ea);
    rec.dcos_pa = cosine_distance(ep, ea);
    rec.dcos_vp = cosine_distance(ev, ep);
    traj.steps.push_back(std::move(rec));

    s = ddim_step(s, eps, traj.steps.back().t_prev, schedule);
  }

  traj.final_latent = s.z;
  traj.final_audio = encoder.encode(s.z);
  traj.final_volume = volume(ev, traj.final_audio, ep);
  return traj;
}

/// World-level convenience: conditions the oracle on `concept` with the
/// configured CFG scale and guides against the given video/text embeddings.
inline GuidedTrajectory mdg_sample(const SyntheticWorld& world,
                                   std::size_t concept_id, const Embedding& ev,
                                   const Embedding& ep,
                                   const NoiseSchedule& schedule,
                                   const GuidanceConfig& config,
                                   std::uint64_t seed) {
  world.check_concept(concept_id);
  OracleCfgDenoiser predictor(world.prior(), schedule, concept_id,
                              config.cfg_scale);
  return mdg_sample(world.audio_encoder(), predictor, ev, ep, schedule, config,
                    seed, world.latent_dim());
}

}  // namespace mdg

#endif  // MDG_GUIDANCE_HPP_
