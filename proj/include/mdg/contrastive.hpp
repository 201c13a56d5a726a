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

// InfoNCE losses over batches of (video, audio, text) triplets. The volume
// variants use -V/tau as the logit; the pairwise baseline uses cos/tau.

#ifndef MDG_CONTRASTIVE_HPP_
#define MDG_CONTRASTIVE_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "mdg/error.hpp"
#include "mdg/geometry.hpp"

namespace mdg {

inline constexpr double kDefaultTemperature = 0.07;

struct Triplet {
  Embedding video;
  Embedding audio;
  Embedding text;

  const Embedding& get(Modality m) const {
    switch (m) {
      case Modality::kVideo: return video;
      case Modality::kAudio: return audio;
      case Modality::kText: return text;
    }
    return video;
  }
};

struct TripletBatch {
  std::vector<Triplet> items;
  double temperature = kDefaultTemperature;

  std::size_t size() const noexcept { return items.size(); }
};

using ModalityPair = std::pair<Modality, Modality>;

namespace detail {

inline void validate(const TripletBatch& batch) {
  if (batch.items.empty()) {
    throw Error(ErrorCode::kEmptyBatch, "contrastive loss of an empty batch");
  }
  if (batch.items.size() < 2) {
    throw Error(ErrorCode::kEmptyBatch,
                "contrastive loss needs at least one negative (B >= 2)");
  }
  if (!(batch.temperature > 0.0) || !std::isfinite(batch.temperature)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  }
}

inline double log_sum_exp(std::span<const double> xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

// Mean over rows of -log softmax(logits(i, .))[i].
template <typename LogitFn>
double infonce(std::size_t b, LogitFn&& logit) {
  std::vector<double> row(b);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) row[j] = logit(i, j);
    total += log_sum_exp(row) - row[i];
  }
  return std::max(total / static_cast<double>(b), 0.0);
}

}  // namespace detail

/// Audio-video to text: row i contrasts (v_i, a_i, p_i) against (v_i, a_i, p_j).
inline double loss_av2t(const TripletBatch& batch) {
  detail::validate(batch);
  const auto& it = batch.items;
  const double tau = batch.temperature;
  return detail::infonce(it.size(), [&](std::size_t i, std::size_t j) {
    return -volume(it[i].video, it[i].audio, it[j].text) / tau;
  });
}

/// Text to audio-video: row i contrasts (v_i, a_i, p_i) against (v_j, a_j, p_i).
inline double loss_t2av(const TripletBatch& batch) {
  detail::validate(batch);
  const auto& it = batch.items;
  const double tau = batch.temperature;
  return detail::infonce(it.size(), [&](std::size_t i, std::size_t j) {
    return -volume(it[j].video, it[j].audio, it[i].text) / tau;
  });
}

/// Standard cosine InfoNCE between two modalities: row i scores the first
/// modality of item i against the second modality of every item j.
inline double loss_pairwise_infonce(const TripletBatch& batch,
                                    ModalityPair pair) {
  detail::validate(batch);
  if (pair.first == pair.second) {
    throw Error(ErrorCode::kInvalidArgument,
                "pairwise InfoNCE needs two distinct modalities");
  }
  const auto& it = batch.items;
  const double tau = batch.temperature;
  return detail::infonce(it.size(), [&](std::size_t i, std::size_t j) {
    return it[i].get(pair.first).dot(it[j].get(pair.second)) / tau;
  });
}

}  // namespace mdg

#endif  // MDG_CONTRASTIVE_HPP_
