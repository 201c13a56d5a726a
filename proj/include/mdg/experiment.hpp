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

// Experiment driver behind the `mdg` command-line tool: configuration,
// world generation, batched guided sampling with a deterministic collector,
// result files, and the cross-run evaluation report.
//
// Result directory layout (written by `sample`):
//   world.json         the world the samples were drawn in
//   results.csv        one row per sample (schema in kResultsCsvHeader)
//   trajectories.json  per-sample conditions, final latent/embedding, step trace
//   summary.json       config, hashes and mean metrics
//
// Evaluation directory layout (written by `eval`):
//   report.json, report.csv, comparisons.csv, v_trace.csv

#ifndef MDG_EXPERIMENT_HPP_
#define MDG_EXPERIMENT_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mdg/contrastive.hpp"
#include "mdg/diffusion.hpp"
#include "mdg/error.hpp"
#include "mdg/eval.hpp"
#include "mdg/geometry.hpp"
#include "mdg/guidance.hpp"
#include "mdg/io.hpp"
#include "mdg/log.hpp"
#include "mdg/world.hpp"

namespace mdg {

namespace fs = std::filesystem;

inline constexpr std::string_view kResultsCsvHeader =
    "sample_id,mode,V,dcos_tv,dcos_ta,dcos_va,dcos,concept,retrieved,"
    "config_hash,world_hash";

struct ScheduleConfig {
  int grid_steps = kDefaultGridSteps;
  int ddim_steps = kDefaultDdimSteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
};

struct RunConfig {
  int num_samples = 200;
  std::uint64_t seed = 0;
  int jobs = 1;  // runtime only; never changes outputs
};

struct ExperimentConfig {
  WorldOptions world;
  ScheduleConfig schedule;
  GuidanceConfig guidance;
  RunConfig run;

  GuidanceConfig guidance_config() const {
    GuidanceConfig g = guidance;
    g.ddim_steps = schedule.ddim_steps;
    return g;
  }

  NoiseSchedule make_noise_schedule() const {
    return make_schedule(schedule.grid_steps, schedule.beta_start,
                         schedule.beta_end);
  }

  void validate() const {
    if (run.num_samples < 1) {
      throw Error(ErrorCode::kConfigInvalid, "num_samples must be >= 1");
    }
    if (run.jobs < 1) throw Error(ErrorCode::kConfigInvalid, "jobs must be >= 1");
    if (schedule.ddim_steps < 1 || schedule.ddim_steps > schedule.grid_steps) {
      throw Error(ErrorCode::kConfigInvalid,
                  "ddim_steps must lie in [1, grid_steps]");
    }
    if (world.concepts < 2 || world.embed_dim < 3 || world.latent_dim < 2) {
      throw Error(ErrorCode::kConfigInvalid,
                  "world needs J >= 2, D >= 3, L >= 2");
    }
    make_noise_schedule();
    guidance_config().validate();
  }
};

inline json to_json(const GuidanceConfig& g) {
  return json{{"mode", std::string(to_string(g.mode))},
              {"eta", g.eta},
              {"inner_steps", g.inner_steps},
              {"warmup_fraction", g.warmup_fraction},
              {"optimizer", std::string(to_string(g.optimizer))},
              {"adam_beta1", g.adam_beta1},
              {"adam_beta2", g.adam_beta2},
              {"adam_eps", g.adam_eps},
              {"persist_adam_state", g.persist_adam_state},
              {"detach_denoiser", g.detach_denoiser},
              {"v_floor", g.v_floor},
              {"cfg_scale", g.cfg_scale}};
}

/// Canonical form. `jobs` is omitted so it never enters the config hash.
inline json to_json(const ExperimentConfig& c) {
  return json{{"world", to_json(c.world)},
              {"schedule", json{{"grid_steps", c.schedule.grid_steps},
                                {"ddim_steps", c.schedule.ddim_steps},
                                {"beta_start", c.schedule.beta_start},
                                {"beta_end", c.schedule.beta_end}}},
              {"guidance", to_json(c.guidance)},
              {"run", json{{"num_samples", c.run.num_samples},
                           {"seed", c.run.seed}}}};
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) {
      throw Error(ErrorCode::kConfigParse, "config must be a JSON object");
    }
    for (const auto& [section, body] : j.items()) {
      if (!body.is_object()) {
        throw Error(ErrorCode::kConfigParse,
                    "config section '" + section + "' must be an object");
      }
      if (section == "world") {
        c.world = world_options_from_json(body, c.world);
      } else if (section == "schedule") {
        for (const auto& [k, v] : body.items()) {
          if (k == "grid_steps") c.schedule.grid_steps = v.get<int>();
          else if (k == "ddim_steps") c.schedule.ddim_steps = v.get<int>();
          else if (k == "beta_start") c.schedule.beta_start = v.get<double>();
          else if (k == "beta_end") c.schedule.beta_end = v.get<double>();
          else throw Error(ErrorCode::kConfigParse, "unknown schedule key '" + k + "'");
        }
      } else if (section == "guidance") {
        auto& g = c.guidance;
        for (const auto& [k, v] : body.items()) {
          if (k == "mode") g.mode = parse_mode(v.get<std::string>());
          else if (k == "eta") g.eta = v.get<double>();
          else if (k == "inner_steps") g.inner_steps = v.get<int>();
          else if (k == "warmup_fraction") g.warmup_fraction = v.get<double>();
          else if (k == "optimizer") g.optimizer = parse_optimizer(v.get<std::string>());
          else if (k == "adam_beta1") g.adam_beta1 = v.get<double>();
          else if (k == "adam_beta2") g.adam_beta2 = v.get<double>();
          else if (k == "adam_eps") g.adam_eps = v.get<double>();
          else if (k == "persist_adam_state") g.persist_adam_state = v.get<bool>();
          else if (k == "detach_denoiser") g.detach_denoiser = v.get<bool>();
          else if (k == "v_floor") g.v_floor = v.get<double>();
          else if (k == "cfg_scale") g.cfg_scale = v.get<double>();
          else throw Error(ErrorCode::kConfigParse, "unknown guidance key '" + k + "'");
        }
      } else if (section == "run") {
        for (const auto& [k, v] : body.items()) {
          if (k == "num_samples") c.run.num_samples = v.get<int>();
          else if (k == "seed") c.run.seed = v.get<std::uint64_t>();
          else if (k == "jobs") c.run.jobs = v.get<int>();
          else throw Error(ErrorCode::kConfigParse, "unknown run key '" + k + "'");
        }
      } else {
        throw Error(ErrorCode::kConfigParse, "unknown config section '" + section + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigParse, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Defaults when `path` is empty.
inline ExperimentConfig load_config(const fs::path& path) {
  if (path.empty()) return ExperimentConfig{};
  return config_from_json(read_json(path));
}

inline std::string config_hash(const ExperimentConfig& c) {
  return fnv1a_hex(to_json(c).dump());
}

// ---------------------------------------------------------------------------
// Seeding

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct SampleSeeds {
  std::size_t concept_id = 0;
  std::uint64_t condition = 0;
  std::uint64_t sampler = 0;
  std::uint64_t ground_truth = 0;
};

/// Per-sample streams derived from the base seed; independent of mode and of
/// the number of worker threads.
inline SampleSeeds sample_seeds(std::uint64_t base, std::size_t index,
                                int concepts) {
  auto stream = [&](std::uint64_t k) {
    return splitmix64(splitmix64(base) ^ splitmix64(4 * index + k));
  };
  SampleSeeds s;
  s.concept_id = static_cast<std::size_t>(stream(0) % static_cast<std::uint64_t>(concepts));
  s.condition = stream(1);
  s.sampler = stream(2);
  s.ground_truth = stream(3);
  return s;
}

// ---------------------------------------------------------------------------
// gen-world

struct WorldSummary {
  double max_anchor_cosine = -1.0;
  double min_encoder_cosine = 2.0;
  std::vector<double> matched_volumes;  // V(e^v_c, encode(mu_c), e^p_c)
};

inline WorldSummary summarize_world(const SyntheticWorld& world) {
  WorldSummary s;
  const auto& anchors = world.anchors();
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    for (std::size_t b = a + 1; b < anchors.size(); ++b) {
      s.max_anchor_cosine = std::max(s.max_anchor_cosine, anchors[a].dot(anchors[b]));
    }
  }
  for (std::size_t c = 0; c < anchors.size(); ++c) {
    const Embedding ea = encode_audio(world, world.prior().component(c).mean);
    s.min_encoder_cosine = std::min(s.min_encoder_cosine, ea.dot(anchors[c]));
    const ConditionPair cond = emit_condition(world, c, splitmix64(c));
    s.matched_volumes.push_back(volume(cond.video, ea, cond.text));
  }
  return s;
}

inline SyntheticWorld cmd_gen_world(const ExperimentConfig& config,
                                    const fs::path& out_path) {
  const SyntheticWorld world = make_world(config.world);
  write_json(out_path, world_to_json(world));
  const WorldSummary s = summarize_world(world);
  std::ostringstream msg;
  msg << "world J=" << world.concepts() << " D=" << world.embed_dim()
      << " L=" << world.latent_dim() << " hash=" << world_hash(world)
      << " max anchor cosine=" << format_double(s.max_anchor_cosine)
      << " min encoder cosine=" << format_double(s.min_encoder_cosine);
  log::info(msg.str());
  for (std::size_t c = 0; c < s.matched_volumes.size(); ++c) {
    log::info("concept " + std::to_string(c) + " matched volume " +
              format_double(s.matched_volumes[c]));
  }
  return world;
}

// ---------------------------------------------------------------------------
// sample

struct SampleResult {
  int sample_id = 0;
  SampleSeeds seeds;
  ConditionPair condition;
  GuidedTrajectory trajectory;
  SemanticMetrics metrics;
  std::size_t retrieved = 0;
};

inline SampleResult run_one_sample(const SyntheticWorld& world,
                                   const NoiseSchedule& schedule,
                                   const GuidanceConfig& guidance,
                                   std::uint64_t base_seed, int index) {
  SampleResult r;
  r.sample_id = index;
  r.seeds = sample_seeds(base_seed, static_cast<std::size_t>(index),
                         world.concepts());
  r.condition = emit_condition(world, r.seeds.concept_id, r.seeds.condition);
  r.trajectory = mdg_sample(world, r.seeds.concept_id, r.condition.video,
                            r.condition.text, schedule, guidance,
                            r.seeds.sampler);
  r.metrics = semantic_metrics(
      {r.condition.video, r.trajectory.final_audio, r.condition.text});
  r.retrieved = nearest_anchor(world.anchors(), r.trajectory.final_audio);
  return r;
}

/// Runs every sample on a pool of `config.run.jobs` workers. Results are
/// collected by index, so the output order never depends on scheduling.
inline std::vector<SampleResult> run_samples(const SyntheticWorld& world,
                                             const ExperimentConfig& config) {
  config.validate();
  const NoiseSchedule schedule = config.make_noise_schedule();
  const GuidanceConfig guidance = config.guidance_config();
  const int n = config.run.num_samples;
  std::vector<SampleResult> results(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(config.run.jobs));
  auto worker = [&](int w) {
    try {
      for (int i = next++; i < n; i = next++) {
        results[static_cast<std::size_t>(i)] =
            run_one_sample(world, schedule, guidance, config.run.seed, i);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
      next = n;
    }
  };
  if (config.run.jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < config.run.jobs; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

inline std::string results_csv(const std::vector<SampleResult>& results,
                               std::string_view mode, const std::string& chash,
                               const std::string& whash) {
  std::string out(kResultsCsvHeader);
  out += '\n';
  for (const auto& r : results) {
    const auto& m = r.metrics;
    out += std::to_string(r.sample_id) + ',' + std::string(mode) + ',' +
           format_double(m.volume) + ',' + format_double(m.dcos_tv) + ',' +
           format_double(m.dcos_ta) + ',' + format_double(m.dcos_va) + ',' +
           format_double(m.dcos) + ',' + std::to_string(r.seeds.concept_id) +
           ',' + std::to_string(r.retrieved) + ',' + chash + ',' + whash + '\n';
  }
  return out;
}

inline json trajectory_to_json(const SampleResult& r) {
  json steps = json::array();
  for (const auto& s : r.trajectory.steps) {
    steps.push_back(json{{"t", s.t},
                         {"t_prev", s.t_prev},
                         {"guided", s.guided},
                         {"z_before", to_json(s.z_before)},
                         {"z_after", to_json(s.z_after)},
                         {"V_before", s.volume_before},
                         {"V_after", s.volume_after},
                         {"dcos_va", s.dcos_va},
                         {"dcos_pa", s.dcos_pa},
                         {"dcos_vp", s.dcos_vp},
                         {"inner_objectives", s.inner_objectives}});
  }
  return json{{"sample_id", r.sample_id},
              {"concept", r.seeds.concept_id},
              {"condition_seed", r.seeds.condition},
              {"sampler_seed", r.seeds.sampler},
              {"ground_truth_seed", r.seeds.ground_truth},
              {"video", to_json(r.condition.video.values())},
              {"text", to_json(r.condition.text.values())},
              {"final_latent", to_json(r.trajectory.final_latent)},
              {"final_embedding", to_json(r.trajectory.final_audio.values())},
              {"final_V", r.trajectory.final_volume},
              {"retrieved", r.retrieved},
              {"steps", std::move(steps)}};
}

inline json cmd_sample(const SyntheticWorld& world,
                       const ExperimentConfig& config, const fs::path& out_dir) {
  const std::string chash = config_hash(config);
  const std::string whash = world_hash(world);
  if (world.concepts() != config.world.concepts ||
      world.embed_dim() != config.world.embed_dim ||
      world.latent_dim() != config.world.latent_dim) {
    log::info("world file dimensions override the config's world section");
  }
  log::info("sampling " + std::to_string(config.run.num_samples) + " samples, mode=" +
            std::string(to_string(config.guidance.mode)) + ", jobs=" +
            std::to_string(config.run.jobs));
  const std::vector<SampleResult> results = run_samples(world, config);

  const std::string mode(to_string(config.guidance.mode));
  std::vector<Triplet> triplets;
  std::vector<LabeledEmbedding> labeled;
  for (const auto& r : results) {
    triplets.push_back({r.condition.video, r.trajectory.final_audio, r.condition.text});
    labeled.emplace_back(r.trajectory.final_audio, r.seeds.concept_id);
  }
  const SemanticReport report = semantic_report(triplets);

  json samples = json::array();
  for (const auto& r : results) samples.push_back(trajectory_to_json(r));
  json summary{{"config_hash", chash},
               {"world_hash", whash},
               {"mode", mode},
               {"config", to_json(config)},
               {"num_samples", config.run.num_samples},
               {"mean_V", report.mean.volume},
               {"mean_dcos", report.mean.dcos},
               {"mean_dcos_tv", report.mean.dcos_tv},
               {"mean_dcos_ta", report.mean.dcos_ta},
               {"mean_dcos_va", report.mean.dcos_va},
               {"retrieval_accuracy", retrieval_accuracy(world, labeled)}};

  fs::create_directories(out_dir);
  write_json(out_dir / "world.json", world_to_json(world));
  write_file(out_dir / "results.csv", results_csv(results, mode, chash, whash));
  write_json(out_dir / "trajectories.json",
             json{{"config_hash", chash},
                  {"world_hash", whash},
                  {"mode", mode},
                  {"samples", std::move(samples)}});
  write_json(out_dir / "summary.json", summary);
  log::info("mean V=" + format_double(report.mean.volume) +
            " mean dcos=" + format_double(report.mean.dcos));
  return summary;
}

// ---------------------------------------------------------------------------
// eval

struct LoadedSample {
  int sample_id = 0;
  std::size_t concept_id = 0;
  std::uint64_t ground_truth_seed = 0;
  Embedding video;
  Embedding text;
  Embedding audio;
  std::vector<double> step_volumes;  // V after guidance, per DDIM step
};

struct LoadedRun {
  std::string label;
  std::string mode;
  std::string config_hash;
  std::string world_hash;
  SyntheticWorld world;
  std::vector<LoadedSample> samples;
};

inline LoadedRun load_run(const fs::path& dir) {
  LoadedRun run;
  run.label = dir.lexically_normal().string();
  const json summary = read_json(dir / "summary.json");
  const json traj = read_json(dir / "trajectories.json");
  try {
    run.mode = summary.at("mode").get<std::string>();
    run.config_hash = summary.at("config_hash").get<std::string>();
    run.world_hash = summary.at("world_hash").get<std::string>();
    run.world = load_world(dir / "world.json");
    if (world_hash(run.world) != run.world_hash ||
        traj.at("world_hash").get<std::string>() != run.world_hash) {
      throw Error(ErrorCode::kSchemaMismatch,
                  dir.string() + ": world.json does not match the recorded world hash");
    }
    for (const auto& s : traj.at("samples")) {
      LoadedSample ls;
      ls.sample_id = s.at("sample_id").get<int>();
      ls.concept_id = s.at("concept").get<std::size_t>();
      ls.ground_truth_seed = s.at("ground_truth_seed").get<std::uint64_t>();
      ls.video = Embedding::from_unit(vector_from_json(s.at("video")));
      ls.text = Embedding::from_unit(vector_from_json(s.at("text")));
      ls.audio = Embedding::from_unit(vector_from_json(s.at("final_embedding")));
      for (const auto& st : s.at("steps")) {
        ls.step_volumes.push_back(st.at("V_after").get<double>());
      }
      run.samples.push_back(std::move(ls));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaMismatch, dir.string() + ": " + e.what());
  }
  if (run.samples.empty()) {
    throw Error(ErrorCode::kEmptyInput, dir.string() + " holds no samples");
  }
  return run;
}

struct RunEvaluation {
  std::string label;
  std::string mode;
  std::string config_hash;
  SemanticReport semantic;
  double frechet = 0.0;
  double retrieval = 0.0;
};

/// Ground-truth audio embeddings: one clean latent per sample drawn from the
/// sample's concept component with its recorded seed, then encoded.
inline std::vector<Vector> ground_truth_embeddings(const LoadedRun& run) {
  std::vector<Vector> out;
  out.reserve(run.samples.size());
  for (const auto& s : run.samples) {
    std::mt19937_64 rng(s.ground_truth_seed);
    out.push_back(
        encode_audio(run.world, sample_clean_latent(run.world, s.concept_id, rng))
            .values());
  }
  return out;
}

inline RunEvaluation evaluate_run(const LoadedRun& run) {
  RunEvaluation e;
  e.label = run.label;
  e.mode = run.mode;
  e.config_hash = run.config_hash;
  std::vector<Triplet> triplets;
  std::vector<LabeledEmbedding> labeled;
  std::vector<Vector> generated;
  for (const auto& s : run.samples) {
    triplets.push_back({s.video, s.audio, s.text});
    labeled.emplace_back(s.audio, s.concept_id);
    generated.push_back(s.audio.values());
  }
  e.semantic = semantic_report(triplets);
  e.retrieval = retrieval_accuracy(run.world, labeled);
  e.frechet = frechet_distance(generated, ground_truth_embeddings(run));
  return e;
}

struct RunComparison {
  std::string reference;
  std::string candidate;
  double delta_volume = 0.0;  // candidate - reference
  double delta_dcos = 0.0;
  double delta_dcos_tv = 0.0;
  double delta_dcos_ta = 0.0;
  double delta_dcos_va = 0.0;
  double delta_frechet = 0.0;
  double delta_retrieval = 0.0;
  bool paired = false;
  SignTest sign_volume;
  SignTest sign_dcos;
};

inline bool same_draws(const LoadedRun& a, const LoadedRun& b) {
  if (a.samples.size() != b.samples.size()) return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const auto& x = a.samples[i];
    const auto& y = b.samples[i];
    if (x.sample_id != y.sample_id || x.concept_id != y.concept_id ||
        x.ground_truth_seed != y.ground_truth_seed) {
      return false;
    }
  }
  return true;
}

inline RunComparison compare_runs(const LoadedRun& ref_run,
                                  const RunEvaluation& ref,
                                  const LoadedRun& cand_run,
                                  const RunEvaluation& cand) {
  RunComparison c;
  c.reference = ref.label;
  c.candidate = cand.label;
  c.delta_volume = cand.semantic.mean.volume - ref.semantic.mean.volume;
  c.delta_dcos = cand.semantic.mean.dcos - ref.semantic.mean.dcos;
  c.delta_dcos_tv = cand.semantic.mean.dcos_tv - ref.semantic.mean.dcos_tv;
  c.delta_dcos_ta = cand.semantic.mean.dcos_ta - ref.semantic.mean.dcos_ta;
  c.delta_dcos_va = cand.semantic.mean.dcos_va - ref.semantic.mean.dcos_va;
  c.delta_frechet = cand.frechet - ref.frechet;
  c.delta_retrieval = cand.retrieval - ref.retrieval;
  c.paired = same_draws(ref_run, cand_run);
  if (c.paired) {
    std::vector<double> rv, cv, rd, cd;
    for (const auto& s : ref.semantic.samples) {
      rv.push_back(s.volume);
      rd.push_back(s.dcos);
    }
    for (const auto& s : cand.semantic.samples) {
      cv.push_back(s.volume);
      cd.push_back(s.dcos);
    }
    c.sign_volume = sign_test(cv, rv);
    c.sign_dcos = sign_test(cd, rd);
  }
  return c;
}

inline json to_json(const SignTest& s) {
  return json{{"n_less", s.n_less},
              {"n_greater", s.n_greater},
              {"n_ties", s.n_ties},
              {"p_less", s.p_less},
              {"p_two_sided", s.p_two_sided}};
}

struct EvalReport {
  std::string world_hash;
  std::vector<RunEvaluation> runs;
  std::vector<RunComparison> comparisons;  // every run against the first
  json document;
};

/// Compares result directories; the first directory is the reference for the
/// paired sign tests. Throws SchemaMismatch when the runs disagree on the
/// world.
inline EvalReport cmd_eval(const std::vector<fs::path>& dirs,
                           const fs::path& out_dir) {
  if (dirs.empty()) {
    throw Error(ErrorCode::kEmptyInput, "eval needs at least one results directory");
  }
  std::vector<LoadedRun> runs;
  for (const auto& d : dirs) runs.push_back(load_run(d));
  for (const auto& r : runs) {
    if (r.world_hash != runs.front().world_hash) {
      throw Error(ErrorCode::kSchemaMismatch,
                  "world hash " + r.world_hash + " of " + r.label +
                      " differs from " + runs.front().world_hash + " of " +
                      runs.front().label + "; refusing cross-world comparison");
    }
  }

  EvalReport rep;
  rep.world_hash = runs.front().world_hash;
  for (const auto& r : runs) rep.runs.push_back(evaluate_run(r));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    rep.comparisons.push_back(
        compare_runs(runs.front(), rep.runs.front(), runs[i], rep.runs[i]));
  }

  json jruns = json::array();
  std::string csv =
      "run,mode,config_hash,num_samples,mean_V,mean_dcos,mean_dcos_tv,"
      "mean_dcos_ta,mean_dcos_va,frechet,retrieval_accuracy\n";
  for (const auto& e : rep.runs) {
    const auto& m = e.semantic.mean;
    jruns.push_back(json{{"run", e.label},
                         {"mode", e.mode},
                         {"config_hash", e.config_hash},
                         {"num_samples", e.semantic.samples.size()},
                         {"mean_V", m.volume},
                         {"mean_dcos", m.dcos},
                         {"mean_dcos_tv", m.dcos_tv},
                         {"mean_dcos_ta", m.dcos_ta},
                         {"mean_dcos_va", m.dcos_va},
                         {"frechet", e.frechet},
                         {"retrieval_accuracy", e.retrieval}});
    csv += e.label + ',' + e.mode + ',' + e.config_hash + ',' +
           std::to_string(e.semantic.samples.size()) + ',' +
           format_double(m.volume) + ',' + format_double(m.dcos) + ',' +
           format_double(m.dcos_tv) + ',' + format_double(m.dcos_ta) + ',' +
           format_double(m.dcos_va) + ',' + format_double(e.frechet) + ',' +
           format_double(e.retrieval) + '\n';
  }

  json jcomp = json::array();
  std::string ccsv =
      "reference,candidate,delta_V,delta_dcos,delta_dcos_tv,delta_dcos_ta,"
      "delta_dcos_va,delta_frechet,delta_retrieval,paired,sign_V_p_less,"
      "sign_dcos_p_less\n";
  for (const auto& c : rep.comparisons) {
    json jc{{"reference", c.reference},
            {"candidate", c.candidate},
            {"delta_V", c.delta_volume},
            {"delta_dcos", c.delta_dcos},
            {"delta_dcos_tv", c.delta_dcos_tv},
            {"delta_dcos_ta", c.delta_dcos_ta},
            {"delta_dcos_va", c.delta_dcos_va},
            {"delta_frechet", c.delta_frechet},
            {"delta_retrieval", c.delta_retrieval},
            {"paired", c.paired}};
    if (c.paired) {
      jc["sign_test_V"] = to_json(c.sign_volume);
      jc["sign_test_dcos"] = to_json(c.sign_dcos);
    }
    jcomp.push_back(std::move(jc));
    ccsv += c.reference + ',' + c.candidate + ',' + format_double(c.delta_volume) +
            ',' + format_double(c.delta_dcos) + ',' + format_double(c.delta_dcos_tv) +
            ',' + format_double(c.delta_dcos_ta) + ',' +
            format_double(c.delta_dcos_va) + ',' + format_double(c.delta_frechet) +
            ',' + format_double(c.delta_retrieval) + ',' +
            (c.paired ? "true" : "false") + ',' +
            (c.paired ? format_double(c.sign_volume.p_less) : "") + ',' +
            (c.paired ? format_double(c.sign_dcos.p_less) : "") + '\n';
  }

  // Tidy per-step trace for plotting: mean V after guidance at each step.
  std::string trace = "step,run,mode,mean_V\n";
  for (const auto& r : runs) {
    const std::size_t steps = r.samples.front().step_volumes.size();
    for (std::size_t k = 0; k < steps; ++k) {
      double acc = 0.0;
      for (const auto& s : r.samples) acc += s.step_volumes.at(k);
      trace += std::to_string(k) + ',' + r.label + ',' + r.mode + ',' +
               format_double(acc / static_cast<double>(r.samples.size())) + '\n';
    }
  }

  rep.document = json{{"world_hash", rep.world_hash},
                      {"runs", std::move(jruns)},
                      {"comparisons", std::move(jcomp)}};
  fs::create_directories(out_dir);
  write_json(out_dir / "report.json", rep.document);
  write_file(out_dir / "report.csv", csv);
  write_file(out_dir / "comparisons.csv", ccsv);
  write_file(out_dir / "v_trace.csv", trace);
  return rep;
}

// ---------------------------------------------------------------------------
// selftest

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant sweep over the library; used by `mdg selftest`.
inline std::vector<SelftestCheck> run_selftest(std::uint64_t seed = 7) {
  std::vector<SelftestCheck> checks;
  std::mt19937_64 rng(seed);
  auto rand_unit = [&](Eigen::Index d) {
    return normalize(detail::gaussian_vector(d, rng));
  };

  {
    bool ok = true;
    double worst = 0.0;
    for (int i = 0; i < 2000 && ok; ++i) {
      const Embedding a = rand_unit(16), b = rand_unit(16), c = rand_unit(16);
      const double v = volume(a, b, c);
      ok = v >= 0.0 && v <= 1.0 + 1e-12 &&
           std::abs(v - volume(c, a, b)) < 1e-12 &&
           std::abs(v - volume(b, a, c)) < 1e-12;
      worst = std::max(worst, v);
    }
    checks.push_back({"volume bounds and permutation invariance", ok,
                      "max V " + format_double(worst)});
  }
  {
    double worst = 0.0;
    int tested = 0;
    while (tested < 50) {
      const Embedding a = rand_unit(16), b = rand_unit(16), c = rand_unit(16);
      const TripletGram g = gram(a, b, c);
      if (g.volume < 0.05) continue;
      ++tested;
      const Vector grad = volume_grad(g, Modality::kAudio);
      Vector fd(16);
      const double h = 1e-5;
      for (int k = 0; k < 16; ++k) {
        Vector up = b.values(), dn = b.values();
        up[k] += h;
        dn[k] -= h;
        fd[k] = (gram_of_columns(a.values(), up, c.values()).volume -
                 gram_of_columns(a.values(), dn, c.values()).volume) /
                (2 * h);
      }
      worst = std::max(worst, (grad - fd).norm() / std::max(fd.norm(), 1e-8));
    }
    checks.push_back({"volume gradient vs central differences", worst <= 1e-4,
                      "max rel err " + format_double(worst)});
  }
  {
    const NoiseSchedule s = make_schedule();
    double worst = 0.0;
    for (int t = 1; t <= s.steps(); t += 37) {
      const Vector z0 = detail::gaussian_vector(8, rng);
      const Vector eps = detail::gaussian_vector(8, rng);
      const LatentState zt = forward_sample(z0, t, eps, s);
      worst = std::max(worst, (predict_clean(zt, eps, s) - z0).cwiseAbs().maxCoeff());
    }
    checks.push_back({"clean prediction inverts the forward marginal",
                      worst <= 1e-10, "max abs err " + format_double(worst)});
  }
  {
    TripletBatch batch;
    const Embedding e = rand_unit(16);
    for (int i = 0; i < 5; ++i) batch.items.push_back({e, e, e});
    const double err = std::max(std::abs(loss_av2t(batch) - std::log(5.0)),
                                std::abs(loss_t2av(batch) - std::log(5.0)));
    checks.push_back({"uniform batch InfoNCE equals ln B", err <= 1e-9,
                      "abs err " + format_double(err)});
  }
  {
    const SyntheticWorld w = make_world(WorldOptions{});
    const WorldSummary s = summarize_world(w);
    const bool ok = s.max_anchor_cosine <= w.options().anchor_cos_cap &&
                    s.min_encoder_cosine >= kEncoderAnchorCosine;
    checks.push_back({"default world invariants", ok,
                      "max anchor cos " + format_double(s.max_anchor_cosine) +
                          ", min encoder cos " +
                          format_double(s.min_encoder_cosine)});
  }
  return checks;
}

}  // namespace mdg

#endif  // MDG_EXPERIMENT_HPP_
