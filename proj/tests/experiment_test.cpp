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

#include "mdg/experiment.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <charconv>
#include <cstdlib>
#include <random>
#include <sstream>

namespace mdg {
namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("mdg_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

ExperimentConfig small_config(GuidanceMode mode, int n = 8) {
  ExperimentConfig c;
  c.guidance.mode = mode;
  c.run.num_samples = n;
  c.run.seed = 3;
  return c;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

TEST(Io, FnvAndDoubleFormatting) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 1000; ++i) {
    const double x = nd(rng) * std::pow(10.0, i % 20 - 10);
    const std::string s = format_double(x);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    ASSERT_EQ(back, x) << s;
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Io, WorldRoundTripIsBitExact) {
  TempDir tmp;
  WorldOptions o;
  o.seed = 99;
  const SyntheticWorld w = make_world(o);
  write_json(tmp / "w.json", world_to_json(w));
  const SyntheticWorld back = load_world(tmp / "w.json");
  EXPECT_EQ(world_hash(back), world_hash(w));
  EXPECT_EQ(world_to_json(back).dump(), world_to_json(w).dump());
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(back.anchor(c), w.anchor(c));
  EXPECT_EQ(back.audio_encoder().weight(), w.audio_encoder().weight());
  EXPECT_EQ(back.prior().component(4).mean, w.prior().component(4).mean);
  EXPECT_EQ(back.options().seed, 99u);
  EXPECT_NE(world_hash(make_world(WorldOptions{})), world_hash(w));
}

TEST(Io, WorldSchemaErrors) {
  TempDir tmp;
  json j = world_to_json(make_world(WorldOptions{}));
  j["format"] = "something-else";
  write_json(tmp / "bad.json", j);
  try {
    load_world(tmp / "bad.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaMismatch);
  }
  write_file(tmp / "garbage.json", "{ not json");
  EXPECT_THROW(load_world(tmp / "garbage.json"), Error);
  EXPECT_THROW(load_world(tmp / "missing.json"), Error);
}

TEST(Config, DefaultsAndStrictParsing) {
  const ExperimentConfig d = config_from_json(json::object());
  EXPECT_EQ(d.run.num_samples, 200);
  EXPECT_EQ(d.guidance.mode, GuidanceMode::kVolume);
  EXPECT_DOUBLE_EQ(d.guidance.eta, 0.1);
  EXPECT_EQ(d.schedule.ddim_steps, 30);
  EXPECT_EQ(config_hash(d), config_hash(ExperimentConfig{}));

  const ExperimentConfig c = config_from_json(
      json::parse(R"({"guidance": {"mode": "pairwise", "eta": 0.05},
                      "world": {"sigma_mod": 0.2}, "run": {"jobs": 4}})"));
  EXPECT_EQ(c.guidance.mode, GuidanceMode::kPairwise);
  EXPECT_DOUBLE_EQ(c.world.sigma_mod, 0.2);
  EXPECT_EQ(c.run.jobs, 4);
  // jobs never enters the hash
  ExperimentConfig c1 = c;
  c1.run.jobs = 1;
  EXPECT_EQ(config_hash(c), config_hash(c1));
  EXPECT_NE(config_hash(c), config_hash(d));

  auto code_of = [](const char* text) {
    try {
      config_from_json(json::parse(text));
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIoError;
  };
  EXPECT_EQ(code_of(R"({"guidance": {"etta": 0.1}})"), ErrorCode::kConfigParse);
  EXPECT_EQ(code_of(R"({"extra": {}})"), ErrorCode::kConfigParse);
  EXPECT_EQ(code_of(R"({"guidance": {"eta": "fast"}})"), ErrorCode::kConfigParse);
  EXPECT_EQ(code_of(R"([1, 2])"), ErrorCode::kConfigParse);
  EXPECT_EQ(code_of(R"({"guidance": {"mode": "cosine"}})"), ErrorCode::kConfigInvalid);
  EXPECT_EQ(code_of(R"({"run": {"num_samples": 0}})"), ErrorCode::kConfigInvalid);
  EXPECT_EQ(code_of(R"({"schedule": {"ddim_steps": 2000}})"), ErrorCode::kConfigInvalid);
  EXPECT_EQ(code_of(R"({"guidance": {"eta": -1}})"), ErrorCode::kConfigInvalid);
  EXPECT_EQ(exit_code_for(ErrorCode::kConfigParse), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kConfigInvalid), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kSchemaMismatch), 4);
  EXPECT_EQ(exit_code_for(ErrorCode::kNumericalError), 3);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = small_config(GuidanceMode::kPairwise);
  c.guidance.optimizer = OptimizerKind::kGd;
  c.guidance.detach_denoiser = false;
  c.world.seed = 12345678901234ULL;
  const ExperimentConfig back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(Seeds, StreamsAreStableAndDistinct) {
  const SampleSeeds a = sample_seeds(0, 5, 8), b = sample_seeds(0, 5, 8);
  EXPECT_EQ(a.sampler, b.sampler);
  EXPECT_EQ(a.concept_id, b.concept_id);
  EXPECT_NE(a.sampler, a.condition);
  EXPECT_NE(a.sampler, a.ground_truth);
  EXPECT_NE(sample_seeds(0, 6, 8).sampler, a.sampler);
  EXPECT_NE(sample_seeds(1, 5, 8).sampler, a.sampler);
  std::vector<int> counts(8, 0);
  for (std::size_t i = 0; i < 8000; ++i) ++counts[sample_seeds(0, i, 8).concept_id];
  for (int n : counts) EXPECT_NEAR(n, 1000, 150);
}

TEST(Sample, ThreadCountNeverChangesResults) {
  const SyntheticWorld w = make_world(WorldOptions{});
  ExperimentConfig c = small_config(GuidanceMode::kVolume, 12);
  const auto serial = run_samples(w, c);
  c.run.jobs = 4;
  const auto parallel = run_samples(w, c);
  const std::string h = config_hash(c);
  EXPECT_EQ(results_csv(serial, "volume", h, "w"), results_csv(parallel, "volume", h, "w"));
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].trajectory.final_latent, parallel[i].trajectory.final_latent);
  }
}

TEST(Sample, OutputsAndNoOpEquivalence) {
  TempDir tmp;
  const SyntheticWorld w = make_world(WorldOptions{});
  ExperimentConfig none = small_config(GuidanceMode::kNone);
  ExperimentConfig zero = small_config(GuidanceMode::kVolume);
  zero.guidance.eta = 0.0;
  cmd_sample(w, none, tmp / "none");
  cmd_sample(w, zero, tmp / "zero");
  cmd_sample(w, zero, tmp / "zero_again");
  for (const char* f : {"world.json", "results.csv", "trajectories.json", "summary.json"}) {
    EXPECT_TRUE(fs::exists(tmp / "none" / f)) << f;
  }
  EXPECT_EQ(read_file(tmp / "zero" / "results.csv"),
            read_file(tmp / "zero_again" / "results.csv"));
  EXPECT_EQ(read_file(tmp / "zero" / "trajectories.json"),
            read_file(tmp / "zero_again" / "trajectories.json"));

  // Rows agree on every metric column; mode and config hash name the run.
  const auto a = csv_rows(read_file(tmp / "none" / "results.csv"));
  const auto b = csv_rows(read_file(tmp / "zero" / "results.csv"));
  ASSERT_EQ(a.size(), 9u);
  ASSERT_EQ(b.size(), a.size());
  EXPECT_EQ(a[0], b[0]);
  ASSERT_EQ(a[0].size(), 11u);
  for (std::size_t r = 1; r < a.size(); ++r) {
    for (std::size_t col : {0u, 2u, 3u, 4u, 5u, 6u, 7u, 8u, 10u}) {
      EXPECT_EQ(a[r][col], b[r][col]) << "row " << r << " col " << a[0][col];
    }
    EXPECT_EQ(a[r][1], "none");
    EXPECT_EQ(b[r][1], "volume");
  }
}

TEST(Eval, SelfComparisonAndWorldMismatch) {
  TempDir tmp;
  const SyntheticWorld w = make_world(WorldOptions{});
  cmd_sample(w, small_config(GuidanceMode::kVolume), tmp / "vol");
  const EvalReport self = cmd_eval({tmp / "vol", tmp / "vol"}, tmp / "report");
  ASSERT_EQ(self.comparisons.size(), 2u);
  for (const auto& c : self.comparisons) {
    EXPECT_EQ(c.delta_volume, 0.0);
    EXPECT_EQ(c.delta_dcos, 0.0);
    EXPECT_EQ(c.delta_frechet, 0.0);
    EXPECT_EQ(c.delta_retrieval, 0.0);
    EXPECT_TRUE(c.paired);
    EXPECT_EQ(c.sign_volume.p_less, 1.0);
    EXPECT_EQ(c.sign_volume.p_two_sided, 1.0);
    EXPECT_EQ(c.sign_dcos.p_two_sided, 1.0);
  }
  for (const char* f : {"report.json", "report.csv", "comparisons.csv", "v_trace.csv"}) {
    EXPECT_TRUE(fs::exists(tmp / "report" / f)) << f;
  }
  const auto trace = csv_rows(read_file(tmp / "report" / "v_trace.csv"));
  EXPECT_EQ(trace.size(), 1u + 2u * 30u);

  WorldOptions other;
  other.seed = 7;
  cmd_sample(make_world(other), small_config(GuidanceMode::kNone), tmp / "other");
  try {
    cmd_eval({tmp / "vol", tmp / "other"}, tmp / "bad");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaMismatch);
  }

  // Tampering with the stored world is detected by its hash.
  json wj = read_json(tmp / "vol" / "world.json");
  wj["encoder"]["b"][0] = wj["encoder"]["b"][0].get<double>() + 1e-3;
  write_json(tmp / "vol" / "world.json", wj);
  try {
    load_run(tmp / "vol");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaMismatch);
  }
}

TEST(Selftest, AllChecksPass) {
  for (const auto& c : run_selftest()) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
}

// ---------------------------------------------------------------------------
// Command-line binary

struct RunResult {
  int exit_code = -1;
  std::string err;
};

RunResult run_cli(const std::string& args, const TempDir& tmp) {
  const fs::path err = tmp / "stderr.txt";
  const std::string cmd = std::string("MDG_LOG=error '") + MDG_CLI_PATH + "' " + args +
                          " >/dev/null 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = fs::exists(err) ? read_file(err) : "";
  return r;
}

TEST(Cli, GenWorldIsByteIdentical) {
  TempDir tmp;
  const std::string a = (tmp / "a.json").string(), b = (tmp / "b.json").string();
  EXPECT_EQ(run_cli("gen-world --seed 5 --out " + a, tmp).exit_code, 0);
  EXPECT_EQ(run_cli("gen-world --seed 5 --out " + b, tmp).exit_code, 0);
  EXPECT_EQ(read_file(a), read_file(b));
  EXPECT_EQ(world_hash(load_world(a)), world_hash(make_world([] {
              WorldOptions o;
              o.seed = 5;
              return o;
            }())));
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  EXPECT_EQ(run_cli("selftest", tmp).exit_code, 0);
  EXPECT_EQ(run_cli("", tmp).exit_code, 2);
  EXPECT_EQ(run_cli("gen-world", tmp).exit_code, 2);
  EXPECT_EQ(run_cli("sample --world x.json --out d --mode sideways", tmp).exit_code, 2);

  write_file(tmp / "bad.json", R"({"guidance": {"etta": 1}})");
  const RunResult bad = run_cli("gen-world --config " + (tmp / "bad.json").string() +
                                    " --out " + (tmp / "w.json").string(),
                                tmp);
  EXPECT_EQ(bad.exit_code, 2);
  const json line = json::parse(bad.err.substr(0, bad.err.find('\n')));
  EXPECT_EQ(line.at("error"), "ConfigParse");
  EXPECT_EQ(line.at("exit_code"), 2);

  write_file(tmp / "small.json", R"({"world": {"concepts": 32, "embed_dim": 3}})");
  EXPECT_EQ(run_cli("gen-world --config " + (tmp / "small.json").string() + " --out " +
                        (tmp / "w.json").string(),
                    tmp)
                .exit_code,
            3);

  write_file(tmp / "run.json", R"({"run": {"num_samples": 4}})");
  const std::string cfg = " --config " + (tmp / "run.json").string();
  ASSERT_EQ(run_cli("gen-world --seed 1 --out " + (tmp / "w1.json").string(), tmp).exit_code, 0);
  ASSERT_EQ(run_cli("gen-world --seed 2 --out " + (tmp / "w2.json").string(), tmp).exit_code, 0);
  ASSERT_EQ(run_cli("sample --world " + (tmp / "w1.json").string() + cfg + " --mode none --out " +
                        (tmp / "r1").string(),
                    tmp)
                .exit_code,
            0);
  ASSERT_EQ(run_cli("sample --world " + (tmp / "w2.json").string() + cfg +
                        " --jobs 2 --out " + (tmp / "r2").string(),
                    tmp)
                .exit_code,
            0);
  EXPECT_EQ(run_cli("eval " + (tmp / "r1").string() + " " + (tmp / "r1").string() +
                        " --out " + (tmp / "e1").string(),
                    tmp)
                .exit_code,
            0);
  const RunResult mismatch = run_cli("eval " + (tmp / "r1").string() + " " +
                                         (tmp / "r2").string() + " --out " +
                                         (tmp / "e2").string(),
                                     tmp);
  EXPECT_EQ(mismatch.exit_code, 4);
  EXPECT_NE(mismatch.err.find("SchemaMismatch"), std::string::npos);
  EXPECT_EQ(run_cli("sample --world " + (tmp / "nope.json").string() + " --out " +
                        (tmp / "r3").string(),
                    tmp)
                .exit_code,
            3);
}

}  // namespace
}  // namespace mdg
