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

// JSON serialization of worlds and vectors, content hashes and a few file
// helpers. Doubles are written in shortest round-trip form so a world read
// back from disk is bit-identical to the one that was written.

#ifndef MDG_IO_HPP_
#define MDG_IO_HPP_

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "mdg/diffusion.hpp"
#include "mdg/error.hpp"
#include "mdg/geometry.hpp"
#include "mdg/world.hpp"

namespace mdg {

using json = nlohmann::json;

inline constexpr std::string_view kWorldFormat = "mdg-world";
inline constexpr int kWorldFormatVersion = 1;

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[h & 0xF];
    h >>= 4;
  }
  return out;
}

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double x) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), ptr);
}

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
  return rows;
}

inline Vector vector_from_json(const json& a) {
  if (!a.is_array()) {
    throw Error(ErrorCode::kConfigParse, "expected a JSON array of numbers");
  }
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) {
      throw Error(ErrorCode::kConfigParse, "expected a number in array");
    }
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty()) {
    throw Error(ErrorCode::kConfigParse, "expected a non-empty array of rows");
  }
  const auto cols = rows[0].size();
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) {
      throw Error(ErrorCode::kConfigParse, "ragged matrix rows");
    }
    m.row(static_cast<Eigen::Index>(i)) = vector_from_json(rows[i]).transpose();
  }
  return m;
}

inline json to_json(const WorldOptions& o) {
  return json{{"concepts", o.concepts},
              {"embed_dim", o.embed_dim},
              {"latent_dim", o.latent_dim},
              {"sigma_mod", o.sigma_mod},
              {"seed", o.seed},
              {"anchor_cos_cap", o.anchor_cos_cap},
              {"max_anchor_attempts", o.max_anchor_attempts},
              {"latent_mean_norm", o.latent_mean_norm},
              {"latent_std", o.latent_std},
              {"bias_scale", o.bias_scale}};
}

inline json world_to_json(const SyntheticWorld& w) {
  json anchors = json::array();
  for (const auto& a : w.anchors()) anchors.push_back(to_json(a.values()));
  json comps = json::array();
  for (const auto& c : w.prior().components()) {
    comps.push_back(json{{"weight", c.weight},
                         {"mean", to_json(c.mean)},
                         {"variance", to_json(c.variance)}});
  }
  return json{{"format", kWorldFormat},
              {"version", kWorldFormatVersion},
              {"options", to_json(w.options())},
              {"anchors", std::move(anchors)},
              {"encoder",
               json{{"W", to_json(w.audio_encoder().weight())},
                    {"b", to_json(w.audio_encoder().bias())}}},
              {"prior", json{{"components", std::move(comps)}}}};
}

inline WorldOptions world_options_from_json(const json& j,
                                            WorldOptions o = {}) {
  for (const auto& [key, value] : j.items()) {
    if (key == "concepts") o.concepts = value.get<int>();
    else if (key == "embed_dim") o.embed_dim = value.get<int>();
    else if (key == "latent_dim") o.latent_dim = value.get<int>();
    else if (key == "sigma_mod") o.sigma_mod = value.get<double>();
    else if (key == "seed") o.seed = value.get<std::uint64_t>();
    else if (key == "anchor_cos_cap") o.anchor_cos_cap = value.get<double>();
    else if (key == "max_anchor_attempts") o.max_anchor_attempts = value.get<int>();
    else if (key == "latent_mean_norm") o.latent_mean_norm = value.get<double>();
    else if (key == "latent_std") o.latent_std = value.get<double>();
    else if (key == "bias_scale") o.bias_scale = value.get<double>();
    else throw Error(ErrorCode::kConfigParse, "unknown world key '" + key + "'");
  }
  return o;
}

inline SyntheticWorld world_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != kWorldFormat ||
        j.at("version").get<int>() != kWorldFormatVersion) {
      throw Error(ErrorCode::kSchemaMismatch, "not an mdg-world v1 document");
    }
    const WorldOptions o = world_options_from_json(j.at("options"));
    std::vector<Embedding> anchors;
    for (const auto& a : j.at("anchors")) {
      anchors.push_back(Embedding::from_unit(vector_from_json(a)));
    }
    AudioEncoder enc(matrix_from_json(j.at("encoder").at("W")),
                     vector_from_json(j.at("encoder").at("b")));
    std::vector<MixtureComponent> comps;
    for (const auto& c : j.at("prior").at("components")) {
      comps.push_back({c.at("weight").get<double>(), vector_from_json(c.at("mean")),
                       vector_from_json(c.at("variance"))});
    }
    if (static_cast<int>(anchors.size()) != o.concepts ||
        static_cast<int>(comps.size()) != o.concepts ||
        enc.embed_dim() != o.embed_dim || enc.latent_dim() != o.latent_dim) {
      throw Error(ErrorCode::kSchemaMismatch,
                  "world document disagrees with its own dimensions");
    }
    return SyntheticWorld(o, std::move(anchors), std::move(enc),
                          GaussianMixturePrior(std::move(comps)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigParse, std::string("world JSON: ") + e.what());
  }
}

inline std::string world_hash(const SyntheticWorld& w) {
  return fnv1a_hex(world_to_json(w).dump());
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open " + p.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view data) {
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIoError, "cannot write " + p.string());
  }
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

inline json read_json(const std::filesystem::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfigParse, p.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& p, const json& j) {
  write_file(p, j.dump(2) + "\n");
}

inline SyntheticWorld load_world(const std::filesystem::path& p) {
  return world_from_json(read_json(p));
}

}  // namespace mdg

#endif  // MDG_IO_HPP_
