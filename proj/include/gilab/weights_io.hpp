/*
 * Copyright 2026 The gilab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Weights on disk: a JSON header (spec, seed, layout version) and a sidecar
// file of little-endian IEEE-754 doubles in flat-layout order.

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gilab/errors.hpp"
#include "gilab/smallnet.hpp"

namespace gilab {

inline constexpr int kWeightsLayoutVersion = 1;

struct StoredWeights {
  Weights weights;
  std::uint64_t seed = 0;
};

inline std::vector<std::uint8_t> encode_f64_le(std::span<const double> values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 8);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  return out;
}

inline std::vector<double> decode_f64_le(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 8 != 0) throw ParseError("weights: sidecar length not a multiple of 8", bytes.size());
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[8 * i + b]} << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

// Writes `<header_path>` and `<header_path stem>.bin` next to it.
inline void save_weights(const Weights& w, std::uint64_t seed, const std::filesystem::path& header_path) {
  w.validate();
  std::filesystem::path data_path = header_path;
  data_path.replace_extension(".bin");
  nlohmann::json j;
  j["format"] = "gilab.weights";
  j["layout_version"] = kWeightsLayoutVersion;
  j["spec"] = {{"layer_sizes", w.spec.layer_sizes},
               {"activation", to_string(w.spec.activation)},
               {"loss_scale", w.spec.loss_scale}};
  j["seed"] = seed;
  j["param_count"] = w.flat.size();
  j["data_file"] = data_path.filename().string();
  j["dtype"] = "float64-le";
  std::ofstream h(header_path);
  if (!h) throw IoError("cannot write '" + header_path.string() + "'");
  h << j.dump(2) << "\n";
  const auto bytes = encode_f64_le(w.flat);
  std::ofstream d(data_path, std::ios::binary);
  if (!d) throw IoError("cannot write '" + data_path.string() + "'");
  d.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline StoredWeights load_weights(const std::filesystem::path& header_path) {
  std::ifstream h(header_path);
  if (!h) throw IoError("cannot open '" + header_path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("weights header: ") + e.what());
  }
  try {
    if (j.at("format") != "gilab.weights") throw ParseError("weights header: unknown format");
    if (j.at("layout_version") != kWeightsLayoutVersion)
      throw ParseError("weights header: unsupported layout version");
    StoredWeights out;
    out.weights.spec.layer_sizes = j.at("spec").at("layer_sizes").get<std::vector<std::size_t>>();
    out.weights.spec.activation = activation_from_string(j.at("spec").at("activation").get<std::string>());
    out.weights.spec.loss_scale = j.at("spec").at("loss_scale").get<double>();
    out.seed = j.at("seed").get<std::uint64_t>();
    const auto data_path = header_path.parent_path() / j.at("data_file").get<std::string>();
    std::ifstream d(data_path, std::ios::binary);
    if (!d) throw IoError("cannot open '" + data_path.string() + "'");
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(d), std::istreambuf_iterator<char>()};
    out.weights.flat = Vector(decode_f64_le(bytes));
    if (out.weights.flat.size() != j.at("param_count").get<std::size_t>())
      throw ParseError("weights: sidecar holds " + std::to_string(out.weights.flat.size()) +
                       " values, header says " + std::to_string(j.at("param_count").get<std::size_t>()));
    out.weights.validate();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("weights header: ") + e.what());
  }
}

}  // namespace gilab
