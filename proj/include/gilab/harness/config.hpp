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

// Experiment configuration and its flat `key = value` text format.
//
// Lines are `section.key = value`; `#` starts a comment; blank lines are
// ignored. Unknown keys are errors. See README.md for the full key list.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gilab/attack.hpp"
#include "gilab/errors.hpp"
#include "gilab/gradmatch.hpp"
#include "gilab/lavp.hpp"
#include "gilab/smallnet.hpp"

namespace gilab::harness {

enum class DataSource { Synthetic, Idx };

struct SyntheticParams {
  std::size_t classes = 4;
  double sigma = 1.5;          // blob width in pixels
  double noise = 0.05;         // std-dev of additive pixel noise
  double jitter = 0.0;         // std-dev of per-sample blob-center offset, pixels
  double amplitude_min = 1.0;  // per-sample blob amplitude ~ U[amplitude_min, 1]
  std::vector<std::pair<double, double>> centers;  // (row, col); empty = default layout
};

struct DatasetConfig {
  DataSource source = DataSource::Synthetic;
  std::string images_path;
  std::string labels_path;
  bool center_crop = true;
  std::size_t train_count = 200;
  std::size_t sample_count = 20;
  ImageShape shape;
  SyntheticParams synthetic;
};

struct ModelConfig {
  NetSpec spec;
  std::size_t epochs = 30;
  double lr = 0.1;
  std::optional<std::uint64_t> seed;  // defaults to a stream of the master seed
};

struct ExperimentConfig {
  ModelConfig model;
  DatasetConfig dataset;
  std::vector<GradLossKind> attack_kinds{GradLossKind::L2, GradLossKind::Cosine};
  AttackConfig attack_l2;
  AttackConfig attack_cos;
  ProxyConfig proxy;
  std::string output_dir = "out";
  std::uint64_t master_seed = 1;
  std::size_t workers = 1;

  ExperimentConfig() {
    attack_l2.kind = GradLossKind::L2;
    attack_l2.alpha_tv = 1e-4;
    attack_cos.kind = GradLossKind::Cosine;
    attack_cos.alpha_tv = 1e-4;
  }

  AttackConfig& attack_for(GradLossKind k) { return k == GradLossKind::L2 ? attack_l2 : attack_cos; }
  const AttackConfig& attack_for(GradLossKind k) const {
    return k == GradLossKind::L2 ? attack_l2 : attack_cos;
  }

  void validate() const {
    try {
      model.spec.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    dataset.shape.validate();
    if (dataset.shape.pixels() != model.spec.input_dim())
      throw ConfigError("data.height * data.width must equal the model input size");
    if (dataset.sample_count < 2) throw ConfigError("data.sample_count must be >= 2");
    if (dataset.train_count < 1) throw ConfigError("data.train_count must be >= 1");
    if (dataset.source == DataSource::Synthetic) {
      if (dataset.synthetic.classes < 1 || dataset.synthetic.classes > model.spec.classes())
        throw ConfigError("data.classes must be in [1, model classes]");
      if (!(dataset.synthetic.sigma > 0.0)) throw ConfigError("data.sigma must be positive");
      if (!(dataset.synthetic.noise >= 0.0)) throw ConfigError("data.noise must be >= 0");
    } else if (dataset.images_path.empty() || dataset.labels_path.empty()) {
      throw ConfigError("data.images and data.labels are required for idx data");
    }
    if (attack_kinds.empty()) throw ConfigError("attack.kinds must list at least one kind");
    attack_l2.validate();
    attack_cos.validate();
    if (proxy.power.max_iters < 1) throw ConfigError("proxy.max_iters must be >= 1");
    if (!(proxy.power.tol > 0.0)) throw ConfigError("proxy.tol must be positive");
    if (!(proxy.jvp_step > 0.0) || !(proxy.vjp_step > 0.0))
      throw ConfigError("proxy fd steps must be positive");
    if (workers < 1) throw ConfigError("run.workers must be >= 1");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a real number, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string format_real(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct KeyHandler {
  Setter set;
  Getter get;
};

inline void add_attack_keys(std::map<std::string, KeyHandler>& m, const std::string& prefix,
                            GradLossKind kind) {
  auto a = [kind](ExperimentConfig& c) -> AttackConfig& { return c.attack_for(kind); };
  auto ca = [kind](const ExperimentConfig& c) -> const AttackConfig& { return c.attack_for(kind); };
  auto real_key = [&](const std::string& name, double AttackConfig::*field) {
    m[prefix + name] = {[a, field](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          a(c).*field = parse_real(k, v);
                        },
                        [ca, field](const ExperimentConfig& c) { return format_real(ca(c).*field); }};
  };
  auto count_key = [&](const std::string& name, std::size_t AttackConfig::*field) {
    m[prefix + name] = {[a, field](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          a(c).*field = parse_u64(k, v);
                        },
                        [ca, field](const ExperimentConfig& c) { return std::to_string(ca(c).*field); }};
  };
  count_key("steps", &AttackConfig::steps);
  count_key("restarts", &AttackConfig::restarts);
  real_key("lr", &AttackConfig::lr);
  real_key("beta1", &AttackConfig::beta1);
  real_key("beta2", &AttackConfig::beta2);
  real_key("adam_eps", &AttackConfig::adam_eps);
  real_key("alpha_tv", &AttackConfig::alpha_tv);
  real_key("fd_step", &AttackConfig::fd_step);
  m[prefix + "init"] = {[a](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          if (v == "random") a(c).init_mode.kind = InitMode::Kind::RandomUniform;
                          else if (v == "local") a(c).init_mode.kind = InitMode::Kind::LocalPerturb;
                          else throw ConfigError(k + ": expected random or local, got '" + v + "'");
                        },
                        [ca](const ExperimentConfig& c) {
                          return std::string(ca(c).init_mode.kind == InitMode::Kind::RandomUniform
                                                 ? "random"
                                                 : "local");
                        }};
  m[prefix + "magnitude"] = {[a](ExperimentConfig& c, const std::string& k, const std::string& v) {
                               a(c).init_mode.magnitude = parse_real(k, v);
                             },
                             [ca](const ExperimentConfig& c) { return format_real(ca(c).init_mode.magnitude); }};
}

inline const std::map<std::string, KeyHandler>& key_table() {
  static const std::map<std::string, KeyHandler> table = [] {
    std::map<std::string, KeyHandler> m;
    m["seed"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                   c.master_seed = parse_u64(k, v);
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.master_seed); }};
    m["output_dir"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
                       [](const ExperimentConfig& c) { return c.output_dir; }};
    m["run.workers"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          c.workers = parse_u64(k, v);
                        },
                        [](const ExperimentConfig& c) { return std::to_string(c.workers); }};

    m["model.layers"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                           std::vector<std::size_t> sizes;
                           for (const auto& item : split_list(v)) sizes.push_back(parse_u64(k, item));
                           c.model.spec.layer_sizes = sizes;
                         },
                         [](const ExperimentConfig& c) {
                           std::string s;
                           for (auto n : c.model.spec.layer_sizes) s += (s.empty() ? "" : ",") + std::to_string(n);
                           return s;
                         }};
    m["model.activation"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) {
                               c.model.spec.activation = activation_from_string(v);
                             },
                             [](const ExperimentConfig& c) { return to_string(c.model.spec.activation); }};
    m["model.loss_scale"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                               c.model.spec.loss_scale = parse_real(k, v);
                             },
                             [](const ExperimentConfig& c) { return format_real(c.model.spec.loss_scale); }};
    m["train.epochs"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                           c.model.epochs = parse_u64(k, v);
                         },
                         [](const ExperimentConfig& c) { return std::to_string(c.model.epochs); }};
    m["train.lr"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                       c.model.lr = parse_real(k, v);
                     },
                     [](const ExperimentConfig& c) { return format_real(c.model.lr); }};
    m["train.seed"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                         c.model.seed = parse_u64(k, v);
                       },
                       [](const ExperimentConfig& c) {
                         return c.model.seed ? std::to_string(*c.model.seed) : std::string("auto");
                       }};

    m["data.source"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          if (v == "synthetic") c.dataset.source = DataSource::Synthetic;
                          else if (v == "idx") c.dataset.source = DataSource::Idx;
                          else throw ConfigError(k + ": expected synthetic or idx, got '" + v + "'");
                        },
                        [](const ExperimentConfig& c) {
                          return std::string(c.dataset.source == DataSource::Synthetic ? "synthetic" : "idx");
                        }};
    m["data.images"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.dataset.images_path = v; },
                        [](const ExperimentConfig& c) { return c.dataset.images_path; }};
    m["data.labels"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.dataset.labels_path = v; },
                        [](const ExperimentConfig& c) { return c.dataset.labels_path; }};
    m["data.center_crop"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                               c.dataset.center_crop = parse_bool(k, v);
                             },
                             [](const ExperimentConfig& c) { return std::string(c.dataset.center_crop ? "true" : "false"); }};
    auto count = [&m](const std::string& key, auto field_of) {
      m[key] = {[field_of](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  field_of(c) = parse_u64(k, v);
                },
                [field_of](const ExperimentConfig& c) {
                  return std::to_string(field_of(c));
                }};
    };
    auto real = [&m](const std::string& key, auto field_of) {
      m[key] = {[field_of](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  field_of(c) = parse_real(k, v);
                },
                [field_of](const ExperimentConfig& c) {
                  return format_real(field_of(c));
                }};
    };
    count("data.train_count", [](auto& c) -> auto& { return c.dataset.train_count; });
    count("data.sample_count", [](auto& c) -> auto& { return c.dataset.sample_count; });
    count("data.height", [](auto& c) -> auto& { return c.dataset.shape.height; });
    count("data.width", [](auto& c) -> auto& { return c.dataset.shape.width; });
    count("data.classes", [](auto& c) -> auto& { return c.dataset.synthetic.classes; });
    real("data.sigma", [](auto& c) -> auto& { return c.dataset.synthetic.sigma; });
    real("data.noise", [](auto& c) -> auto& { return c.dataset.synthetic.noise; });
    real("data.jitter", [](auto& c) -> auto& { return c.dataset.synthetic.jitter; });
    real("data.amplitude_min", [](auto& c) -> auto& { return c.dataset.synthetic.amplitude_min; });

    m["attack.kinds"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) {
                           c.attack_kinds.clear();
                           for (const auto& item : split_list(v)) c.attack_kinds.push_back(grad_loss_kind_from_string(item));
                         },
                         [](const ExperimentConfig& c) {
                           std::string s;
                           for (auto k : c.attack_kinds) s += (s.empty() ? "" : ",") + to_string(k);
                           return s;
                         }};
    add_attack_keys(m, "attack.l2.", GradLossKind::L2);
    add_attack_keys(m, "attack.cos.", GradLossKind::Cosine);

    count("proxy.max_iters", [](auto& c) -> auto& { return c.proxy.power.max_iters; });
    real("proxy.tol", [](auto& c) -> auto& { return c.proxy.power.tol; });
    real("proxy.jvp_step", [](auto& c) -> auto& { return c.proxy.jvp_step; });
    real("proxy.vjp_step", [](auto& c) -> auto& { return c.proxy.vjp_step; });
    return m;
  }();
  return table;
}

}  // namespace detail

inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = detail::key_table();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, key, value);
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::key_table()) keys.push_back(k);
  return keys;
}

inline void apply_config_text(ExperimentConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  apply_config_text(cfg, text);
  return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// Every key with its effective value, sorted by key. Parsing this text yields
// an equivalent configuration.
inline std::string canonical_config_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, h] : detail::key_table()) {
    if (key == "train.seed" && !cfg.model.seed) continue;
    out += key + " = " + h.get(cfg) + "\n";
  }
  return out;
}

}  // namespace gilab::harness
