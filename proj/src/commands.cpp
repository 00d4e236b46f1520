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

#include "commands.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gilab/errors.hpp"
#include "gilab/harness/config.hpp"
#include "gilab/harness/experiment.hpp"
#include "gilab/harness/report.hpp"
#include "gilab/weights_io.hpp"

namespace gilab::cli {
namespace {

namespace fs = std::filesystem;
using harness::ExperimentConfig;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  std::optional<std::size_t> workers;
};

ExperimentConfig resolve_config(const GlobalOptions& g) {
  ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{}
                                               : harness::load_config_file(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    harness::set_config_value(cfg, harness::detail::trim(kv.substr(0, eq)),
                              harness::detail::trim(kv.substr(eq + 1)));
  }
  if (g.seed) cfg.master_seed = *g.seed;
  if (!g.out.empty()) cfg.output_dir = g.out;
  if (g.workers) cfg.workers = *g.workers;
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

Weights obtain_model(const ExperimentConfig& cfg, const harness::Datasets& data,
                     const std::string& weights_path) {
  if (!weights_path.empty()) {
    StoredWeights stored = load_weights(weights_path);
    if (!(stored.weights.spec == cfg.model.spec))
      throw ConfigError("weights in '" + weights_path + "' do not match the configured model");
    return std::move(stored.weights);
  }
  return harness::train_model(cfg, data.train);
}

int cmd_train(const ExperimentConfig& cfg) {
  const auto data = harness::load_datasets(cfg);
  TrainLog log;
  const Weights w = harness::train_model(cfg, data.train, &log);
  const fs::path out(cfg.output_dir);
  ensure_dir(out);
  save_weights(w, harness::model_seed(cfg), out / "model.json");
  std::cout << "trained " << w.spec.param_count() << " parameters for " << cfg.model.epochs
            << " epochs\n";
  if (!log.epoch_loss.empty())
    std::cout << "loss: first epoch " << log.epoch_loss.front() << ", last epoch "
              << log.epoch_loss.back() << "\n";
  std::cout << "train accuracy " << accuracy(w, data.train) << ", eval accuracy "
            << accuracy(w, data.eval) << "\n";
  std::cout << "wrote " << (out / "model.json").string() << "\n";
  return kExitOk;
}

int cmd_attack(const ExperimentConfig& cfg, const std::string& weights_path, std::size_t index) {
  const auto data = harness::load_datasets(cfg);
  if (index >= data.eval.size())
    throw ConfigError("--sample " + std::to_string(index) + " out of range (have " +
                      std::to_string(data.eval.size()) + " samples)");
  const Weights w = obtain_model(cfg, data, weights_path);
  const Sample& s = data.eval[index];
  const GradTarget target(grad_weights(w, s));
  const fs::path out(cfg.output_dir);
  ensure_dir(out);
  const std::string stem = "sample" + std::to_string(index);
  harness::write_text_file(out / (stem + "_truth.pgm"), harness::encode_pgm(s.x, cfg.dataset.shape));
  for (GradLossKind kind : cfg.attack_kinds) {
    AttackConfig ac = cfg.attack_for(kind);
    ac.kind = kind;
    ac.seed = harness::attack_seed(cfg, index, kind);
    const AttackResult r = run_attack(ac, w, target, s, cfg.dataset.shape);
    const auto scores = score_reconstruction(r.x_rec, s.x, cfg.dataset.shape);
    auto j = harness::attack_result_json(r, kind);
    j["sample_id"] = index;
    j["mse"] = scores.mse;
    j["psnr"] = scores.psnr;
    j["ssim"] = scores.ssim;
    const std::string base = stem + "_" + to_string(kind);
    harness::write_text_file(out / (base + ".json"), j.dump(2) + "\n");
    harness::write_text_file(out / (base + ".pgm"), harness::encode_pgm(r.x_rec, cfg.dataset.shape));
    std::cout << to_string(kind) << ": final gm loss " << r.final_gm_loss << ", mse " << scores.mse
              << ", psnr " << scores.psnr << ", ssim " << scores.ssim << "\n";
  }
  return kExitOk;
}

int cmd_proxy(const ExperimentConfig& cfg, const std::string& weights_path) {
  const auto data = harness::load_datasets(cfg);
  const Weights w = obtain_model(cfg, data, weights_path);
  std::vector<harness::ReportRow> rows(data.eval.size());
  harness::parallel_for(rows.size(), cfg.workers, [&](std::size_t i) {
    rows[i] = harness::process_sample(cfg, w, data.eval[i], i, /*run_attacks=*/false);
  });
  std::string csv = "sample_id,label,grad_norm,l2_max,l2_min,cos_max,cos_min,fusion,status\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.sample_id) + "," + std::to_string(r.label);
    for (std::size_t p = 0; p < harness::kProxyNames.size(); ++p)
      csv += "," + (r.proxies ? harness::format_real(harness::proxy_value(*r.proxies, p))
                              : std::string());
    csv += "," + harness::sanitize_status(r.status) + "\n";
  }
  const fs::path out(cfg.output_dir);
  ensure_dir(out);
  harness::write_text_file(out / "proxies.csv", csv);
  std::cout << "wrote " << (out / "proxies.csv").string() << " (" << rows.size() << " samples)\n";
  return kExitOk;
}

int cmd_run(const ExperimentConfig& cfg, const std::string& weights_path) {
  std::optional<Weights> pretrained;
  if (!weights_path.empty()) {
    StoredWeights stored = load_weights(weights_path);
    pretrained = std::move(stored.weights);
  }
  const auto res = harness::run_experiment(cfg, std::move(pretrained));
  const fs::path out(cfg.output_dir);
  harness::emit_report(res.rows, res.report, out, harness::canonical_config_text(cfg));
  save_weights(res.model, harness::model_seed(cfg), out / "model.json");
  std::size_t failed = 0;
  for (const auto& r : res.rows) failed += !r.usable();
  std::cout << res.rows.size() << " samples, " << failed << " failed\n";
  std::cout << "spearman vs mse: l2_max/mse_l2 ";
  const auto a = res.report.at("l2_max", "mse_l2");
  std::cout << (a ? harness::format_real(*a) : "n/a") << ", cos_min/mse_cos ";
  const auto b = res.report.at("cos_min", "mse_cos");
  std::cout << (b ? harness::format_real(*b) : "n/a") << ", grad_norm/mse_l2 ";
  const auto c = res.report.at("grad_norm", "mse_l2");
  std::cout << (c ? harness::format_real(*c) : "n/a") << "\n";
  std::cout << "wrote " << out.string() << "\n";
  return kExitOk;
}

int cmd_report(const ExperimentConfig& cfg, const std::string& input_dir) {
  const fs::path in = input_dir.empty() ? fs::path(cfg.output_dir) : fs::path(input_dir);
  const auto rows = harness::parse_samples_csv(harness::read_text_file(in / "samples.csv"));
  std::string digest = harness::experiment_digest(cfg);
  if (fs::exists(in / "correlations.csv"))
    digest = harness::parse_correlations_csv(harness::read_text_file(in / "correlations.csv"))
                 .config_digest;
  const auto rep = harness::compute_correlations(rows, digest);
  harness::emit_report(rows, rep, cfg.output_dir);
  std::cout << "re-rendered " << rows.size() << " rows into " << cfg.output_dir << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"gilab: gradient inversion and curvature proxy lab"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Config file (key = value lines)");
  app.add_option("--seed", g.seed, "Master seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory (overrides the config)");
  app.add_option("--set", g.overrides, "Override a config key: key=value (repeatable)");
  app.add_option("--workers", g.workers, "Concurrent per-sample pipelines");
  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "Print all config keys with their defaults and exit");

  std::string weights_path;
  std::size_t sample_index = 0;
  std::string input_dir;

  auto* train = app.add_subcommand("train", "Train the model and save its weights");
  auto* attack = app.add_subcommand("attack", "Attack one sample and save the reconstruction");
  attack->add_option("--weights", weights_path, "Saved model header (skips training)");
  attack->add_option("--sample", sample_index, "Evaluation sample index");
  auto* proxy = app.add_subcommand("proxy", "Compute curvature proxies for every sample");
  proxy->add_option("--weights", weights_path, "Saved model header (skips training)");
  auto* run = app.add_subcommand("run", "Full pipeline: train, proxies, attacks, report");
  run->add_option("--weights", weights_path, "Saved model header (skips training)");
  auto* report = app.add_subcommand("report", "Re-render correlations and plots from samples.csv");
  report->add_option("--in", input_dir, "Directory holding samples.csv (default: --out)");

  // --list-keys works without a subcommand.
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--list-keys") {
      std::cout << harness::canonical_config_text(ExperimentConfig{});
      return kExitOk;
    }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const ExperimentConfig cfg = resolve_config(g);
    if (*train) return cmd_train(cfg);
    if (*attack) return cmd_attack(cfg, weights_path, sample_index);
    if (*proxy) return cmd_proxy(cfg, weights_path);
    if (*run) return cmd_run(cfg, weights_path);
    if (*report) return cmd_report(cfg, input_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace gilab::cli
