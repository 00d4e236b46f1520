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

// End-to-end pipeline: data, model, per-sample proxies and attacks, scores
// and the correlation report.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gilab/attack.hpp"
#include "gilab/errors.hpp"
#include "gilab/gradmatch.hpp"
#include "gilab/harness/config.hpp"
#include "gilab/harness/idx.hpp"
#include "gilab/harness/report.hpp"
#include "gilab/harness/synthetic.hpp"
#include "gilab/lavp.hpp"
#include "gilab/metrics.hpp"
#include "gilab/smallnet.hpp"

namespace gilab::harness {

// Stream ids under the master seed.
inline constexpr std::uint64_t kTrainDataStream = 10;
inline constexpr std::uint64_t kEvalDataStream = 11;
inline constexpr std::uint64_t kModelStream = 20;
inline constexpr std::uint64_t kProxyStream = 30;
inline constexpr std::uint64_t kAttackStream = 40;

struct Datasets {
  std::vector<Sample> train;
  std::vector<Sample> eval;
};

inline Datasets load_datasets(const ExperimentConfig& cfg) {
  const SeededRng master(cfg.master_seed);
  const auto& d = cfg.dataset;
  Datasets out;
  if (d.source == DataSource::Synthetic) {
    out.train = gen_synthetic(d.synthetic, d.shape, d.train_count, master.derive(kTrainDataStream));
    out.eval = gen_synthetic(d.synthetic, d.shape, d.sample_count, master.derive(kEvalDataStream));
    return out;
  }
  auto all = load_idx(d.images_path, d.labels_path, d.train_count + d.sample_count, d.shape,
                      d.center_crop);
  if (all.size() < d.train_count + d.sample_count)
    throw ParseError("idx: need " + std::to_string(d.train_count + d.sample_count) +
                     " images, file has " + std::to_string(all.size()));
  for (const auto& s : all)
    if (s.y >= cfg.model.spec.classes())
      throw ParseError("idx: label " + std::to_string(s.y) + " out of range for " +
                       std::to_string(cfg.model.spec.classes()) + " classes");
  out.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(d.train_count));
  out.eval.assign(all.begin() + static_cast<std::ptrdiff_t>(d.train_count), all.end());
  return out;
}

inline std::uint64_t model_seed(const ExperimentConfig& cfg) {
  return cfg.model.seed ? *cfg.model.seed : SeededRng(cfg.master_seed).derive(kModelStream).next_u64();
}

inline Weights train_model(const ExperimentConfig& cfg, const std::vector<Sample>& train,
                           TrainLog* log = nullptr) {
  return train_sgd(cfg.model.spec, train, cfg.model.epochs, cfg.model.lr, SeededRng(model_seed(cfg)),
                   log);
}

// Digest of everything that influences results; output location and worker
// count are excluded.
inline std::string experiment_digest(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.output_dir = "";
  c.workers = 1;
  return sha256_hex(canonical_config_text(c));
}

inline std::uint64_t attack_seed(const ExperimentConfig& cfg, std::size_t sample_id,
                                 GradLossKind kind) {
  return SeededRng(cfg.master_seed)
      .derive(kAttackStream)
      .derive(sample_id)
      .derive(static_cast<std::uint64_t>(kind))
      .next_u64();
}

inline SeededRng proxy_rng(const ExperimentConfig& cfg, std::size_t sample_id) {
  return SeededRng(cfg.master_seed).derive(kProxyStream).derive(sample_id);
}

inline std::vector<RestartInfo> restart_infos(const AttackResult& r, GradLossKind kind,
                                              std::span<const double> truth) {
  std::vector<RestartInfo> out;
  double best_mse = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  for (std::size_t i = 0; i < r.per_restart_x.size(); ++i) {
    RestartInfo ri;
    ri.kind = kind;
    ri.restart = i;
    ri.initial_gm_loss = r.per_restart_initial[i];
    ri.final_gm_loss = r.per_restart_final[i];
    ri.mse = mse(r.per_restart_x[i], truth);
    ri.chosen = i == r.chosen_restart;
    if (std::isfinite(ri.final_gm_loss) && ri.mse < best_mse) {
      best_mse = ri.mse;
      best = i;
    }
    out.push_back(ri);
  }
  if (!out.empty()) out[best].oracle_best = true;
  return out;
}

// One sample: proxies first, then each configured attack. Failures are
// recorded in the row status.
inline ReportRow process_sample(const ExperimentConfig& cfg, const Weights& w, const Sample& s,
                                std::size_t sample_id, bool run_attacks = true) {
  ReportRow row;
  row.sample_id = sample_id;
  row.label = s.y;
  try {
    const Vector g_star = grad_weights(w, s);
    const GradTarget target(g_star);
    row.proxies = compute_proxies(w, s, sample_id, cfg.proxy, proxy_rng(cfg, sample_id));
    if (!run_attacks) return row;
    for (GradLossKind kind : cfg.attack_kinds) {
      AttackConfig ac = cfg.attack_for(kind);
      ac.kind = kind;
      ac.seed = attack_seed(cfg, sample_id, kind);
      const AttackResult r = run_attack(ac, w, target, s, cfg.dataset.shape);
      row.outcome(kind) = AttackOutcome{score_reconstruction(r.x_rec, s.x, cfg.dataset.shape),
                                        r.final_gm_loss};
      const auto infos = restart_infos(r, kind, s.x);
      row.restarts.insert(row.restarts.end(), infos.begin(), infos.end());
    }
  } catch (const DegenerateGradientError& e) {
    row.status = std::string("failed:degenerate gradient: ") + e.what();
  } catch (const AttackFailedError& e) {
    row.status = std::string("failed:") + e.what();
  }
  return row;
}

// Runs f(i) for i in [0, n) on up to `workers` threads. The first exception
// is rethrown after all threads finish.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct ExperimentResult {
  Weights model;
  std::vector<Sample> samples;
  std::vector<ReportRow> rows;
  CorrelationReport report;
  std::string config_digest;
};

// Full pipeline. Pass pretrained weights to skip training.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       std::optional<Weights> pretrained = std::nullopt) {
  cfg.validate();
  Datasets data = load_datasets(cfg);
  ExperimentResult out{pretrained ? std::move(*pretrained) : train_model(cfg, data.train),
                       std::move(data.eval), {}, {}, experiment_digest(cfg)};
  if (!(out.model.spec == cfg.model.spec))
    throw ConfigError("pretrained weights do not match the configured model");
  out.rows.resize(out.samples.size());
  parallel_for(out.samples.size(), cfg.workers, [&](std::size_t i) {
    out.rows[i] = process_sample(cfg, out.model, out.samples[i], i);
  });
  out.report = compute_correlations(out.rows, out.config_digest);
  return out;
}

}  // namespace gilab::harness
