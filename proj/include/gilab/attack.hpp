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

// Gradient inversion: Adam over the candidate image with box projection and
// multiple restarts, plus a one-step loss-drop diagnostic.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gilab/errors.hpp"
#include "gilab/gradient_map.hpp"
#include "gilab/gradmatch.hpp"
#include "gilab/smallnet.hpp"
#include "gilab/tensorcore.hpp"

namespace gilab {

struct InitMode {
  enum class Kind { RandomUniform, LocalPerturb };
  Kind kind = Kind::RandomUniform;
  double magnitude = 0.0;  // LocalPerturb only

  static InitMode random_uniform() { return {Kind::RandomUniform, 0.0}; }
  static InitMode local_perturb(double magnitude) { return {Kind::LocalPerturb, magnitude}; }

  bool operator==(const InitMode&) const = default;
};

struct AttackConfig {
  GradLossKind kind = GradLossKind::L2;
  std::size_t steps = 500;
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double alpha_tv = 1e-2;
  std::size_t restarts = 3;
  InitMode init_mode;
  double fd_step = 1e-4;
  std::uint64_t seed = 0;

  // A LocalPerturb magnitude of exactly zero is accepted: it starts the attack
  // at the ground truth, which is the converged reference case.
  void validate() const {
    if (steps < 1) throw ConfigError("attack: steps must be >= 1");
    if (restarts < 1) throw ConfigError("attack: restarts must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("attack: lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("attack: beta1 must be in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("attack: beta2 must be in [0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("attack: adam_eps must be positive");
    if (!(alpha_tv >= 0.0)) throw ConfigError("attack: alpha_tv must be >= 0");
    if (!(fd_step > 0.0)) throw ConfigError("attack: fd_step must be positive");
    if (init_mode.kind == InitMode::Kind::LocalPerturb && !(init_mode.magnitude >= 0.0))
      throw ConfigError("attack: LocalPerturb magnitude must be >= 0");
  }
};

struct AdamState {
  Vector m;
  Vector v;

  explicit AdamState(std::size_t d = 0) : m(d), v(d) {}
};

inline void clamp_unit_box(std::span<double> x) {
  for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
}

// One bias-corrected Adam update (t >= 1) followed by projection onto [0,1]^d.
inline void adam_step(AdamState& state, Vector& x, std::span<const double> grad,
                      const AttackConfig& cfg, std::size_t t) {
  require_same_length(x.size(), grad.size(), "adam_step");
  require_same_length(x.size(), state.m.size(), "adam_step: state");
  if (t < 1) throw ContractError("adam_step: t must be >= 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < x.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    x[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
  clamp_unit_box(x);
}

// RandomUniform: U[0,1]^d. LocalPerturb: x* + magnitude * sign(N(0,1)),
// clamped to the unit box.
inline Vector initial_image(const InitMode& mode, std::span<const double> x_star,
                            SeededRng& rng) {
  Vector x(x_star.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mode.kind == InitMode::Kind::RandomUniform) {
      x[i] = rng.uniform();
    } else {
      const double n = rng.normal();
      const double sign = n > 0.0 ? 1.0 : (n < 0.0 ? -1.0 : 0.0);
      x[i] = x_star[i] + mode.magnitude * sign;
    }
  }
  clamp_unit_box(x);
  return x;
}

struct AttackResult {
  Vector x_rec;
  double final_gm_loss = 0.0;
  std::vector<double> loss_trajectory;     // gm loss after each step, chosen restart;
                                           // shorter than steps if an exact match was hit
  std::vector<double> per_restart_final;   // +inf marks a failed restart
  std::vector<double> per_restart_initial;
  std::vector<Vector> per_restart_x;
  std::vector<std::string> restart_errors; // empty string when the restart succeeded
  std::size_t chosen_restart = 0;
  double wall_time = 0.0;                  // seconds
};

template <GradientMap M>
AttackResult run_attack_on_map(const AttackConfig& cfg, const M& map, const GradTarget& target,
                               std::span<const double> x_star, const ImageShape& shape) {
  cfg.validate();
  shape.require_matches(x_star.size());
  require_same_length(map.input_dim(), x_star.size(), "run_attack");
  const auto start = std::chrono::steady_clock::now();
  const SeededRng base(cfg.seed);

  AttackResult res;
  std::vector<std::vector<double>> trajectories(cfg.restarts);
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    SeededRng rng = base.derive(r);
    Vector x = initial_image(cfg.init_mode, x_star, rng);
    double initial = std::numeric_limits<double>::infinity();
    double final_loss = std::numeric_limits<double>::infinity();
    std::string error;
    try {
      initial = gm_loss(cfg.kind, map(x), target);
      AdamState state(x.size());
      auto& traj = trajectories[r];
      traj.reserve(cfg.steps);
      // An exact match cannot be improved on; stop there.
      double current = initial;
      for (std::size_t t = 1; t <= cfg.steps && current != 0.0; ++t) {
        const Vector g = objective_grad(map, x, cfg.kind, target, cfg.alpha_tv, shape, cfg.fd_step);
        adam_step(state, x, g, cfg, t);
        current = gm_loss(cfg.kind, map(x), target);
        traj.push_back(current);
      }
      final_loss = current;
    } catch (const DegenerateGradientError& e) {
      error = e.what();
      final_loss = std::numeric_limits<double>::infinity();
    }
    res.per_restart_initial.push_back(initial);
    res.per_restart_final.push_back(final_loss);
    res.per_restart_x.push_back(std::move(x));
    res.restart_errors.push_back(std::move(error));
  }

  const auto best = std::min_element(res.per_restart_final.begin(), res.per_restart_final.end());
  if (!std::isfinite(*best)) {
    std::string msg = "attack failed: all " + std::to_string(cfg.restarts) + " restarts degenerate";
    if (!res.restart_errors.empty()) msg += " (first: " + res.restart_errors.front() + ")";
    throw AttackFailedError(msg);
  }
  res.chosen_restart = static_cast<std::size_t>(best - res.per_restart_final.begin());
  res.final_gm_loss = *best;
  res.x_rec = res.per_restart_x[res.chosen_restart];
  res.loss_trajectory = std::move(trajectories[res.chosen_restart]);
  res.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

inline AttackResult run_attack(const AttackConfig& cfg, const Weights& w, const GradTarget& target,
                               const Sample& sample, const ImageShape& shape) {
  validate_sample(sample, w.spec);
  return run_attack_on_map(cfg, NetGradientMap(w, sample.y), target, sample.x, shape);
}

// ---------------------------------------------------------------------------
// One-step loss-drop diagnostic for the L2 matching loss |g(x) - g*|^2.
//
// hessian_max / hessian_min are the extreme eigenvalues of the Hessian of that
// loss at x*, i.e. twice the L2 proxies (see hessian_of_gm_loss). The local
// bi-Lipschitz estimates are L = sqrt(hessian_max / 2), M = sqrt(hessian_min / 2).
// ---------------------------------------------------------------------------

enum class BoundStatus { Satisfied, Violated, NotApplicable };

inline std::string to_string(BoundStatus s) {
  switch (s) {
    case BoundStatus::Satisfied: return "satisfied";
    case BoundStatus::Violated: return "violated";
    default: return "not-applicable";
  }
}

struct BoundCheckRecord {
  double mu = 0.0;
  double drop_observed = 0.0;
  double drop_upper_bound_T2 = 0.0;  // |dL/dx|^2 / (4 M^2)
  double drop_lower_bound_T1 = 0.0;  // (mu - L^2 mu^2) |dL/dx|^2
  double grad_sq_norm = 0.0;
  double L_hat = 0.0;
  double M_hat = 0.0;
  BoundStatus status = BoundStatus::NotApplicable;

  bool satisfied() const { return status == BoundStatus::Satisfied; }
};

// Hessian of gm_loss(L2) in terms of the J^T J proxy convention.
inline double hessian_of_gm_loss(double l2_proxy) { return 2.0 * l2_proxy; }

template <GradientMap M>
BoundCheckRecord bound_check_one_step(const M& map, std::span<const double> x,
                                      const GradTarget& target, double mu, double hessian_max,
                                      double hessian_min, double fd_step = 1e-4,
                                      double tol = 0.1) {
  if (!(hessian_max >= hessian_min && hessian_min >= 0.0))
    throw ContractError("bound_check_one_step: need hessian_max >= hessian_min >= 0");
  if (!(mu >= 0.0)) throw ContractError("bound_check_one_step: mu must be >= 0");
  const GradLossKind kind = GradLossKind::L2;
  const double before = gm_loss(kind, map(x), target);
  // Prior off, so the image shape is never consulted.
  const Vector grad = objective_grad(map, x, kind, target, 0.0, ImageShape{}, fd_step);
  Vector stepped(x);
  axpy(-mu, grad, stepped);
  const double after = gm_loss(kind, map(stepped), target);

  BoundCheckRecord rec;
  rec.mu = mu;
  rec.drop_observed = before - after;
  rec.grad_sq_norm = dot(grad, grad);
  rec.L_hat = std::sqrt(hessian_max / 2.0);
  rec.M_hat = std::sqrt(hessian_min / 2.0);
  rec.drop_lower_bound_T1 = (mu - rec.L_hat * rec.L_hat * mu * mu) * rec.grad_sq_norm;
  if (rec.grad_sq_norm == 0.0) {
    rec.drop_upper_bound_T2 = 0.0;
    rec.status = rec.drop_observed <= 0.0 ? BoundStatus::Satisfied : BoundStatus::Violated;
    return rec;
  }
  if (hessian_min == 0.0) {
    rec.drop_upper_bound_T2 = std::numeric_limits<double>::infinity();
    rec.status = BoundStatus::NotApplicable;
    return rec;
  }
  rec.drop_upper_bound_T2 = rec.grad_sq_norm / (4.0 * rec.M_hat * rec.M_hat);
  rec.status = rec.drop_observed <= rec.drop_upper_bound_T2 * (1.0 + tol) ? BoundStatus::Satisfied
                                                                          : BoundStatus::Violated;
  return rec;
}

inline BoundCheckRecord bound_check_one_step(const Weights& w, const Sample& sample,
                                             std::span<const double> x, double mu,
                                             double hessian_max, double hessian_min,
                                             double fd_step = 1e-4, double tol = 0.1) {
  validate_sample(sample, w.spec);
  const GradTarget target(grad_weights(w, sample));
  return bound_check_one_step(NetGradientMap(w, sample.y), x, target, mu, hessian_max,
                              hessian_min, fd_step, tol);
}

}  // namespace gilab
