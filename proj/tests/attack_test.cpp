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

#include <gtest/gtest.h>

#include <cmath>

#include "gilab/attack.hpp"
#include "gilab/errors.hpp"
#include "gilab/gradient_map.hpp"
#include "gilab/lavp.hpp"
#include "test_util.hpp"

namespace gilab {
namespace {

using testing::random_image;

TEST(AdamStep, ZeroGradientLeavesImageUnchanged) {
  AttackConfig cfg;
  SeededRng rng(1);
  Vector x = random_image(rng, 16);
  const Vector x0 = x;
  AdamState st(16);
  for (std::size_t t = 1; t <= 20; ++t) adam_step(st, x, Vector(16), cfg, t);
  EXPECT_EQ(x, x0);
}

TEST(AdamStep, FirstStepMovesByLearningRate) {
  AttackConfig cfg;
  cfg.lr = 0.1;
  Vector x{0.5};
  AdamState st(1);
  adam_step(st, x, Vector{1.0}, cfg, 1);
  // m = 0.1, v = 0.001; bias correction gives mhat = vhat = 1.
  const double m = (1 - cfg.beta1) * 1.0, v = (1 - cfg.beta2) * 1.0;
  const double mhat = m / (1 - cfg.beta1), vhat = v / (1 - cfg.beta2);
  EXPECT_NEAR(x[0], 0.5 - 0.1 * mhat / (std::sqrt(vhat) + cfg.adam_eps), 1e-15);
  EXPECT_NEAR(x[0], 0.4, 1e-8);
}

TEST(AdamStep, ClampsToUnitBox) {
  AttackConfig cfg;
  Vector x{0.99, 0.01};
  AdamState st(2);
  adam_step(st, x, Vector{-1.0, 1.0}, cfg, 1);
  EXPECT_EQ(x[0], 1.0);
  EXPECT_EQ(x[1], 0.0);
}

TEST(AdamStep, RejectsStepZero) {
  AttackConfig cfg;
  Vector x{0.5};
  AdamState st(1);
  EXPECT_THROW(adam_step(st, x, Vector{1.0}, cfg, 0), ContractError);
}

TEST(AttackConfig, ValidateRejectsBadValues) {
  AttackConfig c;
  EXPECT_NO_THROW(c.validate());
  c.steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AttackConfig{};
  c.lr = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AttackConfig{};
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AttackConfig{};
  c.init_mode = InitMode::local_perturb(-0.1);
  EXPECT_THROW(c.validate(), ConfigError);
  c.init_mode = InitMode::local_perturb(0.0);
  EXPECT_NO_THROW(c.validate());
}

TEST(InitialImage, LocalPerturbOffsetsEveryPixelByMagnitude) {
  SeededRng rng(2);
  const Vector x_star(64, 0.5);
  const Vector x = initial_image(InitMode::local_perturb(0.1), x_star, rng);
  for (double v : x) EXPECT_NEAR(std::abs(v - 0.5), 0.1, 1e-15);
}

TEST(InitialImage, RandomUniformInUnitBox) {
  SeededRng rng(3);
  const Vector x = initial_image(InitMode::random_uniform(), Vector(100), rng);
  for (double v : x) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

struct AttackCase {
  Weights w;
  Sample s;
};

AttackCase make_case(std::uint64_t seed) {
  AttackCase c{testing::trained_default_net(seed), {}};
  SeededRng rng(seed + 1000);
  c.s = Sample{random_image(rng, 64), static_cast<std::size_t>(rng.below(4))};
  return c;
}

TEST(RunAttack, StartingAtGroundTruthStaysThere) {
  const auto c = make_case(4);
  AttackConfig cfg;
  cfg.init_mode = InitMode::local_perturb(0.0);
  cfg.steps = 20;
  cfg.restarts = 1;
  for (GradLossKind kind : {GradLossKind::L2, GradLossKind::Cosine}) {
    cfg.kind = kind;
    const auto r = run_attack(cfg, c.w, GradTarget(grad_weights(c.w, c.s)), c.s, ImageShape{});
    EXPECT_EQ(r.x_rec, c.s.x);
    EXPECT_LE(r.final_gm_loss, 1e-10);
  }
}

TEST(RunAttack, LocalModeConvergesOnLogisticRegression) {
  const Weights w = testing::random_logistic(5, 64, 4, 0.3);
  SeededRng rng(6);
  Vector x(64);
  for (double& v : x) v = rng.uniform(0.2, 0.8);
  const Sample s{x, 1};
  AttackConfig cfg;
  cfg.init_mode = InitMode::local_perturb(0.1);
  cfg.alpha_tv = 0.0;
  cfg.lr = 0.01;
  cfg.restarts = 1;
  cfg.seed = 7;
  const auto r = run_attack(cfg, w, GradTarget(grad_weights(w, s)), s, ImageShape{});
  EXPECT_LE(r.final_gm_loss, r.per_restart_initial[0] / 100);
}

TEST(RunAttack, ChoosesLowestFinalLoss) {
  const auto c = make_case(8);
  AttackConfig cfg;
  cfg.steps = 30;
  cfg.restarts = 3;
  cfg.seed = 9;
  const auto r = run_attack(cfg, c.w, GradTarget(grad_weights(c.w, c.s)), c.s, ImageShape{});
  ASSERT_EQ(r.per_restart_final.size(), 3u);
  EXPECT_EQ(r.final_gm_loss, *std::min_element(r.per_restart_final.begin(), r.per_restart_final.end()));
  EXPECT_EQ(r.final_gm_loss, r.per_restart_final[r.chosen_restart]);
  EXPECT_EQ(r.x_rec, r.per_restart_x[r.chosen_restart]);
  // distinct restart seeds give distinct starting points
  EXPECT_NE(r.per_restart_initial[0], r.per_restart_initial[1]);
}

TEST(RunAttack, DeterministicForFixedSeed) {
  const auto c = make_case(10);
  AttackConfig cfg;
  cfg.steps = 25;
  cfg.seed = 11;
  const GradTarget t(grad_weights(c.w, c.s));
  const auto a = run_attack(cfg, c.w, t, c.s, ImageShape{});
  const auto b = run_attack(cfg, c.w, t, c.s, ImageShape{});
  EXPECT_EQ(a.x_rec, b.x_rec);
  EXPECT_EQ(a.loss_trajectory, b.loss_trajectory);
  EXPECT_EQ(a.per_restart_final, b.per_restart_final);
}

TEST(RunAttack, WindowedMinimaNonIncreasing) {
  const auto c = make_case(12);
  AttackConfig cfg;
  cfg.steps = 300;
  cfg.restarts = 1;
  cfg.seed = 13;
  const auto r = run_attack(cfg, c.w, GradTarget(grad_weights(c.w, c.s)), c.s, ImageShape{});
  // Minimum of the trajectory up to the end of each 50-step window.
  double best = std::numeric_limits<double>::infinity();
  double prev_window_min = best;
  for (std::size_t w0 = 0; w0 < r.loss_trajectory.size(); w0 += 50) {
    for (std::size_t i = w0; i < std::min(w0 + 50, r.loss_trajectory.size()); ++i)
      best = std::min(best, r.loss_trajectory[i]);
    EXPECT_LE(best, prev_window_min);
    prev_window_min = best;
  }
  EXPECT_LT(r.final_gm_loss, r.per_restart_initial[0]);
}

TEST(RunAttack, AllRestartsDegenerateThrows) {
  // g(x) = 0 everywhere: cosine distance is undefined on every restart.
  const AffineGradientMap map(Matrix(3, 4));
  AttackConfig cfg;
  cfg.kind = GradLossKind::Cosine;
  cfg.steps = 5;
  EXPECT_THROW(run_attack_on_map(cfg, map, GradTarget(Vector{1, 0, 0}), Vector(4, 0.5),
                                 ImageShape{2, 2}),
               AttackFailedError);
}

TEST(RunAttack, RejectsMismatchedShape) {
  const auto c = make_case(14);
  AttackConfig cfg;
  EXPECT_THROW(run_attack(cfg, c.w, GradTarget(grad_weights(c.w, c.s)), c.s, ImageShape{4, 4}),
               DimensionError);
}

TEST(BoundCheck, GroundTruthIsSatisfied) {
  const auto c = make_case(15);
  const auto p = compute_proxies(c.w, c.s, 0, ProxyConfig{}, SeededRng(1));
  const double hmax = hessian_of_gm_loss(p.l2_max), hmin = hessian_of_gm_loss(p.l2_min);
  const auto rec = bound_check_one_step(c.w, c.s, c.s.x, 0.1 / hmax, hmax, hmin);
  EXPECT_TRUE(rec.satisfied());
  EXPECT_LE(rec.drop_observed, 1e-20);
  EXPECT_LE(rec.drop_upper_bound_T2, 1e-12);
}

// Quadratic toy g(x) = A x: with r = A (x - x*) the loss is |r|^2, its
// gradient 2 A^T r, and one step of size mu leaves r - 2 mu A A^T r.
TEST(BoundCheck, QuadraticClosedForm) {
  SeededRng rng(16);
  const Matrix a = testing::random_matrix(rng, 6, 4);
  const AffineGradientMap map(a);
  const Vector x_star = random_image(rng, 4);
  const GradTarget target(map(x_star));
  const auto eig = sym_eigen_dense(matmul(a.transposed(), a));
  const double smax2 = eig.values[0], smin2 = eig.values[3];
  const double hmax = 2 * smax2, hmin = 2 * smin2;
  for (int t = 0; t < 20; ++t) {
    const Vector x = x_star + 0.1 * rand_unit_vector(rng, 4);
    const double mu = rng.uniform(0.01, 0.99) / hmax;
    const Vector r = matvec(a, x - x_star);
    const Vector grad = 2.0 * matvec_t(a, r);
    const Vector r_after = r - 2.0 * mu * matvec(a, matvec_t(a, r));
    const double drop = dot(r, r) - dot(r_after, r_after);
    const double bound = dot(grad, grad) / (4 * smin2);
    const auto rec = bound_check_one_step(map, x, target, mu, hmax, hmin, 1e-4, 0.0);
    EXPECT_NEAR(rec.drop_observed, drop, 1e-9 * std::abs(drop));
    EXPECT_NEAR(rec.drop_upper_bound_T2, bound, 1e-9 * bound);
    EXPECT_NEAR(rec.L_hat * rec.L_hat, smax2, 1e-12 * smax2);
    EXPECT_NEAR(rec.M_hat * rec.M_hat, smin2, 1e-12 * smax2);
    EXPECT_TRUE(rec.satisfied());
    EXPECT_GE(rec.drop_observed, rec.drop_lower_bound_T1 * (1 - 1e-9));
  }
}

TEST(BoundCheck, DropVanishesWithStepSize) {
  const auto c = make_case(17);
  SeededRng rng(18);
  AttackConfig cfg;
  const Vector x = initial_image(InitMode::local_perturb(0.1), c.s.x, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double mu : {1e-3, 1e-4, 1e-5, 1e-6, 1e-7}) {
    const auto rec = bound_check_one_step(c.w, c.s, x, mu, 2.0, 1.0);
    EXPECT_GT(rec.drop_observed, 0.0);
    EXPECT_LT(rec.drop_observed, prev);
    prev = rec.drop_observed;
  }
  EXPECT_LT(prev, 1e-3 * bound_check_one_step(c.w, c.s, x, 1e-3, 2.0, 1.0).drop_observed);
}

TEST(BoundCheck, ZeroMinimumCurvatureIsNotApplicable) {
  const auto c = make_case(19);
  SeededRng rng(20);
  const Vector x = initial_image(InitMode::local_perturb(0.1), c.s.x, rng);
  const auto rec = bound_check_one_step(c.w, c.s, x, 1e-3, 1.0, 0.0);
  EXPECT_EQ(rec.status, BoundStatus::NotApplicable);
  EXPECT_TRUE(std::isinf(rec.drop_upper_bound_T2));
  EXPECT_THROW(bound_check_one_step(c.w, c.s, x, 1e-3, 1.0, 2.0), ContractError);
}

}  // namespace
}  // namespace gilab
