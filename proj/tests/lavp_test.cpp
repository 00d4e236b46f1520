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

#include "gilab/errors.hpp"
#include "gilab/gradient_map.hpp"
#include "gilab/lavp.hpp"
#include "test_util.hpp"

namespace gilab {
namespace {

using testing::random_image;
using testing::rel_err;

struct NetCase {
  Weights w;
  Sample s;
};

NetCase default_case(std::uint64_t seed) {
  NetCase c{testing::trained_default_net(seed), {}};
  SeededRng rng(seed + 100);
  c.s = Sample{random_image(rng, 64), static_cast<std::size_t>(rng.below(4))};
  return c;
}

HvpOperator<NetGradientMap> net_operator(const NetCase& c, GradLossKind kind) {
  return HvpOperator<NetGradientMap>(kind, NetGradientMap(c.w, c.s.y), c.s.x,
                                     GradTarget(grad_weights(c.w, c.s)));
}

HvpOperator<AffineGradientMap> diag_operator(GradLossKind kind) {
  // g(x) = A x with A = [[3,0],[0,1],[0,0]]; x* = (1,0) so g* = (3,0,0).
  const Matrix a{{3, 0}, {0, 1}, {0, 0}};
  const AffineGradientMap map(a);
  const Vector x_star{1, 0};
  return HvpOperator<AffineGradientMap>(kind, map, x_star, GradTarget(map(x_star)));
}

TEST(Jvp, LogisticRegressionMatchesClosedFormJacobian) {
  const Weights w = testing::random_logistic(1, 16, 3);
  SeededRng rng(2);
  const Sample s{random_image(rng, 16), 1};
  const HvpOperator<NetGradientMap> op(GradLossKind::L2, NetGradientMap(w, s.y), s.x,
                                       GradTarget(grad_weights(w, s)));
  const Matrix jac = testing::logistic_jacobian(w, s.x, s.y);
  for (int t = 0; t < 10; ++t) {
    const Vector v = rand_unit_vector(rng, 16);
    const Vector got = op.jvp(v), want = matvec(jac, v);
    EXPECT_LE(l2_norm(got - want), 1e-6 * std::max(1.0, l2_norm(want)));
  }
}

TEST(Jvp, OddInDirection) {
  const auto c = default_case(3);
  const auto op = net_operator(c, GradLossKind::L2);
  SeededRng rng(4);
  const Vector v = rand_unit_vector(rng, 64);
  const Vector a = op.jvp(v), b = op.jvp(-1.0 * v);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], -b[i], 1e-10);
}

TEST(Jvp, LinearInDirection) {
  const auto c = default_case(5);
  const auto op = net_operator(c, GradLossKind::L2);
  SeededRng rng(6);
  const Vector v1 = rand_unit_vector(rng, 64), v2 = rand_unit_vector(rng, 64);
  const double a = 0.7, b = -1.3;
  const Vector lhs = op.jvp(a * v1 + b * v2);
  const Vector rhs = a * op.jvp(v1) + b * op.jvp(v2);
  EXPECT_LE(l2_norm(lhs - rhs), 1e-6 * l2_norm(rhs));
}

TEST(Vjp, MatchesTransposeOfJvp) {
  const auto c = default_case(7);
  const auto op = net_operator(c, GradLossKind::L2);
  SeededRng rng(8);
  const Vector v = rand_unit_vector(rng, 64);
  const Vector u = rand_unit_vector(rng, op.map().output_dim());
  EXPECT_NEAR(dot(op.jvp(v), u), dot(v, op.vjp(u)), 1e-7 * l2_norm(op.vjp(u)));
}

TEST(Hvp, LinearL2IsGram) {
  const auto op = diag_operator(GradLossKind::L2);
  const Vector r = hvp(op, Vector{1, 0});
  EXPECT_NEAR(r[0], 9.0, 1e-9);
  EXPECT_NEAR(r[1], 0.0, 1e-9);
}

TEST(Hvp, LinearCosineProjectsOutTargetDirection) {
  const auto op = diag_operator(GradLossKind::Cosine);
  const Vector r1 = hvp(op, Vector{1, 0});
  EXPECT_NEAR(r1[0], 0.0, 1e-10);
  EXPECT_NEAR(r1[1], 0.0, 1e-10);
  const Vector r2 = hvp(op, Vector{0, 1});
  EXPECT_NEAR(r2[0], 0.0, 1e-10);
  EXPECT_NEAR(r2[1], 1.0 / 9.0, 1e-10);
}

TEST(Hvp, SymmetricOnNet) {
  const auto c = default_case(9);
  SeededRng rng(10);
  for (GradLossKind kind : {GradLossKind::L2, GradLossKind::Cosine}) {
    const auto op = net_operator(c, kind);
    for (int t = 0; t < 5; ++t) {
      const Vector u = rand_unit_vector(rng, 64), v = rand_unit_vector(rng, 64);
      const Vector hu = hvp(op, u), hv = hvp(op, v);
      EXPECT_NEAR(dot(hu, v), dot(u, hv), 1e-6 * std::max(l2_norm(hu), l2_norm(hv)));
    }
  }
}

TEST(Hvp, RejectsBadSteps) {
  const Matrix a{{1, 0}, {0, 1}};
  EXPECT_THROW(HvpOperator<AffineGradientMap>(GradLossKind::L2, AffineGradientMap(a), Vector{1, 0},
                                              GradTarget(Vector{1, 0}), 0.0),
               ContractError);
}

TEST(MaxEigenPower, Diagonal) {
  const auto e = max_eigen_power(DenseOperator(Matrix::diagonal(Vector{9, 1})), PowerConfig{},
                                 SeededRng(1));
  EXPECT_NEAR(e.value, 9.0, 1e-8);
  EXPECT_TRUE(e.converged);
}

TEST(MaxEigenPower, DegenerateTopConvergesImmediately) {
  const auto e = max_eigen_power(DenseOperator(Matrix::diagonal(Vector{5, 5})), PowerConfig{},
                                 SeededRng(2));
  EXPECT_NEAR(e.value, 5.0, 1e-12);
  EXPECT_EQ(e.iterations, 1u);
}

TEST(MaxEigenPower, RandomPsdMatchesDenseSolver) {
  SeededRng rng(3);
  for (int t = 0; t < 5; ++t) {
    const Matrix h = testing::random_psd(rng, 10);
    const double want = sym_eigen_dense(h).values[0];
    const auto e = max_eigen_power(DenseOperator(h), PowerConfig{5000, 1e-12}, rng.derive(t));
    EXPECT_LE(rel_err(e.value, want), 1e-6);
  }
}

TEST(MaxEigenPower, ZeroOperatorIsZero) {
  const auto e = max_eigen_power(DenseOperator(Matrix(3, 3)), PowerConfig{}, SeededRng(4));
  EXPECT_EQ(e.value, 0.0);
}

// diag(4, 1) that maps every vector to zero on its first application, as if
// the start vector lay in the null space.
struct StallingOperator {
  mutable int calls = 0;
  std::size_t dimension() const { return 2; }
  Vector apply(std::span<const double> v) const {
    if (calls++ == 0) return Vector(2);
    return Vector{4 * v[0], v[1]};
  }
};

TEST(MaxEigenPower, RestartsFromFixedVectorAfterNullStart) {
  const StallingOperator op;
  const auto e = max_eigen_power(op, PowerConfig{}, SeededRng(5));
  EXPECT_NEAR(e.value, 4.0, 1e-8);
  EXPECT_TRUE(e.converged);
  EXPECT_GT(op.calls, 2);
}

TEST(MaxEigenPower, ReportsNonConvergence) {
  SeededRng rng(6);
  const auto e = max_eigen_power(DenseOperator(testing::random_psd(rng, 30)), PowerConfig{3, 1e-12},
                                 SeededRng(7));
  EXPECT_FALSE(e.converged);
  EXPECT_EQ(e.iterations, 3u);
}

TEST(MaxEigenPower, RejectsBadConfig) {
  const DenseOperator op(Matrix::identity(2));
  EXPECT_THROW(max_eigen_power(op, PowerConfig{0, 1e-9}, SeededRng(1)), ContractError);
  EXPECT_THROW(max_eigen_power(op, PowerConfig{10, 0.0}, SeededRng(1)), ContractError);
}

TEST(MinEigenDeflate, Diagonal) {
  const DenseOperator op(Matrix::diagonal(Vector{9, 1}));
  const auto e = min_eigen_deflate(op, 9.0, PowerConfig{}, SeededRng(6));
  EXPECT_NEAR(e.value, 1.0, 1e-8);
}

TEST(MinEigenDeflate, CosineLinearHasNullDirection) {
  const auto op = diag_operator(GradLossKind::Cosine);
  const auto top = max_eigen_power(op, PowerConfig{}, SeededRng(7));
  EXPECT_NEAR(top.value, 1.0 / 9.0, 1e-10);
  const auto bot = min_eigen_deflate(op, top.value, PowerConfig{}, SeededRng(8));
  EXPECT_NEAR(bot.value, 0.0, 1e-10);
  const auto oracle = sym_eigen_dense(dense_hessian_oracle(op).h);
  EXPECT_NEAR(oracle.values[1], 0.0, 1e-10);
}

TEST(MinEigenDeflate, ScaledIdentity) {
  const DenseOperator op(Matrix::diagonal(Vector{2.5, 2.5, 2.5}));
  const auto e = min_eigen_deflate(op, 2.5, PowerConfig{}, SeededRng(9));
  EXPECT_NEAR(e.value, 2.5, 1e-9 * 2.5);
}

TEST(GradNormProxy, SaturatedSampleIsNearZero) {
  const NetSpec spec{{2, 2}, Activation::Tanh, 1.0};
  const Weights w{spec, Vector{30, 0, -30, 0, 0, 0}};
  EXPECT_LT(grad_norm_proxy(w, Sample{Vector{1, 0}, 0}), 1e-6);
}

TEST(GradNormProxy, ScalesWithLossScale) {
  auto c = default_case(11);
  const double base = grad_norm_proxy(c.w, c.s);
  c.w.spec.loss_scale = 3.0;
  EXPECT_LE(rel_err(grad_norm_proxy(c.w, c.s), 3.0 * base), 1e-14);
}

TEST(GradNormProxy, IsNormOfGradient) {
  const auto c = default_case(12);
  EXPECT_EQ(grad_norm_proxy(c.w, c.s), l2_norm(grad_weights(c.w, c.s)));
}

TEST(FusionGeomean, Examples) {
  EXPECT_EQ(fusion_geomean(4, 9), 6.0);
  EXPECT_EQ(fusion_geomean(3.7, 0), 0.0);
  EXPECT_NEAR(fusion_geomean(2.2, 2.2), 2.2, 1e-15);
  EXPECT_THROW(fusion_geomean(-1, 1), ContractError);
}

TEST(DenseHessianOracle, LinearModelIsGram) {
  SeededRng rng(13);
  const Matrix a = testing::random_matrix(rng, 7, 4);
  const AffineGradientMap map(a);
  const Vector x_star = random_image(rng, 4);
  const HvpOperator<AffineGradientMap> op(GradLossKind::L2, map, x_star, GradTarget(map(x_star)));
  const auto dh = dense_hessian_oracle(op);
  const Matrix ata = matmul(a.transposed(), a);
  EXPECT_LE((dh.h - ata).frobenius_norm(), 1e-8 * std::max(1.0, ata.frobenius_norm()));
}

TEST(DenseHessianOracle, BracketsPowerIterationAndIsNearlySymmetric) {
  const auto c = default_case(14);
  for (GradLossKind kind : {GradLossKind::L2, GradLossKind::Cosine}) {
    const auto op = net_operator(c, kind);
    const auto dh = dense_hessian_oracle(op);
    EXPECT_LE(dh.raw_asymmetry, 1e-5) << to_string(kind);
    const auto eig = sym_eigen_dense(dh.h);
    const double top = eig.values[0], bottom = eig.values[eig.values.size() - 1];
    const auto mx = max_eigen_power(op, PowerConfig{}, SeededRng(1));
    const auto mn = min_eigen_deflate(op, mx.value, PowerConfig{}, SeededRng(2));
    const double slack = 1e-6 * top;
    for (double v : {mx.value, mn.value}) {
      EXPECT_LE(v, top + slack);
      EXPECT_GE(v, std::max(bottom, 0.0) - slack);
    }
    EXPECT_LE(rel_err(mx.value, top), 1e-6) << to_string(kind);
  }
}

TEST(Lavp, RayleighQuotientsAreNonnegative) {
  const auto c = default_case(15);
  SeededRng rng(16);
  for (GradLossKind kind : {GradLossKind::L2, GradLossKind::Cosine}) {
    const auto op = net_operator(c, kind);
    const double lmax = max_eigen_power(op, PowerConfig{}, SeededRng(1)).value;
    for (int t = 0; t < 30; ++t) {
      const Vector v = rand_unit_vector(rng, 64);
      EXPECT_GE(dot(v, hvp(op, v)), -1e-8 * lmax);
    }
  }
}

TEST(Lavp, PowerResultDominatesRandomRayleighQuotients) {
  const auto c = default_case(17);
  for (GradLossKind kind : {GradLossKind::L2, GradLossKind::Cosine}) {
    const auto op = net_operator(c, kind);
    const double lmax = max_eigen_power(op, PowerConfig{}, SeededRng(1)).value;
    SeededRng rng(18);
    for (int t = 0; t < 20; ++t) {
      const Vector v = rand_unit_vector(rng, 64);
      EXPECT_LE(dot(v, hvp(op, v)), lmax * (1 + 1e-9));
    }
    EXPECT_LE(max_eigen_randomized(op, 20, SeededRng(19)), lmax * (1 + 1e-9));
  }
}

TEST(Lavp, SandwichOnSmallPerturbations) {
  const auto c = default_case(20);
  const NetGradientMap map(c.w, c.s.y);
  const GradTarget target(grad_weights(c.w, c.s));
  SeededRng rng(21);
  for (GradLossKind kind : {GradLossKind::L2, GradLossKind::Cosine}) {
    const auto op = net_operator(c, kind);
    const auto dh = sym_eigen_dense(dense_hessian_oracle(op).h);
    const double lmax = dh.values[0], lmin = std::max(dh.values[63], 0.0);
    const double tol = 1e-3 * lmax;
    // L2 loss is |g - g*|^2 while the operator is the Hessian of half of it.
    const double factor = kind == GradLossKind::L2 ? 0.5 : 1.0;
    for (int t = 0; t < 20; ++t) {
      const Vector dx = 1e-3 * rand_unit_vector(rng, 64);
      const double ratio = factor * gm_loss(kind, map(c.s.x + dx), target) / dot(dx, dx);
      EXPECT_GE(ratio, lmin / 2 - tol);
      EXPECT_LE(ratio, lmax / 2 + tol);
    }
  }
}

TEST(ComputeProxies, LossScaleCovariance) {
  auto c = default_case(22);
  const ProxyConfig cfg;
  const auto base = compute_proxies(c.w, c.s, 0, cfg, SeededRng(1));
  c.w.spec.loss_scale = 7.0;
  const auto scaled = compute_proxies(c.w, c.s, 0, cfg, SeededRng(1));
  EXPECT_LE(rel_err(scaled.grad_norm, 7 * base.grad_norm), 1e-12);
  EXPECT_LE(rel_err(scaled.l2_max, 49 * base.l2_max), 1e-6);
  EXPECT_LE(rel_err(scaled.l2_min, 49 * base.l2_min), 1e-6);
  EXPECT_LE(rel_err(scaled.cos_max, base.cos_max), 1e-6);
  EXPECT_LE(rel_err(scaled.cos_min, base.cos_min), 1e-6);
}

TEST(ComputeProxies, DeterministicAndConsistent) {
  const auto c = default_case(23);
  const auto a = compute_proxies(c.w, c.s, 4, ProxyConfig{}, SeededRng(2));
  const auto b = compute_proxies(c.w, c.s, 4, ProxyConfig{}, SeededRng(2));
  EXPECT_EQ(a.l2_max, b.l2_max);
  EXPECT_EQ(a.cos_min, b.cos_min);
  EXPECT_EQ(a.sample_id, 4u);
  EXPECT_LE(a.l2_min, a.l2_max);
  EXPECT_LE(a.cos_min, a.cos_max);
  EXPECT_EQ(a.fusion, fusion_geomean(a.l2_max, a.cos_min));
  EXPECT_EQ(a.grad_norm, grad_norm_proxy(c.w, c.s));
}

}  // namespace
}  // namespace gilab
