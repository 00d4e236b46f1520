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
#include <set>

#include "gilab/errors.hpp"
#include "gilab/tensorcore.hpp"
#include "test_util.hpp"

namespace gilab {
namespace {

using testing::random_matrix;
using testing::random_psd;

TEST(Dot, OrthogonalVectors) { EXPECT_EQ(dot(Vector{1, 0}, Vector{0, 1}), 0.0); }

TEST(Dot, SelfDotIsSquaredNorm) { EXPECT_EQ(dot(Vector{2, 3}, Vector{2, 3}), 13.0); }

TEST(Dot, HandSummation) {
  const Vector a{1, 2, 3}, b{4, 5, 6};
  double want = 0.0;
  for (std::size_t i = 0; i < 3; ++i) want += a[i] * b[i];
  EXPECT_EQ(dot(a, b), want);
  EXPECT_EQ(dot(a, b), 32.0);
}

TEST(Dot, LengthMismatchThrows) { EXPECT_THROW(dot(Vector{1, 2}, Vector{1}), DimensionError); }

TEST(Dot, SymmetricAndBilinear) {
  SeededRng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Vector a = rand_normal_vector(rng, 7), b = rand_normal_vector(rng, 7),
                 c = rand_normal_vector(rng, 7);
    const double s = rng.normal();
    EXPECT_EQ(dot(a, b), dot(b, a));
    EXPECT_NEAR(dot(s * a + c, b), s * dot(a, b) + dot(c, b), 1e-12 * (1 + std::abs(s)) * 10);
  }
}

TEST(L2Norm, Examples) {
  EXPECT_EQ(l2_norm(Vector{0, 0, 0}), 0.0);
  EXPECT_EQ(l2_norm(Vector{3, 4}), 5.0);
  EXPECT_EQ(l2_norm(Vector{1, 1, 1, 1}), 2.0);
}

TEST(L2Norm, TriangleInequality) {
  SeededRng rng(4);
  for (int t = 0; t < 100; ++t) {
    const Vector a = rand_normal_vector(rng, 5), b = rand_normal_vector(rng, 5);
    EXPECT_LE(l2_norm(a + b), l2_norm(a) + l2_norm(b) + 1e-12);
  }
}

TEST(RandUnitVector, OneDimensionalIsPlusOrMinusOne) {
  SeededRng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Vector v = rand_unit_vector(rng, 1);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(std::abs(v[0]), 1.0);
  }
}

TEST(RandUnitVector, UnitNorm) {
  SeededRng rng(6);
  for (std::size_t d : {2u, 3u, 17u, 200u}) EXPECT_NEAR(l2_norm(rand_unit_vector(rng, d)), 1.0, 1e-12);
}

TEST(RandUnitVector, SameSeedSameVector) {
  SeededRng a(42), b(42);
  EXPECT_EQ(rand_unit_vector(a, 4), rand_unit_vector(b, 4));
}

TEST(RandUnitVector, ZeroDimensionThrows) {
  SeededRng rng(1);
  EXPECT_THROW(rand_unit_vector(rng, 0), ContractError);
}

TEST(SeededRng, StreamsAreIndependentAndReproducible) {
  const SeededRng master(9);
  SeededRng a = master.derive(1), b = master.derive(2), a2 = master.derive(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, a2.next_u64());
    seen.insert(x);
    seen.insert(b.next_u64());
  }
  EXPECT_EQ(seen.size(), 200u);
}

TEST(SeededRng, UniformAndBelowRanges) {
  SeededRng rng(10);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    ASSERT_LT(rng.below(7), 7u);
  }
  EXPECT_NEAR(sum / 20000, 0.5, 0.01);
}

TEST(SeededRng, NormalMoments) {
  SeededRng rng(11);
  double s1 = 0.0, s2 = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s1 += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s1 / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.03);
}

TEST(Shuffle, IsAPermutation) {
  SeededRng rng(12);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  shuffle(v, rng);
  std::multiset<int> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 50u);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(s.count(i), 1u);
}

TEST(Matvec, IdentityAndDiagonal) {
  const Vector v{0.5, -2, 7};
  EXPECT_EQ(matvec(Matrix::identity(3), v), v);
  EXPECT_EQ(matvec(Matrix::diagonal(Vector{3, 1}), Vector{1, 1}), (Vector{3, 1}));
}

TEST(MatvecT, HandComputation) {
  const Matrix m{{1, 2}, {3, 4}};
  // column sums of m
  EXPECT_EQ(matvec_t(m, Vector{1, 1}), (Vector{1 + 3, 2 + 4}));
}

TEST(MatvecT, GramPositivity) {
  SeededRng rng(13);
  for (int t = 0; t < 50; ++t) {
    const Matrix m = random_matrix(rng, 6, 4);
    const Vector v = rand_normal_vector(rng, 4);
    EXPECT_GE(dot(matvec_t(m, matvec(m, v)), v), 0.0);
  }
}

TEST(Matvec, ShapeMismatchThrows) {
  EXPECT_THROW(matvec(Matrix(2, 3), Vector{1, 2}), DimensionError);
  EXPECT_THROW(matvec_t(Matrix(2, 3), Vector{1, 2, 3}), DimensionError);
}

TEST(SymEigenDense, Diagonal) {
  const auto e = sym_eigen_dense(Matrix::diagonal(Vector{1, 9}));
  EXPECT_NEAR(e.values[0], 9.0, 1e-14);
  EXPECT_NEAR(e.values[1], 1.0, 1e-14);
}

TEST(SymEigenDense, TwoByTwoCharacteristicPolynomial) {
  const Matrix h{{2, 1}, {1, 2}};
  // roots of t^2 - tr t + det
  const double tr = 4.0, det = 3.0;
  const double disc = std::sqrt(tr * tr - 4 * det);
  const auto e = sym_eigen_dense(h);
  EXPECT_NEAR(e.values[0], (tr + disc) / 2, 1e-14);
  EXPECT_NEAR(e.values[1], (tr - disc) / 2, 1e-14);
  EXPECT_NEAR(e.values[0], 3.0, 1e-14);
  EXPECT_NEAR(e.values[1], 1.0, 1e-14);
}

TEST(SymEigenDense, ThreeByThreeCharacteristicPolynomial) {
  // tridiagonal [2 -1 0; -1 2 -1; 0 -1 2] has eigenvalues 2 - 2cos(k pi / 4)
  const Matrix h{{2, -1, 0}, {-1, 2, -1}, {0, -1, 2}};
  const auto e = sym_eigen_dense(h);
  const double pi = std::acos(-1.0);
  for (int k = 1; k <= 3; ++k) EXPECT_NEAR(e.values[3 - k], 2 - 2 * std::cos(k * pi / 4), 1e-13);
}

TEST(SymEigenDense, ZeroMatrix) {
  const auto e = sym_eigen_dense(Matrix(4, 4));
  for (double v : e.values) EXPECT_EQ(v, 0.0);
}

TEST(SymEigenDense, RejectsAsymmetric) {
  EXPECT_THROW(sym_eigen_dense(Matrix{{1, 2}, {0, 1}}), ContractError);
}

TEST(SymEigenDense, ReconstructionOrthogonalityAndRayleigh) {
  SeededRng rng(14);
  for (std::size_t n : {3u, 10u, 40u}) {
    const Matrix b = random_matrix(rng, n, n);
    Matrix h = b;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) h(i, j) = b(i, j) + b(j, i);
    const auto e = sym_eigen_dense(h);
    Matrix lam(n, n);
    for (std::size_t i = 0; i < n; ++i) lam(i, i) = e.values[i];
    const Matrix rec = matmul(matmul(e.vectors, lam), e.vectors.transposed());
    EXPECT_LE((h - rec).frobenius_norm(), 1e-8 * h.frobenius_norm());
    const Matrix vtv = matmul(e.vectors.transposed(), e.vectors);
    EXPECT_LE((vtv - Matrix::identity(n)).frobenius_norm(), 1e-10);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_GE(e.values[k], k + 1 < n ? e.values[k + 1] : -1e300);
      const Vector v = e.vectors.column(k);
      const double rq = dot(v, matvec(h, v)) / dot(v, v);
      EXPECT_LE(std::abs(rq - e.values[k]), 1e-8 * std::max(1.0, std::abs(e.values[k])));
    }
  }
}

TEST(SymEigenDense, PsdHasNonnegativeSpectrum) {
  SeededRng rng(15);
  const auto e = sym_eigen_dense(random_psd(rng, 12));
  for (double v : e.values) EXPECT_GE(v, -1e-10);
}

}  // namespace
}  // namespace gilab
