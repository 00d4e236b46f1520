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

#pragma once

#include <concepts>
#include <cstddef>
#include <span>

#include "gilab/tensorcore.hpp"

namespace gilab {

// A differentiable map from an input image x (length input_dim) to a weight
// gradient g(x) (length output_dim). The network's x -> g_w(x, y) is the
// production instance; affine maps stand in for it in closed-form checks.
template <class M>
concept GradientMap = requires(const M& m, std::span<const double> x) {
  { m.input_dim() } -> std::convertible_to<std::size_t>;
  { m.output_dim() } -> std::convertible_to<std::size_t>;
  { m(x) } -> std::same_as<Vector>;
};

// g(x) = A x + b
class AffineGradientMap {
 public:
  explicit AffineGradientMap(Matrix a) : a_(std::move(a)), b_(a_.rows()) {}
  AffineGradientMap(Matrix a, Vector b) : a_(std::move(a)), b_(std::move(b)) {
    require_same_length(a_.rows(), b_.size(), "AffineGradientMap");
  }

  std::size_t input_dim() const { return a_.cols(); }
  std::size_t output_dim() const { return a_.rows(); }
  Vector operator()(std::span<const double> x) const { return matvec(a_, x) + b_; }

  const Matrix& matrix() const { return a_; }

 private:
  Matrix a_;
  Vector b_;
};

// Dense Jacobian of m at x by central differences, one column per input
// coordinate.
template <GradientMap M>
Matrix fd_jacobian(const M& m, std::span<const double> x, double step) {
  const std::size_t d = m.input_dim();
  Matrix jac(m.output_dim(), d);
  Vector probe(x);
  for (std::size_t i = 0; i < d; ++i) {
    const double xi = probe[i];
    probe[i] = xi + step;
    const Vector hi = m(probe);
    probe[i] = xi - step;
    const Vector lo = m(probe);
    probe[i] = xi;
    for (std::size_t r = 0; r < jac.rows(); ++r) jac(r, i) = (hi[r] - lo[r]) / (2.0 * step);
  }
  return jac;
}

}  // namespace gilab
