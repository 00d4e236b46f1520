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

// Loss-aware vulnerability proxies: extreme eigenvalues of the
// gradient-matching Hessian at the ground-truth input, computed matrix-free.
//
// Eigenvalue conventions, fixed for the whole library:
//   L2      H = J^T J
//   Cosine  H = (1/|g*|^2) J^T (I - gh gh^T) J,   gh = g*/|g*|
// where J is the Jacobian of x -> g(x) at x*. H_cos is the exact Hessian of
// the cosine distance; H_L2 is the Hessian of (1/2)|g - g*|^2, i.e. half the
// Hessian of gm_loss(L2).

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <string>

#include "gilab/errors.hpp"
#include "gilab/gradient_map.hpp"
#include "gilab/gradmatch.hpp"
#include "gilab/smallnet.hpp"
#include "gilab/tensorcore.hpp"

namespace gilab {

template <class Op>
concept SymmetricOperator = requires(const Op& op, std::span<const double> v) {
  { op.dimension() } -> std::convertible_to<std::size_t>;
  { op.apply(v) } -> std::same_as<Vector>;
};

class DenseOperator {
 public:
  explicit DenseOperator(Matrix m) : m_(std::move(m)) {
    if (!m_.square()) throw ContractError("DenseOperator: matrix must be square");
  }
  std::size_t dimension() const { return m_.rows(); }
  Vector apply(std::span<const double> v) const { return matvec(m_, v); }

 private:
  Matrix m_;
};

// v -> shift * v - op(v). Its top eigenvalue is shift - lambda_min(op).
template <SymmetricOperator Op>
class ShiftedOperator {
 public:
  ShiftedOperator(const Op& op, double shift) : op_(&op), shift_(shift) {}
  std::size_t dimension() const { return op_->dimension(); }
  Vector apply(std::span<const double> v) const {
    Vector out = op_->apply(v);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = shift_ * v[i] - out[i];
    return out;
  }

 private:
  const Op* op_;
  double shift_;
};

// Matrix-free Hessian of the gradient-matching loss at x*.
template <GradientMap M>
class HvpOperator {
 public:
  HvpOperator(GradLossKind kind, M map, Vector x_star, GradTarget target,
              double jvp_step = 1e-4, double vjp_step = 1e-4)
      : kind_(kind),
        map_(std::move(map)),
        x_star_(std::move(x_star)),
        target_(std::move(target)),
        jvp_step_(jvp_step),
        vjp_step_(vjp_step) {
    require_same_length(x_star_.size(), map_.input_dim(), "HvpOperator: x*");
    require_same_length(target_.size(), map_.output_dim(), "HvpOperator: g*");
    if (!(jvp_step_ > 0.0) || !(vjp_step_ > 0.0))
      throw ContractError("HvpOperator: finite-difference steps must be positive");
  }

  GradLossKind kind() const { return kind_; }
  std::size_t dimension() const { return x_star_.size(); }
  const M& map() const { return map_; }
  const Vector& x_star() const { return x_star_; }
  const GradTarget& target() const { return target_; }
  double jvp_step() const { return jvp_step_; }

  // (g(x* + h v) - g(x* - h v)) / 2h, an estimate of J v.
  Vector jvp(std::span<const double> v) const {
    require_same_length(v.size(), dimension(), "jvp");
    const double h = jvp_step_;
    Vector probe(x_star_);
    axpy(h, v, probe);
    const Vector hi = map_(probe);
    probe = x_star_;
    axpy(-h, v, probe);
    const Vector lo = map_(probe);
    Vector out(hi.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (hi[i] - lo[i]) / (2.0 * h);
    return out;
  }

  // J^T u, coordinate i being the central difference of x -> <g(x), u>.
  Vector vjp(std::span<const double> u) const {
    require_same_length(u.size(), map_.output_dim(), "vjp");
    const double h = vjp_step_;
    Vector out(dimension());
    Vector probe(x_star_);
    for (std::size_t i = 0; i < dimension(); ++i) {
      const double xi = probe[i];
      probe[i] = xi + h;
      const double hi = dot(map_(probe), u);
      probe[i] = xi - h;
      const double lo = dot(map_(probe), u);
      probe[i] = xi;
      out[i] = (hi - lo) / (2.0 * h);
    }
    return out;
  }

  // Applies (1/|g*|^2)(I - gh gh^T) in place for the cosine kind.
  void project(Vector& jv) const {
    if (kind_ != GradLossKind::Cosine) return;
    const auto& gs = target_.g_star();
    const double n2 = target_.norm() * target_.norm();
    const double along = dot(jv, gs) / n2;
    for (std::size_t i = 0; i < jv.size(); ++i) jv[i] = (jv[i] - along * gs[i]) / n2;
  }

  Vector apply(std::span<const double> v) const {
    Vector jv = jvp(v);
    project(jv);
    return vjp(jv);
  }

 private:
  GradLossKind kind_;
  M map_;
  Vector x_star_;
  GradTarget target_;
  double jvp_step_;
  double vjp_step_;
};

template <SymmetricOperator Op>
Vector hvp(const Op& op, std::span<const double> v) {
  return op.apply(v);
}

struct PowerConfig {
  std::size_t max_iters = 500;
  double tol = 1e-9;  // relative change of the Rayleigh quotient
};

struct EigenEstimate {
  double value = 0.0;      // after clamping at zero
  double raw_value = 0.0;  // before clamping
  double residual = 0.0;   // |H v - lambda v| for the returned vector
  std::size_t iterations = 0;
  bool converged = false;  // a stopping rule fired before max_iters
  Vector vector;
};

namespace detail {

template <SymmetricOperator Op>
EigenEstimate power_iterate(const Op& op, const PowerConfig& cfg, SeededRng& rng) {
  if (cfg.max_iters < 1) throw ContractError("power iteration: max_iters must be >= 1");
  if (!(cfg.tol > 0.0)) throw ContractError("power iteration: tol must be positive");
  const std::size_t d = op.dimension();
  Vector v = rand_unit_vector(rng, d);
  bool restarted = false;
  bool stopped = false;
  double prev = std::numeric_limits<double>::quiet_NaN();
  EigenEstimate est;
  for (std::size_t it = 1; it <= cfg.max_iters && !stopped; ++it) {
    const Vector w = op.apply(v);
    const double lam = dot(v, w);
    double res2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double r = w[i] - lam * v[i];
      res2 += r * r;
    }
    est.raw_value = lam;
    est.residual = std::sqrt(res2);
    est.iterations = it;
    est.vector = v;
    const double wn = l2_norm(w);
    if (!(wn > 1e-300)) {
      // v lies in the null space; retry once from a fixed vector.
      if (restarted) {
        stopped = true;
        break;
      }
      restarted = true;
      v = Vector(d, 1.0 / std::sqrt(static_cast<double>(d)));
      prev = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double scale = std::abs(lam);
    if (est.residual <= cfg.tol * scale ||
        (it > 1 && std::abs(lam - prev) < cfg.tol * scale)) {
      stopped = true;
      break;
    }
    for (std::size_t i = 0; i < d; ++i) v[i] = w[i] / wn;
    prev = lam;
  }
  est.converged = stopped;
  return est;
}

}  // namespace detail

// Dominant eigenvalue of a positive semi-definite operator by power iteration
// from a seeded random unit vector.
template <SymmetricOperator Op>
EigenEstimate max_eigen_power(const Op& op, const PowerConfig& cfg, SeededRng rng) {
  EigenEstimate est = detail::power_iterate(op, cfg, rng);
  est.value = std::max(est.raw_value, 0.0);
  return est;
}

// Smallest eigenvalue via power iteration on lambda_max I - H. The residual is
// that of the shifted operator, which shares eigenvectors with H.
template <SymmetricOperator Op>
EigenEstimate min_eigen_deflate(const Op& op, double lambda_max, const PowerConfig& cfg,
                                SeededRng rng) {
  const ShiftedOperator<Op> shifted(op, lambda_max);
  EigenEstimate est = detail::power_iterate(shifted, cfg, rng);
  est.raw_value = lambda_max - est.raw_value;
  est.value = std::max(est.raw_value, 0.0);
  return est;
}

// Cross-check estimator: the largest of `trials` Rayleigh quotients at fresh
// random unit vectors. Always a lower bound on lambda_max.
template <SymmetricOperator Op>
double max_eigen_randomized(const Op& op, std::size_t trials, SeededRng rng) {
  double best = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    const Vector v = rand_unit_vector(rng, op.dimension());
    best = std::max(best, dot(v, op.apply(v)));
  }
  return best;
}

inline double grad_norm_proxy(const Weights& w, const Sample& s) {
  return l2_norm(grad_weights(w, s));
}

inline double fusion_geomean(double l2_max, double cos_min) {
  if (l2_max < 0.0 || cos_min < 0.0) throw ContractError("fusion_geomean: negative input");
  return std::sqrt(l2_max * cos_min);
}

struct DenseHessian {
  Matrix h;               // symmetrized
  double raw_asymmetry;   // |H - H^T| / |H| before symmetrizing
};

// Brute-force Hessian: column i is the operator applied to basis vector e_i.
// Finite-difference noise makes the raw matrix slightly asymmetric; the
// asymmetry is reported and the returned matrix is symmetrized.
template <SymmetricOperator Op>
DenseHessian dense_hessian_oracle(const Op& op) {
  const std::size_t d = op.dimension();
  Matrix h(d, d);
  Vector e(d);
  for (std::size_t i = 0; i < d; ++i) {
    e[i] = 1.0;
    const Vector col = op.apply(e);
    e[i] = 0.0;
    for (std::size_t r = 0; r < d; ++r) h(r, i) = col[r];
  }

  const double norm = h.frobenius_norm();
  const double asym = norm > 0.0 ? (h - h.transposed()).frobenius_norm() / norm : 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double s = 0.5 * (h(i, j) + h(j, i));
      h(i, j) = s;
      h(j, i) = s;
    }
  return {std::move(h), asym};
}

struct ProxyConfig {
  double jvp_step = 1e-4;
  double vjp_step = 1e-4;
  PowerConfig power;
};

struct EigenDiagnostics {
  std::size_t iterations = 0;
  double residual = 0.0;
  double raw_value = 0.0;
  bool converged = false;
};

struct ProxyRecord {
  std::size_t sample_id = 0;
  double grad_norm = 0.0;
  double l2_max = 0.0;
  double l2_min = 0.0;
  double cos_max = 0.0;
  double cos_min = 0.0;
  double fusion = 0.0;
  EigenDiagnostics l2_max_diag, l2_min_diag, cos_max_diag, cos_min_diag;
};

inline EigenDiagnostics diagnostics_of(const EigenEstimate& e) {
  return {e.iterations, e.residual, e.raw_value, e.converged};
}

// All proxies for one ground-truth sample. Depends only on (w, sample, cfg,
// rng), never on any attack.
inline ProxyRecord compute_proxies(const Weights& w, const Sample& s, std::size_t sample_id,
                                   const ProxyConfig& cfg, SeededRng rng) {
  validate_sample(s, w.spec);
  ProxyRecord rec;
  rec.sample_id = sample_id;
  const Vector g_star = grad_weights(w, s);
  rec.grad_norm = l2_norm(g_star);
  const GradTarget target(g_star);
  const NetGradientMap map(w, s.y);

  const HvpOperator l2(GradLossKind::L2, map, s.x, target, cfg.jvp_step, cfg.vjp_step);
  const auto l2_top = max_eigen_power(l2, cfg.power, rng.derive(0));
  const auto l2_bot = min_eigen_deflate(l2, l2_top.value, cfg.power, rng.derive(1));

  const HvpOperator cs(GradLossKind::Cosine, map, s.x, target, cfg.jvp_step, cfg.vjp_step);
  const auto cs_top = max_eigen_power(cs, cfg.power, rng.derive(2));
  const auto cs_bot = min_eigen_deflate(cs, cs_top.value, cfg.power, rng.derive(3));

  rec.l2_max = l2_top.value;
  rec.l2_min = std::min(l2_bot.value, rec.l2_max);
  rec.cos_max = cs_top.value;
  rec.cos_min = std::min(cs_bot.value, rec.cos_max);
  rec.fusion = fusion_geomean(rec.l2_max, rec.cos_min);
  rec.l2_max_diag = diagnostics_of(l2_top);
  rec.l2_min_diag = diagnostics_of(l2_bot);
  rec.cos_max_diag = diagnostics_of(cs_top);
  rec.cos_min_diag = diagnostics_of(cs_bot);
  return rec;
}

}  // namespace gilab
