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

// Gradient-matching distances, the smoothed total-variation prior, and the
// gradient of the inversion objective with respect to the candidate image.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "gilab/errors.hpp"
#include "gilab/gradient_map.hpp"
#include "gilab/smallnet.hpp"
#include "gilab/tensorcore.hpp"

namespace gilab {

enum class GradLossKind { L2, Cosine };

inline std::string to_string(GradLossKind k) { return k == GradLossKind::L2 ? "l2" : "cos"; }

inline GradLossKind grad_loss_kind_from_string(const std::string& s) {
  if (s == "l2") return GradLossKind::L2;
  if (s == "cos" || s == "cosine") return GradLossKind::Cosine;
  throw ConfigError("unknown gradient loss kind '" + s + "'");
}

// The shared gradient g* with its norm cached.
class GradTarget {
 public:
  explicit GradTarget(Vector g_star) : g_star_(std::move(g_star)), norm_(l2_norm(g_star_)) {
    if (!(norm_ > 0.0)) throw DegenerateGradientError("GradTarget: zero target gradient");
    if (!std::isfinite(norm_)) throw ContractError("GradTarget: non-finite target gradient");
  }

  const Vector& g_star() const noexcept { return g_star_; }
  double norm() const noexcept { return norm_; }
  std::size_t size() const noexcept { return g_star_.size(); }

 private:
  Vector g_star_;
  double norm_;
};

struct ImageShape {
  std::size_t height = 8;
  std::size_t width = 8;

  std::size_t pixels() const { return height * width; }

  void validate() const {
    if (height < 2 || width < 2) throw ContractError("ImageShape: both sides must be >= 2");
  }
  void require_matches(std::size_t d) const {
    validate();
    if (pixels() != d) throw DimensionError("ImageShape: height*width != image length");
  }
  bool operator==(const ImageShape&) const = default;
};

// L2: ||g - g*||^2.  Cosine: 1 - <g, g*> / (||g|| ||g*||).
inline double gm_loss(GradLossKind kind, std::span<const double> g, const GradTarget& t) {
  require_same_length(g.size(), t.size(), "gm_loss");
  const auto& gs = t.g_star();
  if (kind == GradLossKind::L2) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = g[i] - gs[i];
      s += d * d;
    }
    return s;
  }
  const double gn = l2_norm(g);
  if (!(gn > 0.0)) throw DegenerateGradientError("gm_loss: cosine distance of a zero gradient");
  const double c = std::clamp(dot(g, gs) / (gn * t.norm()), -1.0, 1.0);
  return 1.0 - c;
}

// Derivative of gm_loss with respect to g.
inline Vector gm_grad_wrt_g(GradLossKind kind, std::span<const double> g, const GradTarget& t) {
  require_same_length(g.size(), t.size(), "gm_grad_wrt_g");
  const auto& gs = t.g_star();
  Vector out(g.size());
  if (kind == GradLossKind::L2) {
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = 2.0 * (g[i] - gs[i]);
    return out;
  }
  const double gn = l2_norm(g);
  if (!(gn > 0.0)) throw DegenerateGradientError("gm_grad_wrt_g: cosine distance of a zero gradient");
  // -(1/|g|) (I - gh gh^T) (g*/|g*|), gh = g/|g|
  const double proj = dot(g, gs) / (gn * gn);
  const double scale = -1.0 / (gn * t.norm());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = scale * (gs[i] - proj * g[i]);
  return out;
}

// Smoothed anisotropic total variation over horizontal and vertical neighbour
// pairs: sum sqrt(diff^2 + eps^2).
inline double tv_loss(std::span<const double> x, const ImageShape& shape, double eps) {
  shape.require_matches(x.size());
  const std::size_t h = shape.height, w = shape.width;
  const double e2 = eps * eps;
  double s = 0.0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double v = x[r * w + c];
      if (c + 1 < w) {
        const double d = x[r * w + c + 1] - v;
        s += std::sqrt(d * d + e2);
      }
      if (r + 1 < h) {
        const double d = x[(r + 1) * w + c] - v;
        s += std::sqrt(d * d + e2);
      }
    }
  return s;
}

inline Vector tv_grad(std::span<const double> x, const ImageShape& shape, double eps) {
  shape.require_matches(x.size());
  const std::size_t h = shape.height, w = shape.width;
  const double e2 = eps * eps;
  Vector g(x.size());
  auto pair = [&](std::size_t a, std::size_t b) {
    const double d = x[b] - x[a];
    const double denom = std::sqrt(d * d + e2);
    if (denom == 0.0) return;
    const double k = d / denom;
    g[b] += k;
    g[a] -= k;
  };
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      if (c + 1 < w) pair(r * w + c, r * w + c + 1);
      if (r + 1 < h) pair(r * w + c, (r + 1) * w + c);
    }
  return g;
}

inline constexpr double kDefaultTvEps = 1e-6;

// Gradient in x of gm_loss(kind, map(x), t) + alpha_tv * tv(x). The matching
// term is differentiated coordinate-wise by central differences of the scalar
// objective with step fd_step.
template <GradientMap M>
Vector objective_grad(const M& map, std::span<const double> x, GradLossKind kind,
                      const GradTarget& t, double alpha_tv, const ImageShape& shape,
                      double fd_step, double tv_eps = kDefaultTvEps) {
  require_same_length(x.size(), map.input_dim(), "objective_grad");
  if (!(fd_step > 0.0)) throw ContractError("objective_grad: fd_step must be positive");
  const std::size_t d = x.size();
  Vector grad(d);
  Vector probe(x);
  for (std::size_t i = 0; i < d; ++i) {
    const double xi = probe[i];
    probe[i] = xi + fd_step;
    const double hi = gm_loss(kind, map(probe), t);
    probe[i] = xi - fd_step;
    const double lo = gm_loss(kind, map(probe), t);
    probe[i] = xi;
    grad[i] = (hi - lo) / (2.0 * fd_step);
  }
  if (alpha_tv != 0.0) axpy(alpha_tv, tv_grad(x, shape, tv_eps), grad);
  if (!all_finite(grad)) throw DegenerateGradientError("objective_grad: non-finite gradient");
  return grad;
}

inline Vector attack_objective_grad(const Weights& w, std::span<const double> x, std::size_t y,
                                    GradLossKind kind, const GradTarget& t, double alpha_tv,
                                    const ImageShape& shape, double fd_step) {
  return objective_grad(NetGradientMap(w, y), x, kind, t, alpha_tv, shape, fd_step);
}

}  // namespace gilab
