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

// Reconstruction similarity scores and Spearman rank correlation.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "gilab/errors.hpp"
#include "gilab/gradmatch.hpp"
#include "gilab/tensorcore.hpp"

namespace gilab {

inline double mse(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "mse");
  if (a.empty()) throw DimensionError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

inline constexpr double kPsnrCapDb = 100.0;

inline double psnr_from_mse(double m, double max_val = 1.0, double cap = kPsnrCapDb) {
  if (m <= 0.0) return cap;
  return std::min(cap, 10.0 * std::log10(max_val * max_val / m));
}

inline double psnr(std::span<const double> a, std::span<const double> b, double max_val = 1.0,
                   double cap = kPsnrCapDb) {
  return psnr_from_mse(mse(a, b), max_val, cap);
}

struct SsimWindow {
  enum class Kind { Global, Sliding };
  Kind kind = Kind::Global;
  std::size_t size = 8;
  std::size_t stride = 1;

  static SsimWindow global() { return {Kind::Global, 0, 0}; }
  static SsimWindow sliding(std::size_t size = 8, std::size_t stride = 1) {
    return {Kind::Sliding, size, stride};
  }
  // Whole image for images no larger than 8x8, 8x8 sliding window otherwise.
  static SsimWindow for_shape(const ImageShape& s) {
    return (s.height <= 8 && s.width <= 8) ? global() : sliding();
  }
};

struct SsimParams {
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

// SSIM of one rectangular window with population statistics.
inline double ssim_window(std::span<const double> a, std::span<const double> b, std::size_t width,
                          std::size_t r0, std::size_t c0, std::size_t h, std::size_t w,
                          double c1, double c2) {
  const double n = static_cast<double>(h * w);
  double ma = 0.0, mb = 0.0;
  for (std::size_t r = r0; r < r0 + h; ++r)
    for (std::size_t c = c0; c < c0 + w; ++c) {
      ma += a[r * width + c];
      mb += b[r * width + c];
    }
  ma /= n;
  mb /= n;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (std::size_t r = r0; r < r0 + h; ++r)
    for (std::size_t c = c0; c < c0 + w; ++c) {
      const double da = a[r * width + c] - ma;
      const double db = b[r * width + c] - mb;
      va += da * da;
      vb += db * db;
      cov += da * db;
    }
  va /= n;
  vb /= n;
  cov /= n;
  const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
  const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
  return num / den;
}

}  // namespace detail

inline double ssim(std::span<const double> a, std::span<const double> b, const ImageShape& shape,
                   const SsimWindow& window = SsimWindow::global(), const SsimParams& p = {}) {
  require_same_length(a.size(), b.size(), "ssim");
  shape.require_matches(a.size());
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  if (window.kind == SsimWindow::Kind::Global)
    return detail::ssim_window(a, b, shape.width, 0, 0, shape.height, shape.width, c1, c2);

  if (window.size == 0 || window.stride == 0) throw ContractError("ssim: bad window");
  if (window.size > shape.height || window.size > shape.width)
    throw ContractError("ssim: window larger than image");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + window.size <= shape.height; r += window.stride)
    for (std::size_t c = 0; c + window.size <= shape.width; c += window.stride) {
      total += detail::ssim_window(a, b, shape.width, r, c, window.size, window.size, c1, c2);
      ++count;
    }
  return total / static_cast<double>(count);
}

struct SimilarityScores {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

inline SimilarityScores score_reconstruction(std::span<const double> reconstructed,
                                             std::span<const double> truth,
                                             const ImageShape& shape) {
  SimilarityScores s;
  s.mse = mse(reconstructed, truth);
  s.psnr = psnr_from_mse(s.mse);
  s.ssim = ssim(reconstructed, truth, shape, SsimWindow::for_shape(shape));
  return s;
}

// Ranks in increasing order starting at 1; tied values share their mean rank.
inline std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t m = values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(m);
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "pearson");
  if (a.size() < 2) throw CorrelationError("correlation needs at least 2 items");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw CorrelationError("correlation undefined for constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Pearson correlation of average-rank vectors.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "spearman");
  for (std::span<const double> s : {a, b})
    for (double v : s)
      if (!std::isfinite(v)) throw CorrelationError("spearman: non-finite value");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

}  // namespace gilab
