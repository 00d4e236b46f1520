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

// Class-conditioned Gaussian-blob images: a desk-scale stand-in for natural
// image validation sets.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "gilab/harness/config.hpp"
#include "gilab/smallnet.hpp"
#include "gilab/tensorcore.hpp"

namespace gilab::harness {

// Blob centres (row, col) per class: the configured list, or classes evenly
// spaced on a circle of radius min(h, w)/4 around the image centre.
inline std::vector<std::pair<double, double>> blob_centers(const SyntheticParams& p,
                                                           const ImageShape& shape) {
  if (!p.centers.empty()) {
    if (p.centers.size() < p.classes) throw ConfigError("synthetic: fewer centers than classes");
    return p.centers;
  }
  const double cy = 0.5 * static_cast<double>(shape.height - 1);
  const double cx = 0.5 * static_cast<double>(shape.width - 1);
  const double radius = 0.25 * static_cast<double>(std::min(shape.height, shape.width));
  std::vector<std::pair<double, double>> out;
  for (std::size_t k = 0; k < p.classes; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(p.classes);
    out.emplace_back(cy + radius * std::sin(a), cx + radius * std::cos(a));
  }
  return out;
}

// pixel = amplitude * exp(-|p - center|^2 / (2 sigma^2)) + noise * N(0,1),
// clamped to [0,1]. Labels are drawn uniformly; the centre is jittered per
// sample and the amplitude drawn from U[amplitude_min, 1].
inline std::vector<Sample> gen_synthetic(const SyntheticParams& p, const ImageShape& shape,
                                         std::size_t count, SeededRng rng) {
  shape.validate();
  if (p.classes < 1) throw ConfigError("synthetic: need at least one class");
  const auto centers = blob_centers(p, shape);
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SeededRng srng = rng.derive(i);
    const std::size_t label = srng.below(p.classes);
    double cy = centers[label].first, cx = centers[label].second;
    if (p.jitter > 0.0) {
      cy += p.jitter * srng.normal();
      cx += p.jitter * srng.normal();
    }
    const double amp = p.amplitude_min >= 1.0 ? 1.0 : srng.uniform(p.amplitude_min, 1.0);
    Vector x(shape.pixels());
    for (std::size_t r = 0; r < shape.height; ++r)
      for (std::size_t c = 0; c < shape.width; ++c) {
        const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
        double v = amp * std::exp(-(dy * dy + dx * dx) / (2.0 * p.sigma * p.sigma));
        if (p.noise > 0.0) v += p.noise * srng.normal();
        x[r * shape.width + c] = std::clamp(v, 0.0, 1.0);
      }
    out.push_back(Sample{std::move(x), label});
  }
  return out;
}

}  // namespace gilab::harness
