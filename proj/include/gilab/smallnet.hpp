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

// A small smooth multilayer perceptron classifier with softmax cross-entropy.
//
// Flat weight layout (layout version 1): for each layer l in order, the
// out_l x in_l weight matrix in row-major order followed by the out_l bias
// entries. Hidden layers apply the activation; the last layer emits logits.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gilab/errors.hpp"
#include "gilab/tensorcore.hpp"

namespace gilab {

enum class Activation { Tanh, Softplus };

inline std::string to_string(Activation a) {
  return a == Activation::Tanh ? "tanh" : "softplus";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "softplus") return Activation::Softplus;
  throw ConfigError("unknown activation '" + s + "'");
}

struct NetSpec {
  std::vector<std::size_t> layer_sizes{64, 32, 4};
  Activation activation = Activation::Tanh;
  // Multiplier on the client objective; the client loss is
  // loss_scale * cross_entropy.
  double loss_scale = 1.0;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t classes() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
      n += (layer_sizes[l] + 1) * layer_sizes[l + 1];
    return n;
  }

  void validate() const {
    if (layer_sizes.size() < 2) throw ContractError("NetSpec: need at least 2 layer sizes");
    for (auto s : layer_sizes)
      if (s == 0) throw ContractError("NetSpec: layer sizes must be positive");
    if (classes() < 2) throw ContractError("NetSpec: need at least 2 classes");
    if (!(loss_scale > 0.0) || !std::isfinite(loss_scale))
      throw ContractError("NetSpec: loss_scale must be positive and finite");
  }

  bool operator==(const NetSpec&) const = default;
};

struct Weights {
  NetSpec spec;
  Vector flat;

  // Offset of layer l's matrix inside flat; the bias follows the matrix.
  std::size_t layer_offset(std::size_t l) const {
    std::size_t off = 0;
    for (std::size_t k = 0; k < l; ++k)
      off += (spec.layer_sizes[k] + 1) * spec.layer_sizes[k + 1];
    return off;
  }

  Matrix layer_matrix(std::size_t l) const {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const std::size_t off = layer_offset(l);
    return Matrix(out, in, std::vector<double>(flat.begin() + off, flat.begin() + off + in * out));
  }

  void validate() const {
    spec.validate();
    if (flat.size() != spec.param_count())
      throw DimensionError("Weights: flat length does not match NetSpec");
    if (!all_finite(flat)) throw ContractError("Weights: non-finite entry");
  }

  bool operator==(const Weights&) const = default;
};

struct Sample {
  Vector x;
  std::size_t y = 0;
};

inline void validate_sample(const Sample& s, const NetSpec& spec) {
  if (s.x.size() != spec.input_dim()) throw DimensionError("Sample: x length != input dim");
  if (s.y >= spec.classes()) throw ContractError("Sample: label out of range");
  for (double v : s.x)
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("Sample: pixel outside [0,1]");
}

// Xavier-uniform matrices, zero biases.
inline Weights init_weights(const NetSpec& spec, SeededRng rng) {
  spec.validate();
  Weights w{spec, Vector(spec.param_count())};
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < in * out; ++i) w.flat[off + i] = rng.uniform(-limit, limit);
    off += (in + 1) * out;
  }
  return w;
}

namespace detail {

inline double activate(Activation a, double z) {
  if (a == Activation::Tanh) return std::tanh(z);
  // log(1 + e^z) without overflow
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double activate_prime(Activation a, double z, double activated) {
  if (a == Activation::Tanh) return 1.0 - activated * activated;
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// Pre-activations and activations for every layer. acts[0] is the input.
struct ForwardTrace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> acts;
};

inline ForwardTrace forward_trace(const Weights& w, std::span<const double> x) {
  const NetSpec& spec = w.spec;
  if (x.size() != spec.input_dim()) throw DimensionError("forward: x length != input dim");
  ForwardTrace tr;
  tr.acts.emplace_back(x.begin(), x.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const double* mat = w.flat.data() + off;
    const double* bias = mat + in * out;
    const std::vector<double>& a = tr.acts.back();
    std::vector<double> z(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = bias[o];
      const double* row = mat + o * in;
      for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
      z[o] = s;
    }
    std::vector<double> act = z;
    if (l + 1 < spec.layer_count())
      for (auto& v : act) v = activate(spec.activation, v);
    tr.pre.push_back(std::move(z));
    tr.acts.push_back(std::move(act));
    off += (in + 1) * out;
  }
  return tr;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) s += (p[k] = std::exp(logits[k] - m));
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace detail

inline Vector forward(const Weights& w, std::span<const double> x) {
  auto tr = detail::forward_trace(w, x);
  return Vector(std::move(tr.acts.back()));
}

// -log softmax(logits)[y], unscaled.
inline double loss_ce(std::span<const double> logits, std::size_t y) {
  if (y >= logits.size()) throw ContractError("loss_ce: label out of range");
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return std::max(0.0, m + std::log(s) - logits[y]);
}

// Client objective loss_scale * CE at (x, y).
inline double client_loss(const Weights& w, std::span<const double> x, std::size_t y) {
  return w.spec.loss_scale * loss_ce(forward(w, x), y);
}

// Backpropagated gradient of the client objective with respect to the flat
// weights, taking x as any real input (pixel bounds are not enforced here so
// finite-difference probes may step outside [0,1]).
inline Vector grad_weights_at(const Weights& w, std::span<const double> x, std::size_t y) {
  const NetSpec& spec = w.spec;
  if (y >= spec.classes()) throw ContractError("grad_weights: label out of range");
  const auto tr = detail::forward_trace(w, x);
  const std::size_t layers = spec.layer_count();

  std::vector<double> delta = detail::softmax(tr.acts.back());
  delta[y] -= 1.0;
  for (auto& v : delta) v *= spec.loss_scale;

  Vector g(spec.param_count());
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const std::size_t off = w.layer_offset(l);
    const std::vector<double>& a = tr.acts[l];
    double* gm = g.data() + off;
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      double* row = gm + o * in;
      for (std::size_t i = 0; i < in; ++i) row[i] = d * a[i];
      gm[in * out + o] = d;
    }
    if (l == 0) break;
    const double* mat = w.flat.data() + off;
    std::vector<double> prev(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      const double* row = mat + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * d;
    }
    const std::vector<double>& z = tr.pre[l - 1];
    const std::vector<double>& act = tr.acts[l];
    for (std::size_t i = 0; i < in; ++i)
      prev[i] *= detail::activate_prime(spec.activation, z[i], act[i]);
    delta = std::move(prev);
  }
  return g;
}

inline Vector grad_weights(const Weights& w, const Sample& s) {
  validate_sample(s, w.spec);
  return grad_weights_at(w, s.x, s.y);
}

// The weight-gradient map x -> g_w(x, y) for a fixed label.
class NetGradientMap {
 public:
  NetGradientMap(const Weights& w, std::size_t label) : w_(&w), label_(label) {
    if (label >= w.spec.classes()) throw ContractError("NetGradientMap: label out of range");
  }

  std::size_t input_dim() const { return w_->spec.input_dim(); }
  std::size_t output_dim() const { return w_->spec.param_count(); }
  Vector operator()(std::span<const double> x) const { return grad_weights_at(*w_, x, label_); }

  const Weights& weights() const { return *w_; }
  std::size_t label() const { return label_; }

 private:
  const Weights* w_;
  std::size_t label_;
};

inline double mean_loss(const Weights& w, const std::vector<Sample>& data) {
  double s = 0.0;
  for (const auto& smp : data) s += client_loss(w, smp.x, smp.y);
  return data.empty() ? 0.0 : s / static_cast<double>(data.size());
}

inline double accuracy(const Weights& w, const std::vector<Sample>& data) {
  std::size_t hit = 0;
  for (const auto& smp : data) {
    const Vector z = forward(w, smp.x);
    const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    hit += best == smp.y;
  }
  return data.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(data.size());
}

struct TrainLog {
  std::vector<double> epoch_loss;  // mean per-sample loss seen during each epoch
};

// Plain per-sample SGD with a seeded per-epoch shuffle.
inline Weights train_sgd(const NetSpec& spec, const std::vector<Sample>& data,
                         std::size_t epochs, double lr, SeededRng rng,
                         TrainLog* log = nullptr) {
  if (data.empty()) throw ContractError("train_sgd: empty dataset");
  for (const auto& s : data) validate_sample(s, spec);
  Weights w = init_weights(spec, rng.derive(0));
  SeededRng order_rng = rng.derive(1);
  std::vector<std::size_t> order(data.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, order_rng);
    double total = 0.0;
    for (std::size_t idx : order) {
      const Sample& s = data[idx];
      total += client_loss(w, s.x, s.y);
      const Vector g = grad_weights_at(w, s.x, s.y);
      axpy(-lr, g, w.flat);
    }
    if (log) log->epoch_loss.push_back(total / static_cast<double>(data.size()));
  }
  return w;
}

}  // namespace gilab
