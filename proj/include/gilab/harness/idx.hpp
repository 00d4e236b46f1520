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

// IDX image/label containers (big-endian header, unsigned-byte payload) and
// area-averaging resampling onto the configured image shape.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gilab/errors.hpp"
#include "gilab/gradmatch.hpp"
#include "gilab/smallnet.hpp"

namespace gilab::harness {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<std::uint8_t>> images;
};

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw ParseError("idx: truncated header", bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline IdxImages parse_idx_images(std::span<const std::uint8_t> bytes,
                                  std::optional<std::size_t> limit = std::nullopt) {
  const std::uint32_t magic = detail::read_be32(bytes, 0);
  if (magic != kIdxImagesMagic) throw ParseError("idx images: bad magic", 0);
  const std::size_t count = detail::read_be32(bytes, 4);
  IdxImages out;
  out.rows = detail::read_be32(bytes, 8);
  out.cols = detail::read_be32(bytes, 12);
  if (out.rows == 0 || out.cols == 0) throw ParseError("idx images: zero image dimension", 8);
  const std::size_t take = limit ? std::min(*limit, count) : count;
  const std::size_t stride = out.rows * out.cols;
  std::size_t offset = 16;
  for (std::size_t i = 0; i < take; ++i) {
    if (offset + stride > bytes.size())
      throw ParseError("idx images: truncated pixel data for image " + std::to_string(i),
                       bytes.size());
    out.images.emplace_back(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                            bytes.begin() + static_cast<std::ptrdiff_t>(offset + stride));
    offset += stride;
  }
  return out;
}

inline std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes,
                                                  std::optional<std::size_t> limit = std::nullopt) {
  const std::uint32_t magic = detail::read_be32(bytes, 0);
  if (magic != kIdxLabelsMagic) throw ParseError("idx labels: bad magic", 0);
  const std::size_t count = detail::read_be32(bytes, 4);
  const std::size_t take = limit ? std::min(*limit, count) : count;
  if (8 + take > bytes.size()) throw ParseError("idx labels: truncated label data", bytes.size());
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(take)};
}

inline std::vector<std::uint8_t> encode_idx_images(const IdxImages& imgs) {
  std::vector<std::uint8_t> out;
  detail::write_be32(out, kIdxImagesMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(imgs.images.size()));
  detail::write_be32(out, static_cast<std::uint32_t>(imgs.rows));
  detail::write_be32(out, static_cast<std::uint32_t>(imgs.cols));
  for (const auto& im : imgs.images) out.insert(out.end(), im.begin(), im.end());
  return out;
}

inline std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  detail::write_be32(out, kIdxLabelsMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

// Box-filter resampling: every output pixel is the area-weighted mean of the
// source region it covers, fractional overlaps included, so the image mean
// is preserved.
inline std::vector<double> area_resample(std::span<const double> src, std::size_t src_h,
                                         std::size_t src_w, std::size_t dst_h, std::size_t dst_w) {
  if (src.size() != src_h * src_w) throw DimensionError("area_resample: source size mismatch");
  if (dst_h == 0 || dst_w == 0) throw ContractError("area_resample: empty target");
  const double sy = static_cast<double>(src_h) / static_cast<double>(dst_h);
  const double sx = static_cast<double>(src_w) / static_cast<double>(dst_w);
  auto overlaps = [](std::size_t dst_index, double scale, std::size_t src_n) {
    std::vector<std::pair<std::size_t, double>> w;
    const double lo = static_cast<double>(dst_index) * scale;
    const double hi = lo + scale;
    for (auto k = static_cast<std::size_t>(lo); k < src_n && static_cast<double>(k) < hi; ++k) {
      const double a = std::max(lo, static_cast<double>(k));
      const double b = std::min(hi, static_cast<double>(k + 1));
      if (b > a) w.emplace_back(k, (b - a) / scale);
    }
    return w;
  };
  std::vector<double> out(dst_h * dst_w, 0.0);
  for (std::size_t r = 0; r < dst_h; ++r) {
    const auto wy = overlaps(r, sy, src_h);
    for (std::size_t c = 0; c < dst_w; ++c) {
      const auto wx = overlaps(c, sx, src_w);
      double s = 0.0;
      for (const auto& [yy, fy] : wy)
        for (const auto& [xx, fx] : wx) s += fy * fx * src[yy * src_w + xx];
      out[r * dst_w + c] = s;
    }
  }
  return out;
}

// Largest centred window of the target aspect ratio.
inline std::vector<double> center_crop(std::span<const double> src, std::size_t h, std::size_t w,
                                       std::size_t target_h, std::size_t target_w,
                                       std::size_t& out_h, std::size_t& out_w) {
  out_h = h;
  out_w = w;
  if (h * target_w > w * target_h) out_h = w * target_h / target_w;
  else out_w = h * target_w / target_h;
  out_h = std::max<std::size_t>(out_h, 1);
  out_w = std::max<std::size_t>(out_w, 1);
  const std::size_t r0 = (h - out_h) / 2, c0 = (w - out_w) / 2;
  std::vector<double> out;
  out.reserve(out_h * out_w);
  for (std::size_t r = 0; r < out_h; ++r)
    for (std::size_t c = 0; c < out_w; ++c) out.push_back(src[(r0 + r) * w + c0 + c]);
  return out;
}

inline std::vector<Sample> samples_from_idx(const IdxImages& imgs,
                                            std::span<const std::uint8_t> labels,
                                            const ImageShape& target, bool crop) {
  if (imgs.images.size() != labels.size())
    throw ParseError("idx: image count " + std::to_string(imgs.images.size()) +
                         " does not match label count " + std::to_string(labels.size()),
                     4);
  std::vector<Sample> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<double> px(imgs.images[i].size());
    for (std::size_t k = 0; k < px.size(); ++k) px[k] = imgs.images[i][k] / 255.0;
    std::size_t h = imgs.rows, w = imgs.cols;
    if (crop) px = center_crop(px, imgs.rows, imgs.cols, target.height, target.width, h, w);
    if (h != target.height || w != target.width)
      px = area_resample(px, h, w, target.height, target.width);
    for (auto& v : px) v = std::clamp(v, 0.0, 1.0);
    out.push_back(Sample{Vector(std::move(px)), labels[i]});
  }
  return out;
}

// Reads up to `limit` samples from an IDX image file and its label file.
inline std::vector<Sample> load_idx(const std::string& images_path, const std::string& labels_path,
                                   std::size_t limit, const ImageShape& target,
                                   bool crop = true) {
  const auto img_bytes = detail::read_file(images_path);
  const auto lbl_bytes = detail::read_file(labels_path);
  const std::size_t image_count = detail::read_be32(img_bytes, 4);
  const std::size_t label_count = detail::read_be32(lbl_bytes, 4);
  if (detail::read_be32(img_bytes, 0) == kIdxImagesMagic &&
      detail::read_be32(lbl_bytes, 0) == kIdxLabelsMagic && image_count != label_count)
    throw ParseError("idx: image count " + std::to_string(image_count) +
                         " does not match label count " + std::to_string(label_count),
                     4);
  const auto imgs = parse_idx_images(img_bytes, limit);
  const auto labels = parse_idx_labels(lbl_bytes, limit);
  return samples_from_idx(imgs, labels, target, crop);
}

}  // namespace gilab::harness
