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

// Per-sample report rows, the Spearman correlation matrix, and the files they
// are written to: samples.csv, correlations.csv, SVG scatter plots and
// report.json.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "gilab/attack.hpp"
#include "gilab/errors.hpp"
#include "gilab/lavp.hpp"
#include "gilab/metrics.hpp"

namespace gilab::harness {

inline constexpr const char* kSamplesHeader =
    "sample_id,label,grad_norm,l2_max,l2_min,cos_max,cos_min,fusion,mse_l2,ssim_l2,psnr_l2,"
    "gmfinal_l2,mse_cos,ssim_cos,psnr_cos,gmfinal_cos,status";

inline constexpr std::array<const char*, 6> kProxyNames{"grad_norm", "l2_max", "l2_min",
                                                        "cos_max",   "cos_min", "fusion"};
inline constexpr std::array<const char*, 6> kScoreNames{"mse_l2",  "ssim_l2",  "psnr_l2",
                                                        "mse_cos", "ssim_cos", "psnr_cos"};

struct AttackOutcome {
  SimilarityScores scores;
  double gm_final = 0.0;
};

struct RestartInfo {
  GradLossKind kind = GradLossKind::L2;
  std::size_t restart = 0;
  double initial_gm_loss = 0.0;
  double final_gm_loss = 0.0;
  double mse = 0.0;
  bool chosen = false;
  bool oracle_best = false;  // lowest MSE to ground truth among restarts
};

struct ReportRow {
  std::size_t sample_id = 0;
  std::size_t label = 0;
  std::optional<ProxyRecord> proxies;
  std::optional<AttackOutcome> l2;
  std::optional<AttackOutcome> cos;
  std::string status = "ok";
  std::vector<RestartInfo> restarts;  // not part of samples.csv

  bool usable() const { return status == "ok"; }
  const std::optional<AttackOutcome>& outcome(GradLossKind k) const {
    return k == GradLossKind::L2 ? l2 : cos;
  }
  std::optional<AttackOutcome>& outcome(GradLossKind k) { return k == GradLossKind::L2 ? l2 : cos; }
};

struct CorrelationReport {
  // coef[proxy][score], row/column order as kProxyNames / kScoreNames.
  std::array<std::array<std::optional<double>, 6>, 6> coef{};
  std::size_t sample_count = 0;  // usable rows
  std::string config_digest;

  std::optional<double> at(const std::string& proxy, const std::string& score) const {
    for (std::size_t p = 0; p < kProxyNames.size(); ++p)
      for (std::size_t s = 0; s < kScoreNames.size(); ++s)
        if (proxy == kProxyNames[p] && score == kScoreNames[s]) return coef[p][s];
    throw ContractError("CorrelationReport: unknown cell " + proxy + "/" + score);
  }
  bool operator==(const CorrelationReport&) const = default;
};

inline double proxy_value(const ProxyRecord& p, std::size_t index) {
  switch (index) {
    case 0: return p.grad_norm;
    case 1: return p.l2_max;
    case 2: return p.l2_min;
    case 3: return p.cos_max;
    case 4: return p.cos_min;
    default: return p.fusion;
  }
}

// Score column s of a row, if that attack ran.
inline std::optional<double> score_value(const ReportRow& r, std::size_t s) {
  const auto& o = s < 3 ? r.l2 : r.cos;
  if (!o) return std::nullopt;
  switch (s % 3) {
    case 0: return o->scores.mse;
    case 1: return o->scores.ssim;
    default: return o->scores.psnr;
  }
}

inline std::string sha256_hex(const std::string& text) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// Spearman coefficients over usable rows. Cells whose columns are missing or
// constant stay empty.
inline CorrelationReport compute_correlations(const std::vector<ReportRow>& rows,
                                              const std::string& config_digest) {
  std::vector<const ReportRow*> usable;
  for (const auto& r : rows)
    if (r.usable() && r.proxies) usable.push_back(&r);
  if (usable.size() < 2)
    throw CorrelationError("insufficient usable rows (" + std::to_string(usable.size()) + " < 2)");
  CorrelationReport rep;
  rep.sample_count = usable.size();
  rep.config_digest = config_digest;
  for (std::size_t s = 0; s < kScoreNames.size(); ++s) {
    std::vector<double> scores;
    for (const auto* r : usable) {
      const auto v = score_value(*r, s);
      if (!v) break;
      scores.push_back(*v);
    }
    if (scores.size() != usable.size()) continue;
    for (std::size_t p = 0; p < kProxyNames.size(); ++p) {
      std::vector<double> proxies;
      for (const auto* r : usable) proxies.push_back(proxy_value(*r->proxies, p));
      try {
        rep.coef[p][s] = spearman(proxies, scores);
      } catch (const CorrelationError&) {
        // constant column: left empty
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string format_real(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, p);
}

inline double parse_real_cell(const std::string& cell, std::size_t line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || p != cell.data() + cell.size())
    throw ParseError("csv line " + std::to_string(line) + ": bad number '" + cell + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::string sanitize_status(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ';';
  return s;
}

inline std::string samples_csv(const std::vector<ReportRow>& rows) {
  std::string out = std::string(kSamplesHeader) + "\n";
  for (const auto& r : rows) {
    std::vector<std::string> cells{std::to_string(r.sample_id), std::to_string(r.label)};
    for (std::size_t p = 0; p < kProxyNames.size(); ++p)
      cells.push_back(r.proxies ? format_real(proxy_value(*r.proxies, p)) : std::string());
    for (const auto* o : {&r.l2, &r.cos}) {
      if (*o) {
        cells.push_back(format_real((*o)->scores.mse));
        cells.push_back(format_real((*o)->scores.ssim));
        cells.push_back(format_real((*o)->scores.psnr));
        cells.push_back(format_real((*o)->gm_final));
      } else {
        cells.insert(cells.end(), 4, std::string());
      }
    }
    cells.push_back(sanitize_status(r.status));
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += "\n";
  }
  return out;
}

inline std::vector<ReportRow> parse_samples_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kSamplesHeader))
    throw ParseError("samples.csv: unexpected header");
  std::vector<ReportRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 17)
      throw ParseError("samples.csv line " + std::to_string(lineno) + ": expected 17 cells");
    ReportRow r;
    r.sample_id = static_cast<std::size_t>(parse_real_cell(c[0], lineno));
    r.label = static_cast<std::size_t>(parse_real_cell(c[1], lineno));
    if (!c[2].empty()) {
      ProxyRecord p;
      p.sample_id = r.sample_id;
      p.grad_norm = parse_real_cell(c[2], lineno);
      p.l2_max = parse_real_cell(c[3], lineno);
      p.l2_min = parse_real_cell(c[4], lineno);
      p.cos_max = parse_real_cell(c[5], lineno);
      p.cos_min = parse_real_cell(c[6], lineno);
      p.fusion = parse_real_cell(c[7], lineno);
      r.proxies = p;
    }
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t base = 8 + 4 * k;
      if (c[base].empty()) continue;
      AttackOutcome o;
      o.scores.mse = parse_real_cell(c[base], lineno);
      o.scores.ssim = parse_real_cell(c[base + 1], lineno);
      o.scores.psnr = parse_real_cell(c[base + 2], lineno);
      o.gm_final = parse_real_cell(c[base + 3], lineno);
      (k == 0 ? r.l2 : r.cos) = o;
    }
    r.status = c[16];
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string correlations_csv(const CorrelationReport& rep) {
  std::string out = "proxy";
  for (const char* s : kScoreNames) out += std::string(",") + s;
  out += ",sample_count,config_digest\n";
  for (std::size_t p = 0; p < kProxyNames.size(); ++p) {
    out += kProxyNames[p];
    for (std::size_t s = 0; s < kScoreNames.size(); ++s)
      out += "," + (rep.coef[p][s] ? format_real(*rep.coef[p][s]) : std::string());
    out += "," + std::to_string(rep.sample_count) + "," + rep.config_digest + "\n";
  }
  return out;
}

inline CorrelationReport parse_correlations_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  if (header.size() != 9 || header[0] != "proxy")
    throw ParseError("correlations.csv: unexpected header");
  for (std::size_t s = 0; s < kScoreNames.size(); ++s)
    if (header[1 + s] != kScoreNames[s])
      throw ParseError("correlations.csv: unexpected column order");
  CorrelationReport rep;
  std::size_t p = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 9 || p >= kProxyNames.size() || c[0] != kProxyNames[p])
      throw ParseError("correlations.csv line " + std::to_string(lineno) + ": unexpected row");
    for (std::size_t s = 0; s < kScoreNames.size(); ++s)
      if (!c[1 + s].empty()) rep.coef[p][s] = parse_real_cell(c[1 + s], lineno);
    rep.sample_count = static_cast<std::size_t>(parse_real_cell(c[7], lineno));
    rep.config_digest = c[8];
    ++p;
  }
  if (p != kProxyNames.size()) throw ParseError("correlations.csv: missing proxy rows");
  return rep;
}

inline std::string restarts_csv(const std::vector<ReportRow>& rows) {
  std::string out = "sample_id,kind,restart,initial_gm_loss,final_gm_loss,mse,chosen,oracle_best\n";
  for (const auto& r : rows)
    for (const auto& ri : r.restarts)
      out += std::to_string(r.sample_id) + "," + to_string(ri.kind) + "," +
             std::to_string(ri.restart) + "," + format_real(ri.initial_gm_loss) + "," +
             format_real(ri.final_gm_loss) + "," + format_real(ri.mse) + "," +
             (ri.chosen ? "1" : "0") + "," + (ri.oracle_best ? "1" : "0") + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// SVG scatter plots
// ---------------------------------------------------------------------------

struct LogAxis {
  int lo_decade = 0;
  int hi_decade = 1;
  std::vector<double> ticks;  // 10^k for k in [lo_decade, hi_decade]
};

inline LogAxis log_axis_for(std::span<const double> values) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double v : values)
    if (v > 0.0 && std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  LogAxis a;
  if (hi > 0.0) {
    a.lo_decade = static_cast<int>(std::floor(std::log10(lo)));
    a.hi_decade = static_cast<int>(std::ceil(std::log10(hi)));
    if (a.hi_decade == a.lo_decade) ++a.hi_decade;
  }
  for (int k = a.lo_decade; k <= a.hi_decade; ++k) a.ticks.push_back(std::pow(10.0, k));
  return a;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

// Standalone SVG: log10 x axis with decade ticks, linear y axis. Points with a
// non-positive x have no place on the log axis and are counted in the
// subtitle instead.
inline std::string render_scatter_svg(std::span<const double> xs, std::span<const double> ys,
                                      const std::string& title, const std::string& x_label,
                                      const std::string& y_label) {
  require_same_length(xs.size(), ys.size(), "render_scatter_svg");
  constexpr double W = 520, H = 400, left = 70, right = 20, top = 50, bottom = 60;
  const LogAxis ax = log_axis_for(xs);
  double ylo = std::numeric_limits<double>::infinity(), yhi = -ylo;
  for (double y : ys)
    if (std::isfinite(y)) {
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
  if (!std::isfinite(ylo)) {
    ylo = 0.0;
    yhi = 1.0;
  }
  if (yhi == ylo) {
    ylo -= 0.5;
    yhi += 0.5;
  }
  const double pad = 0.05 * (yhi - ylo);
  ylo -= pad;
  yhi += pad;
  auto px = [&](double x) {
    return left + (std::log10(x) - ax.lo_decade) / (ax.hi_decade - ax.lo_decade) * (W - left - right);
  };
  auto py = [&](double y) { return top + (yhi - y) / (yhi - ylo) * (H - top - bottom); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << " " << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
    << xml_escape(title) << "</text>\n";
  std::size_t skipped = 0;
  for (double x : xs) skipped += !(x > 0.0 && std::isfinite(x));
  if (skipped)
    o << "<text x=\"" << W / 2 << "\" y=\"36\" text-anchor=\"middle\" fill=\"#666\">" << skipped
      << " point(s) with non-positive proxy omitted</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W - left - right
    << "\" height=\"" << H - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (std::size_t k = 0; k < ax.ticks.size(); ++k) {
    const double x = px(ax.ticks[k]);
    const int decade = ax.lo_decade + static_cast<int>(k);
    o << "<line class=\"xtick\" data-decade=\"" << decade << "\" x1=\"" << x << "\" y1=\""
      << H - bottom << "\" x2=\"" << x << "\" y2=\"" << H - bottom + 5 << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << x << "\" y=\"" << H - bottom + 18 << "\" text-anchor=\"middle\">1e"
      << decade << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double yv = ylo + (yhi - ylo) * k / 4.0;
    const double y = py(yv);
    o << "<line x1=\"" << left - 5 << "\" y1=\"" << y << "\" x2=\"" << left << "\" y2=\"" << y
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
      << format_real(std::round(yv * 1e4) / 1e4) << "</text>\n";
  }
  o << "<text x=\"" << left + (W - left - right) / 2 << "\" y=\"" << H - 15
    << "\" text-anchor=\"middle\">" << xml_escape(x_label) << " (log scale)</text>\n";
  o << "<text transform=\"translate(16," << top + (H - top - bottom) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0 && std::isfinite(xs[i]) && std::isfinite(ys[i]))) continue;
    o << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i])
      << "\" r=\"3.5\" fill=\"#1f77b4\" fill-opacity=\"0.8\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json environment_stamp() {
  nlohmann::json env;
#if defined(__clang__)
  env["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  env["compiler"] = std::string("gcc ") + __VERSION__;
#else
  env["compiler"] = "unknown";
#endif
  env["cplusplus"] = __cplusplus;
#if defined(__linux__)
  env["os"] = "linux";
#elif defined(__APPLE__)
  env["os"] = "darwin";
#elif defined(_WIN32)
  env["os"] = "windows";
#else
  env["os"] = "unknown";
#endif
#ifdef NDEBUG
  env["build"] = "release";
#else
  env["build"] = "debug";
#endif
  return env;
}

inline void emit_report(const std::vector<ReportRow>& rows, const CorrelationReport& rep,
                        const std::filesystem::path& output_dir,
                        const std::string& config_text = {}) {
  if (rows.empty()) throw ContractError("emit_report: no rows");
  std::error_code ec;
  std::filesystem::create_directories(output_dir / "plots", ec);
  if (ec)
    throw IoError("cannot create output directory '" + output_dir.string() + "': " + ec.message());

  write_text_file(output_dir / "samples.csv", samples_csv(rows));
  write_text_file(output_dir / "correlations.csv", correlations_csv(rep));
  const bool any_restarts =
      std::any_of(rows.begin(), rows.end(), [](const ReportRow& r) { return !r.restarts.empty(); });
  if (any_restarts) write_text_file(output_dir / "restarts.csv", restarts_csv(rows));

  std::vector<const ReportRow*> usable;
  for (const auto& r : rows)
    if (r.usable() && r.proxies) usable.push_back(&r);
  for (std::size_t p = 0; p < kProxyNames.size(); ++p)
    for (std::size_t s = 0; s < kScoreNames.size(); ++s) {
      std::vector<double> xs, ys;
      for (const auto* r : usable)
        if (const auto v = score_value(*r, s)) {
          xs.push_back(proxy_value(*r->proxies, p));
          ys.push_back(*v);
        }
      if (xs.empty()) continue;
      const auto c = rep.coef[p][s];
      const std::string title = std::string(kProxyNames[p]) + " vs " + kScoreNames[s] +
                                " (spearman = " +
                                (c ? format_real(std::round(*c * 1e4) / 1e4) : "n/a") + ")";
      write_text_file(
          output_dir / "plots" / (std::string(kProxyNames[p]) + "__" + kScoreNames[s] + ".svg"),
          render_scatter_svg(xs, ys, title, kProxyNames[p], kScoreNames[s]));
    }

  nlohmann::json j;
  j["config_digest"] = rep.config_digest;
  if (!config_text.empty()) j["config"] = config_text;
  j["rows"] = rows.size();
  j["usable_rows"] = rep.sample_count;
  j["failed_rows"] = rows.size() - usable.size();
  nlohmann::json corr;
  for (std::size_t p = 0; p < kProxyNames.size(); ++p)
    for (std::size_t s = 0; s < kScoreNames.size(); ++s)
      corr[kProxyNames[p]][kScoreNames[s]] =
          rep.coef[p][s] ? nlohmann::json(*rep.coef[p][s]) : nlohmann::json();
  j["spearman"] = corr;
  j["environment"] = environment_stamp();
  write_text_file(output_dir / "report.json", j.dump(2) + "\n");
}

inline nlohmann::json attack_result_json(const AttackResult& r, GradLossKind kind) {
  auto finite_or_null = [](double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json();
  };
  nlohmann::json j;
  j["kind"] = to_string(kind);
  j["final_gm_loss"] = r.final_gm_loss;
  j["chosen_restart"] = r.chosen_restart;
  j["wall_time_s"] = r.wall_time;
  nlohmann::json fin = nlohmann::json::array(), ini = nlohmann::json::array();
  for (double v : r.per_restart_final) fin.push_back(finite_or_null(v));
  for (double v : r.per_restart_initial) ini.push_back(finite_or_null(v));
  j["per_restart_final"] = fin;
  j["per_restart_initial"] = ini;
  j["restart_errors"] = r.restart_errors;
  j["loss_trajectory"] = r.loss_trajectory;
  j["x_rec"] = r.x_rec.values();
  return j;
}

// Binary PGM (P5), 8-bit, pixels in [0,1] scaled to 0..255.
inline std::string encode_pgm(std::span<const double> x, const ImageShape& shape) {
  shape.require_matches(x.size());
  std::string out =
      "P5\n" + std::to_string(shape.width) + " " + std::to_string(shape.height) + "\n255\n";
  for (double v : x)
    out += static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return out;
}

}  // namespace gilab::harness
