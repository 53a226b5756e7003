// src/stats.cpp

// Copyright 2026  The probekit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "probekit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "probekit/kernels.hpp"
#include "probekit/textio.hpp"

namespace probekit::stats {

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ValidationError("cosine: dimension mismatch");
  if (u.empty()) throw ValidationError("cosine: empty vectors");
  const auto& k = kernels::active();
  const double uu = k.dot(u.data(), u.data(), u.size());
  const double vv = k.dot(v.data(), v.data(), v.size());
  if (!(uu > 0.0) || !(vv > 0.0)) throw ValidationError("cosine: zero-norm vector");
  const double c = k.dot(u.data(), v.data(), u.size()) / (std::sqrt(uu) * std::sqrt(vv));
  return std::clamp(c, -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 (0-based) share the mean of ranks i+1..j.
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw ValidationError("correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("spearman: length mismatch");
  if (x.size() < 3) throw ValidationError("spearman needs at least 3 observations");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return pearson(rx, ry);
}

std::vector<JudgedPair> read_pairs(const featio::fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<JudgedPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cols = text::split(line, '\t');
    const std::string at = path.string() + ":" + std::to_string(lineno) + ": ";
    if (cols.size() != 3) throw FormatError(at + "expected 3 tab-separated columns");
    try {
      out.push_back({cols[0], cols[1], text::parse_double(cols[2])});
    } catch (const ValidationError& e) {
      throw FormatError(at + e.what());
    }
  }
  return out;
}

void write_pairs(const std::vector<JudgedPair>& pairs, const featio::fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pairs) out << p.utt_a << '\t' << p.utt_b << '\t' << text::format_double(p.human_score) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

StsCurveResult sts_curve(const std::vector<spanpool::PooledSet>& layers,
                         const std::vector<JudgedPair>& pairs) {
  if (pairs.size() < 3) throw ValidationError("STS needs at least 3 judged pairs");
  if (layers.empty()) throw ValidationError("no layers to score");
  std::vector<double> human;
  human.reserve(pairs.size());
  for (const auto& p : pairs) human.push_back(p.human_score);

  StsCurveResult out;
  for (const auto& layer : layers) {
    std::map<std::string, Eigen::Index> row;
    for (std::size_t i = 0; i < layer.labels.size(); ++i) row.emplace(layer.labels[i], static_cast<Eigen::Index>(i));
    std::vector<double> predicted;
    predicted.reserve(pairs.size());
    for (const auto& p : pairs) {
      const auto a = row.find(p.utt_a);
      const auto b = row.find(p.utt_b);
      if (a == row.end() || b == row.end())
        throw ValidationError("layer " + layer.layer_id + " has no pooled vector for " +
                              (a == row.end() ? p.utt_a : p.utt_b));
      const Eigen::RowVectorXd va = layer.vectors.row(a->second);
      const Eigen::RowVectorXd vb = layer.vectors.row(b->second);
      predicted.push_back(cosine({va.data(), static_cast<std::size_t>(va.size())},
                                 {vb.data(), static_cast<std::size_t>(vb.size())}));
    }
    const double rho = spearman(predicted, human);
    out.curve.push_back({layer.layer_id, rho});
    std::ostringstream s;
    s << layer.layer_id << ": spearman=" << rho << " over " << pairs.size() << " pairs";
    out.log.push_back(s.str());
  }
  return out;
}

}  // namespace probekit::stats
