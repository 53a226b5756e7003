// src/mi.cpp

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

#include "probekit/mi.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "probekit/cluster.hpp"
#include "probekit/common.hpp"
#include "probekit/parallel.hpp"

namespace probekit::mi {

namespace {

double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace

JointTable JointTable::transposed() const {
  JointTable t;
  t.kx = ky;
  t.ky = kx;
  t.n = n;
  t.counts.resize(counts.size());
  for (std::size_t a = 0; a < kx; ++a)
    for (std::size_t b = 0; b < ky; ++b) t.counts[b * kx + a] = counts[a * ky + b];
  return t;
}

JointTable make_table(std::size_t kx, std::size_t ky, std::vector<std::uint64_t> counts) {
  if (counts.size() != kx * ky) throw ValidationError("count vector does not match table shape");
  JointTable t;
  t.kx = kx;
  t.ky = ky;
  t.counts = std::move(counts);
  t.n = std::accumulate(t.counts.begin(), t.counts.end(), std::uint64_t{0});
  return t;
}

JointTable joint_counts(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y,
                        std::size_t kx, std::size_t ky) {
  if (x.size() != y.size())
    throw ValidationError("label vectors differ in length (" + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()) + ")");
  JointTable t;
  t.kx = kx;
  t.ky = ky;
  t.counts.assign(kx * ky, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= kx || y[i] >= ky)
      throw ValidationError("index out of range at position " + std::to_string(i));
    ++t.counts[x[i] * ky + y[i]];
  }
  t.n = x.size();
  return t;
}

JointTable joint_counts(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
  const std::size_t kx = x.empty() ? 0 : *std::max_element(x.begin(), x.end()) + 1;
  const std::size_t ky = y.empty() ? 0 : *std::max_element(y.begin(), y.end()) + 1;
  return joint_counts(x, y, kx, ky);
}

double entropy(const std::vector<std::uint64_t>& counts) {
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
  std::vector<double> terms;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    terms.push_back(-p * std::log(p));
  }
  return sorted_sum(terms);
}

double mutual_information_nats(std::span<const std::uint64_t> counts, std::size_t kx, std::size_t ky) {
  if (counts.size() != kx * ky) throw ValidationError("count vector does not match table shape");
  thread_local std::vector<std::uint64_t> rows, cols;
  thread_local std::vector<double> terms;
  rows.assign(kx, 0);
  cols.assign(ky, 0);
  std::uint64_t total = 0;
  for (std::size_t a = 0; a < kx; ++a)
    for (std::size_t b = 0; b < ky; ++b) {
      rows[a] += counts[a * ky + b];
      cols[b] += counts[a * ky + b];
      total += counts[a * ky + b];
    }
  if (total == 0) throw ValidationError("empty joint table");
  const double n = static_cast<double>(total);
  terms.clear();
  for (std::size_t a = 0; a < kx; ++a) {
    for (std::size_t b = 0; b < ky; ++b) {
      const auto c = counts[a * ky + b];
      if (c == 0) continue;
      const double cd = static_cast<double>(c);
      const double ratio = (cd * n) / (static_cast<double>(rows[a]) * static_cast<double>(cols[b]));
      terms.push_back(cd / n * std::log(ratio));
    }
  }
  return std::max(0.0, sorted_sum(terms));
}

MiResult mutual_information(const JointTable& table) {
  if (table.n == 0 || table.counts.empty()) throw ValidationError("empty joint table");
  std::vector<std::uint64_t> rows(table.kx, 0), cols(table.ky, 0);
  for (std::size_t a = 0; a < table.kx; ++a)
    for (std::size_t b = 0; b < table.ky; ++b) {
      rows[a] += table.at(a, b);
      cols[b] += table.at(a, b);
    }
  MiResult r;
  r.table = table;
  r.hx = entropy(rows);
  r.hy = entropy(cols);
  r.mi_nats = std::min(mutual_information_nats(table.counts, table.kx, table.ky), std::min(r.hx, r.hy));
  return r;
}

std::vector<std::size_t> index_labels(const std::vector<std::string>& labels, std::size_t* alphabet) {
  std::map<std::string, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(ids.emplace(l, ids.size()).first->second);
  if (alphabet) *alphabet = ids.size();
  return out;
}

Baseline permutation_baseline(const std::vector<std::size_t>& clusters,
                              const std::vector<std::size_t>& labels, int permutations,
                              std::uint64_t seed) {
  Baseline b;
  b.permutations = permutations;
  if (permutations <= 0) return b;
  const JointTable base = joint_counts(clusters, labels);
  std::vector<std::size_t> shuffled = labels;
  std::vector<double> values;
  Rng rng(seed);
  for (int p = 0; p < permutations; ++p) {
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.below(i))]);
    values.push_back(mutual_information(joint_counts(clusters, shuffled, base.kx, base.ky)).mi_nats);
  }
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  b.mean = mean;
  b.stddev = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
  return b;
}

MiCurveResult mi_curve(const std::vector<spanpool::PooledSet>& layers,
                       const std::vector<std::string>& labels, const MiCurveOptions& options) {
  if (layers.empty()) throw ValidationError("no layers to score");
  std::size_t alphabet = 0;
  const auto label_ids = index_labels(labels, &alphabet);
  if (alphabet < 2) throw ValidationError("MI needs at least 2 distinct labels");
  for (const auto& l : layers) {
    if (static_cast<std::size_t>(l.vectors.rows()) != labels.size())
      throw ValidationError("layer " + l.layer_id + " has " + std::to_string(l.vectors.rows()) +
                            " items, labels have " + std::to_string(labels.size()));
  }

  MiCurveResult out;
  out.curve.resize(layers.size());
  out.baselines.resize(layers.size());
  parallel_for(layers.size(), [&](std::size_t l) {
    cluster::KMeansOptions ko;
    ko.k = options.k;
    ko.seed = options.seed;
    ko.max_iters = options.max_iters;
    const auto c = cluster::kmeans(layers[l].vectors, ko);
    const auto r = mutual_information(joint_counts(c.assignments, label_ids, options.k, alphabet));
    out.curve[l] = {layers[l].layer_id, r.mi_nats};
    out.baselines[l] = permutation_baseline(c.assignments, label_ids, options.permutations,
                                            mix_seed(options.seed, l, 0x7065726d));
  });
  out.log.push_back(std::to_string(labels.size()) + " items, " + std::to_string(alphabet) +
                    " labels, k=" + std::to_string(options.k));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::ostringstream s;
    s << layers[l].layer_id << ": mi=" << out.curve[l].value << " nats, permutation floor "
      << out.baselines[l].mean << " +/- " << out.baselines[l].stddev;
    out.log.push_back(s.str());
  }
  return out;
}

}  // namespace probekit::mi
