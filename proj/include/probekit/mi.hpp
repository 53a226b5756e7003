// include/probekit/mi.hpp

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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "probekit/curve.hpp"
#include "probekit/spanpool.hpp"

namespace probekit::mi {

struct JointTable {
  std::size_t kx = 0;
  std::size_t ky = 0;
  std::vector<std::uint64_t> counts;  // row-major kx x ky
  std::uint64_t n = 0;

  std::uint64_t at(std::size_t a, std::size_t b) const { return counts[a * ky + b]; }
  JointTable transposed() const;
};

struct MiResult {
  double mi_nats = 0.0;
  double hx = 0.0;
  double hy = 0.0;
  JointTable table;
};

JointTable joint_counts(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y,
                        std::size_t kx, std::size_t ky);
// Alphabet sizes taken as max index + 1.
JointTable joint_counts(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y);

JointTable make_table(std::size_t kx, std::size_t ky, std::vector<std::uint64_t> counts);

// Plug-in estimate in nats. Terms are summed in sorted order, so the value is
// exactly invariant to transposition and to relabeling either alphabet.
MiResult mutual_information(const JointTable& table);
// The same estimate straight from a row-major count array, without building a table.
double mutual_information_nats(std::span<const std::uint64_t> counts, std::size_t kx, std::size_t ky);

// Entropy in nats of a count histogram (zero counts ignored).
double entropy(const std::vector<std::uint64_t>& counts);

// Maps labels to indices in order of first appearance.
std::vector<std::size_t> index_labels(const std::vector<std::string>& labels, std::size_t* alphabet = nullptr);

struct Baseline {
  double mean = 0.0;
  double stddev = 0.0;
  int permutations = 0;
};

// MI between `clusters` and seeded permutations of `labels`: the plug-in bias
// floor for this sample size and alphabet.
Baseline permutation_baseline(const std::vector<std::size_t>& clusters,
                              const std::vector<std::size_t>& labels, int permutations,
                              std::uint64_t seed);

struct MiCurveOptions {
  std::size_t k = 50;
  std::uint64_t seed = 0;
  int max_iters = 100;
  int permutations = 20;  // 0 disables the baseline
};

struct MiCurveResult {
  Curve curve;
  std::vector<Baseline> baselines;  // per layer
  std::vector<std::string> log;
};

// Per layer: k-means on the pooled vectors, then MI between cluster ids and labels.
MiCurveResult mi_curve(const std::vector<spanpool::PooledSet>& layers,
                       const std::vector<std::string>& labels, const MiCurveOptions& options);

}  // namespace probekit::mi
