// include/probekit/stats.hpp

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

#include <span>
#include <string>
#include <vector>

#include "probekit/curve.hpp"
#include "probekit/featio.hpp"
#include "probekit/spanpool.hpp"

namespace probekit::stats {

struct JudgedPair {
  std::string utt_a;
  std::string utt_b;
  double human_score = 0.0;
};

// Throws ValidationError on zero-norm input or mismatched lengths.
double cosine(std::span<const double> u, std::span<const double> v);

// Fractional (tie-averaged) ranks, 1-based.
std::vector<double> fractional_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

// Pearson correlation of the fractional ranks. Needs N >= 3 and non-constant inputs.
double spearman(std::span<const double> x, std::span<const double> y);

// Three tab-separated columns: utt_a, utt_b, score.
std::vector<JudgedPair> read_pairs(const featio::fs::path& path);
void write_pairs(const std::vector<JudgedPair>& pairs, const featio::fs::path& path);

struct StsCurveResult {
  Curve curve;
  std::vector<std::string> log;
};

// Layers must be utterance-kind pooled sets whose labels are utterance ids.
StsCurveResult sts_curve(const std::vector<spanpool::PooledSet>& layers,
                         const std::vector<JudgedPair>& pairs);

}  // namespace probekit::stats
