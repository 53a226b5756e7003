// include/probekit/spanpool.hpp

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
#include <string>
#include <utility>
#include <vector>

#include "probekit/common.hpp"
#include "probekit/featio.hpp"

namespace probekit::spanpool {

using featio::SpanAnnotation;
using featio::SpanKind;

struct PooledSet {
  std::string layer_id;
  SpanKind kind = SpanKind::word;
  Matrix vectors;                   // N x D
  std::vector<std::string> labels;  // N

  std::size_t size() const { return labels.size(); }
};

struct SkippedSpan {
  std::size_t index;  // position in the input span list
  std::string reason;
};

struct PoolResult {
  PooledSet set;
  std::vector<SkippedSpan> skipped;
};

// [start, end) at base resolution -> [floor(start/r), ceil(end/r)) at layer resolution.
std::pair<std::int64_t, std::int64_t> remap_span(const SpanAnnotation& span, int base_period_ms,
                                                 int layer_period_ms);

// Mean of the dump rows inside each remapped span. Spans that fall outside the
// dump are reported in `skipped` and do not stop the remaining spans.
PoolResult pool_spans(const featio::FeatureDump& dump, const std::vector<SpanAnnotation>& spans,
                      int base_period_ms);

// n rows uniformly without replacement (partial Fisher-Yates), in draw order.
PooledSet sample_pooled(const PooledSet& set, std::size_t n, std::uint64_t seed);

// The row indices sample_pooled would pick; lets several layers share one draw.
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n, std::uint64_t seed);

PooledSet select_rows(const PooledSet& set, const std::vector<std::size_t>& rows);

// Persistence: <dir>/<layer_id>.prbf (f64) + <dir>/<layer_id>.labels (one per line),
// and <dir>/pooled.json listing layer order, kind and frame periods.
struct PooledLayerInfo {
  std::string layer_id;
  int frame_period_ms = 0;
};

void write_pooled_dir(const std::vector<PooledSet>& layers, const std::vector<int>& periods,
                      const featio::fs::path& dir);
std::vector<PooledSet> read_pooled_dir(const featio::fs::path& dir,
                                       std::vector<PooledLayerInfo>* info = nullptr);

}  // namespace probekit::spanpool

namespace probekit::spanpool {

// Pools every layer of every utterance. Spans are matched to manifests by
// utterance id and filtered to `kind`; the result has one PooledSet per layer
// (manifest order of the first manifest), rows in annotation order.
struct CorpusPoolResult {
  std::vector<PooledSet> layers;
  std::vector<int> periods;
  std::size_t skipped = 0;
  std::vector<std::string> messages;
};

CorpusPoolResult pool_corpus(const std::vector<featio::Manifest>& manifests,
                             const std::vector<SpanAnnotation>& spans, SpanKind kind,
                             int base_period_ms);

}  // namespace probekit::spanpool
