// src/spanpool.cpp

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

#include "probekit/spanpool.hpp"

#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "probekit/kernels.hpp"
#include "probekit/parallel.hpp"

namespace probekit::spanpool {

std::pair<std::int64_t, std::int64_t> remap_span(const SpanAnnotation& span, int base_period_ms,
                                                 int layer_period_ms) {
  if (base_period_ms <= 0 || layer_period_ms <= 0)
    throw ValidationError("frame periods must be positive");
  if (layer_period_ms % base_period_ms != 0)
    throw ValidationError("layer period " + std::to_string(layer_period_ms) +
                          " ms is not a multiple of base period " + std::to_string(base_period_ms) +
                          " ms");
  const std::int64_t r = layer_period_ms / base_period_ms;
  const std::int64_t start = span.start_frame / r;
  const std::int64_t end = (span.end_frame + r - 1) / r;
  return {start, end};
}

PoolResult pool_spans(const featio::FeatureDump& dump, const std::vector<SpanAnnotation>& spans,
                      int base_period_ms) {
  PoolResult out;
  out.set.layer_id = dump.layer_id;
  if (!spans.empty()) out.set.kind = spans.front().kind;
  const Eigen::Index T = dump.frames();
  const Eigen::Index D = dump.dims();
  const auto& k = kernels::active();

  std::vector<Eigen::Index> kept_rows;
  Matrix rows(static_cast<Eigen::Index>(spans.size()), D);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto [start, end] = remap_span(spans[i], base_period_ms, dump.frame_period_ms);
    if (start < 0 || end > T || start >= end) {
      out.skipped.push_back({i, "span " + std::to_string(i) + " (" + spans[i].utterance_id + " " +
                                    spans[i].label + ") maps to [" + std::to_string(start) + ", " +
                                    std::to_string(end) + ") outside " + std::to_string(T) +
                                    " frames of " + dump.layer_id});
      continue;
    }
    const auto row = static_cast<Eigen::Index>(out.set.labels.size());
    rows.row(row).setZero();
    k.add_rows(dump.data.row(start).data(), static_cast<std::size_t>(end - start),
               static_cast<std::size_t>(D), rows.row(row).data());
    rows.row(row) /= static_cast<double>(end - start);
    out.set.labels.push_back(spans[i].label);
  }
  out.set.vectors = rows.topRows(static_cast<Eigen::Index>(out.set.labels.size()));
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n, std::uint64_t seed) {
  if (n > total)
    throw ValidationError("cannot sample " + std::to_string(n) + " items from " +
                          std::to_string(total));
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

PooledSet select_rows(const PooledSet& set, const std::vector<std::size_t>& rows) {
  PooledSet out;
  out.layer_id = set.layer_id;
  out.kind = set.kind;
  out.vectors.resize(static_cast<Eigen::Index>(rows.size()), set.vectors.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.vectors.row(static_cast<Eigen::Index>(i)) = set.vectors.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(set.labels.at(rows[i]));
  }
  return out;
}

PooledSet sample_pooled(const PooledSet& set, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample size must be positive");
  return select_rows(set, sample_indices(set.size(), n, seed));
}

CorpusPoolResult pool_corpus(const std::vector<featio::Manifest>& manifests,
                             const std::vector<SpanAnnotation>& spans, SpanKind kind,
                             int base_period_ms) {
  if (manifests.empty()) throw ValidationError("no manifests to pool");
  std::map<std::string, std::vector<SpanAnnotation>> by_utt;
  for (const auto& s : spans)
    if (s.kind == kind) by_utt[s.utterance_id].push_back(s);

  const auto& reference = manifests.front().layers;
  for (const auto& m : manifests) {
    bool same = m.layers.size() == reference.size();
    for (std::size_t i = 0; same && i < reference.size(); ++i)
      same = m.layers[i].layer_id == reference[i].layer_id &&
             m.layers[i].frame_period_ms == reference[i].frame_period_ms;
    if (!same)
      throw ValidationError("manifest for " + m.utterance_id + " has a different layer layout than " +
                            manifests.front().utterance_id);
  }

  // Per utterance, per layer pooling; utterances are independent.
  std::vector<std::vector<PoolResult>> per_utt(manifests.size());
  parallel_for(manifests.size(), [&](std::size_t u) {
    const auto it = by_utt.find(manifests[u].utterance_id);
    if (it == by_utt.end()) return;
    const auto dumps = featio::load_layers(manifests[u]);
    for (const auto& d : dumps) per_utt[u].push_back(pool_spans(d, it->second, base_period_ms));
  });

  CorpusPoolResult out;
  const std::size_t L = reference.size();
  for (std::size_t l = 0; l < L; ++l) {
    PooledSet set;
    set.layer_id = reference[l].layer_id;
    set.kind = kind;
    Eigen::Index rows = 0;
    Eigen::Index dims = -1;
    for (const auto& utt : per_utt) {
      if (utt.empty()) continue;
      rows += utt[l].set.vectors.rows();
      if (dims < 0) dims = utt[l].set.vectors.cols();
    }
    if (dims < 0) throw ValidationError("no " + std::string(featio::to_string(kind)) + " spans match any manifest");
    set.vectors.resize(rows, dims);
    Eigen::Index r = 0;
    for (std::size_t u = 0; u < per_utt.size(); ++u) {
      if (per_utt[u].empty()) continue;
      const auto& res = per_utt[u][l];
      set.vectors.middleRows(r, res.set.vectors.rows()) = res.set.vectors;
      r += res.set.vectors.rows();
      set.labels.insert(set.labels.end(), res.set.labels.begin(), res.set.labels.end());
      out.skipped += res.skipped.size();
      for (const auto& s : res.skipped) out.messages.push_back(manifests[u].utterance_id + ": " + s.reason);
    }
    out.layers.push_back(std::move(set));
    out.periods.push_back(reference[l].frame_period_ms);
  }

  // Every layer must describe the same items for cross-layer comparisons.
  for (std::size_t l = 1; l < L; ++l) {
    if (out.layers[l].labels != out.layers[0].labels)
      throw ValidationError("layer " + out.layers[l].layer_id +
                            " pooled a different item set than " + out.layers[0].layer_id);
  }
  return out;
}

void write_pooled_dir(const std::vector<PooledSet>& layers, const std::vector<int>& periods,
                      const featio::fs::path& dir) {
  featio::fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["kind"] = layers.empty() ? "word" : std::string(featio::to_string(layers.front().kind));
  auto& arr = j["layers"] = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& set = layers[l];
    featio::FeatureDump dump{set.layer_id, periods.at(l), set.vectors};
    featio::write_dump(dump, dir / (set.layer_id + ".prbf"), featio::DType::f64);
    std::ofstream labels(dir / (set.layer_id + ".labels"), std::ios::trunc);
    if (!labels) throw IoError("cannot write labels in " + dir.string());
    for (const auto& s : set.labels) labels << s << '\n';
    if (!labels) throw IoError("cannot write labels in " + dir.string());
    arr.push_back({{"layer_id", set.layer_id}, {"frame_period_ms", periods.at(l)}});
  }
  std::ofstream meta(dir / "pooled.json", std::ios::trunc);
  meta << j.dump(2) << '\n';
  if (!meta) throw IoError("cannot write " + (dir / "pooled.json").string());
}

std::vector<PooledSet> read_pooled_dir(const featio::fs::path& dir,
                                       std::vector<PooledLayerInfo>* info) {
  const auto meta_path = dir / "pooled.json";
  std::ifstream meta(meta_path);
  if (!meta) throw IoError("cannot open " + meta_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  const SpanKind kind = featio::parse_span_kind(j.at("kind").get<std::string>());
  std::vector<PooledSet> out;
  for (const auto& entry : j.at("layers")) {
    PooledSet set;
    set.layer_id = entry.at("layer_id").get<std::string>();
    set.kind = kind;
    set.vectors = featio::read_dump(dir / (set.layer_id + ".prbf")).data;
    std::ifstream labels(dir / (set.layer_id + ".labels"));
    if (!labels) throw IoError("missing labels for layer " + set.layer_id + " in " + dir.string());
    std::string line;
    while (std::getline(labels, line)) set.labels.push_back(line);
    if (static_cast<Eigen::Index>(set.labels.size()) != set.vectors.rows())
      throw FormatError("layer " + set.layer_id + ": " + std::to_string(set.labels.size()) +
                        " labels for " + std::to_string(set.vectors.rows()) + " vectors");
    if (info) info->push_back({set.layer_id, entry.at("frame_period_ms").get<int>()});
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace probekit::spanpool
