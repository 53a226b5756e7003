// include/probekit/featio.hpp

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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "probekit/common.hpp"

namespace probekit::featio {

namespace fs = std::filesystem;

// On-disk layout of a dump (all integers little-endian):
//   "PRBF" | version u8 = 1 | dtype u8 (0 f32, 1 f64) | rank u8 = 2 |
//   rows u64 | cols u64 | row-major payload
// Header is 23 bytes. Layer id and frame period live in the manifest.
inline constexpr char kMagic[4] = {'P', 'R', 'B', 'F'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 23;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct FeatureDump {
  std::string layer_id;
  int frame_period_ms = 0;
  Matrix data;  // T x D, always held in double precision

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index dims() const { return data.cols(); }
};

enum class SpanKind { word, phone, utterance };

struct SpanAnnotation {
  std::string utterance_id;
  std::string label;
  SpanKind kind = SpanKind::word;
  std::int64_t start_frame = 0;  // inclusive, base resolution
  std::int64_t end_frame = 0;    // exclusive, base resolution

  bool operator==(const SpanAnnotation&) const = default;
};

enum class EmbeddingKind { one_hot, dense };

struct EmbeddingTable {
  EmbeddingKind kind = EmbeddingKind::dense;
  std::size_t dim = 0;
  std::map<std::string, std::vector<double>> entries;
  // Labels in file order.
  std::vector<std::string> order;

  bool contains(const std::string& label) const { return entries.count(label) != 0; }
};

struct LayerEntry {
  std::string layer_id;
  fs::path path;
  int frame_period_ms = 0;
};

struct Manifest {
  std::string utterance_id;
  std::vector<LayerEntry> layers;
};

std::string_view to_string(SpanKind kind);
SpanKind parse_span_kind(std::string_view token);

// Only the matrix goes into the file; the caller records layer_id/period in a manifest.
void write_dump(const FeatureDump& dump, const fs::path& path, DType dtype = DType::f32);
FeatureDump read_dump(const fs::path& path);

// Rejects non-finite data. Shared by every writer of dumps.
void validate_dump(const FeatureDump& dump);

std::vector<SpanAnnotation> read_annotations(const fs::path& path);
void write_annotations(const std::vector<SpanAnnotation>& spans, const fs::path& path);

EmbeddingTable read_embeddings(const fs::path& path);
void write_embeddings(const EmbeddingTable& table, const fs::path& path);

// Manifest paths are stored relative to the manifest's directory when possible.
void write_manifest(const Manifest& manifest, const fs::path& path);
Manifest read_manifest(const fs::path& path);
// Reads every dump named by the manifest; frame periods come from the manifest.
std::vector<FeatureDump> load_layers(const Manifest& manifest);

}  // namespace probekit::featio
