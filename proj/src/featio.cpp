// src/featio.cpp

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

#include "probekit/featio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "probekit/textio.hpp"

namespace probekit::featio {

static_assert(std::endian::native == std::endian::little,
              "dump I/O assumes a little-endian host");

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(ss).str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::string_view to_string(SpanKind kind) {
  switch (kind) {
    case SpanKind::word: return "word";
    case SpanKind::phone: return "phone";
    case SpanKind::utterance: return "utterance";
  }
  return "?";
}

SpanKind parse_span_kind(std::string_view token) {
  if (token == "word") return SpanKind::word;
  if (token == "phone") return SpanKind::phone;
  if (token == "utterance") return SpanKind::utterance;
  throw ValidationError("unknown span kind '" + std::string(token) + "'");
}

void validate_dump(const FeatureDump& dump) {
  if (dump.data.rows() < 1 || dump.data.cols() < 1)
    throw ValidationError("dump '" + dump.layer_id + "' must have T >= 1 and D >= 1");
  if (!dump.data.allFinite())
    throw ValidationError("dump '" + dump.layer_id + "' contains non-finite values");
}

void write_dump(const FeatureDump& dump, const fs::path& path, DType dtype) {
  validate_dump(dump);
  const auto rows = static_cast<std::uint64_t>(dump.data.rows());
  const auto cols = static_cast<std::uint64_t>(dump.data.cols());
  const std::size_t elem = dtype == DType::f32 ? 4 : 8;

  std::string bytes;
  bytes.reserve(kHeaderBytes + rows * cols * elem);
  bytes.append(kMagic, 4);
  bytes.push_back(static_cast<char>(kVersion));
  bytes.push_back(static_cast<char>(dtype));
  bytes.push_back(static_cast<char>(2));
  put_u64(bytes, rows);
  put_u64(bytes, cols);

  const double* src = dump.data.data();  // row-major
  const std::size_t n = rows * cols;
  if (dtype == DType::f32) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto f = static_cast<float>(src[i]);
      if (!std::isfinite(f))
        throw ValidationError("value overflows f32 in dump '" + dump.layer_id + "'");
      char buf[4];
      std::memcpy(buf, &f, 4);
      bytes.append(buf, 4);
    }
  } else {
    bytes.append(reinterpret_cast<const char*>(src), n * 8);
  }
  write_file(path, bytes);
}

FeatureDump read_dump(const fs::path& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::string where = path.string();
  if (bytes.size() < kHeaderBytes) throw FormatError(where + ": truncated header");
  if (std::memcmp(p, kMagic, 4) != 0) throw FormatError(where + ": bad magic");
  if (p[4] != kVersion) throw FormatError(where + ": unsupported version " + std::to_string(p[4]));
  if (p[5] > 1) throw FormatError(where + ": unknown dtype code " + std::to_string(p[5]));
  if (p[6] != 2) throw FormatError(where + ": unsupported rank " + std::to_string(p[6]));
  const auto dtype = static_cast<DType>(p[5]);
  const std::uint64_t rows = get_u64(p + 7);
  const std::uint64_t cols = get_u64(p + 15);
  if (rows == 0 || cols == 0) throw FormatError(where + ": zero dimension");

  const std::uint64_t elem = dtype == DType::f32 ? 4 : 8;
  const std::uint64_t max_elems = std::numeric_limits<std::uint64_t>::max() / elem;
  if (rows > max_elems / cols) throw FormatError(where + ": dimensions overflow");
  const std::uint64_t payload = rows * cols * elem;
  const std::uint64_t available = bytes.size() - kHeaderBytes;
  if (available < payload)
    throw FormatError(where + ": truncated payload (" + std::to_string(available / elem) +
                      " values, header declares " + std::to_string(rows * cols) + ")");
  if (available > payload) throw FormatError(where + ": trailing bytes after payload");

  FeatureDump dump;
  dump.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  double* dst = dump.data.data();
  const unsigned char* src = p + kHeaderBytes;
  const std::size_t n = rows * cols;
  if (dtype == DType::f32) {
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, src + 4 * i, 4);
      dst[i] = f;
    }
  } else {
    std::memcpy(dst, src, n * 8);
  }
  if (!dump.data.allFinite()) throw FormatError(where + ": non-finite values in payload");
  return dump;
}

std::vector<SpanAnnotation> read_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<SpanAnnotation> spans;
  std::vector<std::string> problems;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cols = text::split(line, '\t');
    const std::string at = path.string() + ":" + std::to_string(lineno) + ": ";
    if (cols.size() != 5) {
      problems.push_back(at + "expected 5 tab-separated columns, got " + std::to_string(cols.size()));
      continue;
    }
    try {
      SpanAnnotation s;
      s.utterance_id = cols[0];
      s.kind = parse_span_kind(cols[1]);
      s.label = cols[2];
      s.start_frame = text::parse_int(cols[3]);
      s.end_frame = text::parse_int(cols[4]);
      if (s.utterance_id.empty() || s.label.empty())
        throw ValidationError("empty utterance id or label");
      if (s.start_frame < 0) throw ValidationError("negative start frame");
      if (s.start_frame >= s.end_frame)
        throw ValidationError("empty span (start " + std::to_string(s.start_frame) +
                              " >= end " + std::to_string(s.end_frame) + ")");
      spans.push_back(std::move(s));
    } catch (const ValidationError& e) {
      problems.push_back(at + e.what());
    }
  }

  // Spans of one utterance and kind must not overlap.
  std::vector<std::size_t> idx(spans.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = spans[a];
    const auto& y = spans[b];
    return std::tie(x.utterance_id, x.kind, x.start_frame) <
           std::tie(y.utterance_id, y.kind, y.start_frame);
  });
  for (std::size_t i = 1; i < idx.size(); ++i) {
    const auto& prev = spans[idx[i - 1]];
    const auto& cur = spans[idx[i]];
    if (prev.utterance_id == cur.utterance_id && prev.kind == cur.kind &&
        cur.start_frame < prev.end_frame) {
      problems.push_back(path.string() + ": overlapping " + std::string(to_string(cur.kind)) +
                         " spans in " + cur.utterance_id + " at frames " +
                         std::to_string(cur.start_frame));
    }
  }

  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " invalid annotation row(s):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw FormatError(msg);
  }
  return spans;
}

void write_annotations(const std::vector<SpanAnnotation>& spans, const fs::path& path) {
  std::ostringstream out;
  for (const auto& s : spans) {
    out << s.utterance_id << '\t' << to_string(s.kind) << '\t' << s.label << '\t'
        << s.start_frame << '\t' << s.end_frame << '\n';
  }
  write_file(path, out.str());
}

EmbeddingTable read_embeddings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  EmbeddingTable table;
  bool one_hot = true;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tokens = text::split_ws(line);
    if (tokens.empty()) continue;
    const std::string at = path.string() + ":" + std::to_string(lineno) + ": ";
    if (tokens.size() < 2) throw FormatError(at + "row has a label but no values");
    std::vector<double> values;
    values.reserve(tokens.size() - 1);
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      try {
        values.push_back(text::parse_double(tokens[i]));
      } catch (const ValidationError& e) {
        throw FormatError(at + e.what());
      }
    }
    if (table.dim == 0) table.dim = values.size();
    if (values.size() != table.dim)
      throw FormatError(at + "dimension mismatch: expected " + std::to_string(table.dim) +
                        ", got " + std::to_string(values.size()));
    if (table.entries.count(tokens[0])) throw FormatError(at + "duplicate label '" + tokens[0] + "'");
    const auto ones = std::count(values.begin(), values.end(), 1.0);
    const auto zeros = std::count(values.begin(), values.end(), 0.0);
    if (ones != 1 || static_cast<std::size_t>(ones + zeros) != values.size()) one_hot = false;
    table.order.push_back(tokens[0]);
    table.entries.emplace(tokens[0], std::move(values));
  }
  if (table.entries.empty()) throw FormatError(path.string() + ": no embeddings");
  table.kind = one_hot ? EmbeddingKind::one_hot : EmbeddingKind::dense;
  return table;
}

void write_embeddings(const EmbeddingTable& table, const fs::path& path) {
  std::ostringstream out;
  for (const auto& label : table.order) {
    out << label;
    for (double v : table.entries.at(label)) out << ' ' << text::format_double(v);
    out << '\n';
  }
  write_file(path, out.str());
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  nlohmann::ordered_json j;
  j["utterance_id"] = manifest.utterance_id;
  auto& layers = j["layers"] = nlohmann::ordered_json::array();
  std::set<std::string> seen;
  const fs::path base = path.parent_path();
  for (const auto& e : manifest.layers) {
    if (!seen.insert(e.layer_id).second)
      throw ValidationError("duplicate layer id '" + e.layer_id + "' in manifest");
    fs::path rel = e.path;
    {
      const auto candidate = fs::absolute(e.path).lexically_normal().lexically_relative(
          fs::absolute(base.empty() ? fs::path(".") : base).lexically_normal());
      if (!candidate.empty()) rel = candidate;
    }
    nlohmann::ordered_json entry;
    entry["layer_id"] = e.layer_id;
    entry["path"] = rel.generic_string();
    entry["frame_period_ms"] = e.frame_period_ms;
    layers.push_back(std::move(entry));
  }
  write_file(path, j.dump(2) + "\n");
}

Manifest read_manifest(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  Manifest m;
  try {
    m.utterance_id = j.at("utterance_id").get<std::string>();
    std::set<std::string> seen;
    for (const auto& entry : j.at("layers")) {
      LayerEntry e;
      e.layer_id = entry.at("layer_id").get<std::string>();
      e.path = entry.at("path").get<std::string>();
      if (e.path.is_relative()) e.path = path.parent_path() / e.path;
      e.frame_period_ms = entry.at("frame_period_ms").get<int>();
      if (e.frame_period_ms <= 0)
        throw FormatError(path.string() + ": non-positive frame period for " + e.layer_id);
      if (!seen.insert(e.layer_id).second)
        throw FormatError(path.string() + ": duplicate layer id '" + e.layer_id + "'");
      m.layers.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

std::vector<FeatureDump> load_layers(const Manifest& manifest) {
  std::vector<FeatureDump> out;
  out.reserve(manifest.layers.size());
  for (const auto& e : manifest.layers) {
    if (!fs::exists(e.path)) throw IoError("manifest entry " + e.layer_id + ": missing " + e.path.string());
    auto dump = read_dump(e.path);
    dump.layer_id = e.layer_id;
    dump.frame_period_ms = e.frame_period_ms;
    out.push_back(std::move(dump));
  }
  return out;
}

}  // namespace probekit::featio
