// src/curve.cpp

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

#include "probekit/curve.hpp"

#include <fstream>

#include "probekit/common.hpp"
#include "probekit/textio.hpp"

namespace probekit {

void write_curve(const Curve& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "layer_id,score\n";
  for (const auto& p : curve) out << p.layer_id << ',' << text::format_double(p.value) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Curve read_curve(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("layer_id,", 0) != 0)
    throw FormatError(path.string() + ": missing 'layer_id,...' header");
  Curve curve;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = text::split(line, ',');
    if (cols.size() != 2)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 2 columns");
    try {
      curve.push_back({cols[0], text::parse_double(cols[1])});
    } catch (const ValidationError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return curve;
}

}  // namespace probekit
