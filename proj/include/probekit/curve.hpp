// include/probekit/curve.hpp

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

#include <filesystem>
#include <string>
#include <vector>

namespace probekit {

// One value per layer, in architectural order.
struct CurvePoint {
  std::string layer_id;
  double value = 0.0;
};

using Curve = std::vector<CurvePoint>;

// Two-column CSV: header "layer_id,score", then one row per layer.
void write_curve(const Curve& curve, const std::filesystem::path& path);
Curve read_curve(const std::filesystem::path& path);

}  // namespace probekit
