// include/probekit/layerweights.hpp

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

#include <string>
#include <vector>

#include "probekit/featio.hpp"

namespace probekit::layerweights {

enum class Mode { softmax, already_normalized };

Mode parse_mode(std::string_view token);
std::string_view to_string(Mode mode);

struct LayerWeights {
  std::string task;
  std::vector<std::string> layer_ids;
  std::vector<double> raw;
  std::vector<double> normalized;
};

// softmax: exp-normalize with max subtraction. already_normalized: entries must
// be non-negative and sum to 1 within 1e-6; they are rescaled to sum to 1.
std::vector<double> normalize(const std::vector<double>& raw, Mode mode);

struct Group {
  std::string name;
  std::vector<std::string> layer_ids;
  double threshold = 0.4;  // group is "dominant" when its mass reaches this
};

struct GroupMass {
  std::string name;
  double mass = 0.0;
  double threshold = 0.0;
  bool dominant = false;
};

struct Report {
  std::string task;
  double entropy_nats = 0.0;
  double max_entropy_nats = 0.0;  // ln L
  std::vector<GroupMass> groups;
  std::vector<std::pair<std::string, double>> top;  // by weight, index order on ties
};

Report report(const LayerWeights& weights, const std::vector<Group>& groups, std::size_t top_k = 3);

// TSV rows "task<TAB>layer_id<TAB>value". A "# mode: softmax" or
// "# mode: already_normalized" line declares how values are read (default
// softmax). Tasks and layers keep file order.
std::vector<LayerWeights> read_weights(const featio::fs::path& path);
void write_weights(const std::vector<LayerWeights>& tasks, Mode mode, const featio::fs::path& path);

// Parses "name=id1,id2[@threshold]".
Group parse_group(std::string_view arg, double default_threshold);

std::string report_json(const std::vector<Report>& reports);

}  // namespace probekit::layerweights
