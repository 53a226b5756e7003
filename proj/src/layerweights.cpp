// src/layerweights.cpp

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

#include "probekit/layerweights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"
#include "probekit/common.hpp"
#include "probekit/textio.hpp"

namespace probekit::layerweights {

namespace {
constexpr double kDominanceSlack = 1e-9;
}

Mode parse_mode(std::string_view token) {
  if (token == "softmax") return Mode::softmax;
  if (token == "already_normalized") return Mode::already_normalized;
  throw ValidationError("unknown weight mode '" + std::string(token) + "'");
}

std::string_view to_string(Mode mode) {
  return mode == Mode::softmax ? "softmax" : "already_normalized";
}

std::vector<double> normalize(const std::vector<double>& raw, Mode mode) {
  if (raw.empty()) throw ValidationError("no layer weights");
  for (double v : raw)
    if (!std::isfinite(v)) throw ValidationError("non-finite layer weight");
  std::vector<double> out(raw.size());
  if (mode == Mode::softmax) {
    const double mx = *std::max_element(raw.begin(), raw.end());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = std::exp(raw[i] - mx);
  } else {
    for (double v : raw)
      if (v < 0.0) throw ValidationError("negative weight in already_normalized mode");
    const double s = std::accumulate(raw.begin(), raw.end(), 0.0);
    if (std::abs(s - 1.0) > 1e-6)
      throw ValidationError("weights sum to " + text::format_double(s) + ", expected 1");
    out = raw;
  }
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& v : out) v /= total;
  return out;
}

Report report(const LayerWeights& weights, const std::vector<Group>& groups, std::size_t top_k) {
  const auto& w = weights.normalized;
  if (w.size() != weights.layer_ids.size())
    throw ValidationError("task " + weights.task + ": weight count does not match layer ids");
  Report r;
  r.task = weights.task;
  r.max_entropy_nats = std::log(static_cast<double>(w.size()));
  for (double v : w)
    if (v > 0.0) r.entropy_nats -= v * std::log(v);

  for (const auto& g : groups) {
    GroupMass m{g.name, 0.0, g.threshold, false};
    std::set<std::string> seen;
    for (const auto& id : g.layer_ids) {
      const auto it = std::find(weights.layer_ids.begin(), weights.layer_ids.end(), id);
      if (it == weights.layer_ids.end())
        throw ValidationError("group " + g.name + " names unknown layer '" + id + "' (task " + weights.task + ")");
      if (!seen.insert(id).second) continue;
      m.mass += w[static_cast<std::size_t>(it - weights.layer_ids.begin())];
    }
    m.dominant = m.mass >= g.threshold - kDominanceSlack;
    r.groups.push_back(m);
  }

  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  for (std::size_t i = 0; i < std::min(top_k, order.size()); ++i)
    r.top.emplace_back(weights.layer_ids[order[i]], w[order[i]]);
  return r;
}

std::vector<LayerWeights> read_weights(const featio::fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Mode mode = Mode::softmax;
  std::vector<LayerWeights> tasks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string at = path.string() + ":" + std::to_string(lineno) + ": ";
    if (line[0] == '#') {
      const auto tokens = text::split_ws(line.substr(1));
      if (tokens.size() == 2 && tokens[0] == "mode:") {
        try {
          mode = parse_mode(tokens[1]);
        } catch (const ValidationError& e) {
          throw FormatError(at + e.what());
        }
      }
      continue;
    }
    const auto cols = text::split(line, '\t');
    if (cols.size() != 3) throw FormatError(at + "expected task, layer_id, value");
    auto it = std::find_if(tasks.begin(), tasks.end(), [&](const auto& t) { return t.task == cols[0]; });
    if (it == tasks.end()) {
      tasks.push_back({cols[0], {}, {}, {}});
      it = std::prev(tasks.end());
    }
    if (std::find(it->layer_ids.begin(), it->layer_ids.end(), cols[1]) != it->layer_ids.end())
      throw FormatError(at + "duplicate layer '" + cols[1] + "' for task " + cols[0]);
    it->layer_ids.push_back(cols[1]);
    try {
      it->raw.push_back(text::parse_double(cols[2]));
    } catch (const ValidationError& e) {
      throw FormatError(at + e.what());
    }
  }
  if (tasks.empty()) throw FormatError(path.string() + ": no weights");
  for (auto& t : tasks) t.normalized = normalize(t.raw, mode);
  return tasks;
}

void write_weights(const std::vector<LayerWeights>& tasks, Mode mode, const featio::fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# mode: " << to_string(mode) << '\n';
  for (const auto& t : tasks)
    for (std::size_t i = 0; i < t.layer_ids.size(); ++i)
      out << t.task << '\t' << t.layer_ids[i] << '\t' << text::format_double(t.raw[i]) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Group parse_group(std::string_view arg, double default_threshold) {
  const auto eq = arg.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ValidationError("group must look like name=layer,layer[@threshold]: '" + std::string(arg) + "'");
  Group g;
  g.name = std::string(arg.substr(0, eq));
  std::string_view rest = arg.substr(eq + 1);
  g.threshold = default_threshold;
  if (const auto at = rest.find('@'); at != std::string_view::npos) {
    g.threshold = text::parse_double(rest.substr(at + 1));
    rest = rest.substr(0, at);
  }
  for (auto& id : text::split(rest, ','))
    if (!id.empty()) g.layer_ids.push_back(id);
  if (g.layer_ids.empty()) throw ValidationError("group " + g.name + " has no layers");
  return g;
}

std::string report_json(const std::vector<Report>& reports) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json t;
    t["task"] = r.task;
    t["entropy_nats"] = r.entropy_nats;
    t["max_entropy_nats"] = r.max_entropy_nats;
    auto& groups = t["groups"] = nlohmann::ordered_json::array();
    for (const auto& g : r.groups)
      groups.push_back({{"name", g.name}, {"mass", g.mass}, {"threshold", g.threshold}, {"dominant", g.dominant}});
    auto& top = t["top"] = nlohmann::ordered_json::array();
    for (const auto& [id, w] : r.top) top.push_back({{"layer_id", id}, {"weight", w}});
    j.push_back(std::move(t));
  }
  return j.dump(2) + "\n";
}

}  // namespace probekit::layerweights
