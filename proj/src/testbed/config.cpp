// src/testbed/config.cpp

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

#include "probekit/testbed/config.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "probekit/common.hpp"

namespace probekit::testbed {

std::string_view to_string(ResidualMode mode) {
  return mode == ResidualMode::pre_decoder ? "pre_decoder" : "post_decoder";
}

ResidualMode parse_residual_mode(std::string_view token) {
  if (token == "pre_decoder") return ResidualMode::pre_decoder;
  if (token == "post_decoder") return ResidualMode::post_decoder;
  throw ValidationError("unknown residual_mode '" + std::string(token) + "'");
}

int ModelConfig::levels() const {
  if (downsampling_enabled) return static_cast<int>(resolutions_ms.size());
  return (blocks() + 1) / 2;
}

int ModelConfig::level_of_block(int block) const {
  const int L = levels();
  return block < L ? block : 2 * (L - 1) - block;
}

int ModelConfig::ratio(int level) const {
  if (!downsampling_enabled) return 1;
  return resolutions_ms.at(static_cast<std::size_t>(level) + 1) / resolutions_ms.at(static_cast<std::size_t>(level));
}

int ModelConfig::cumulative_ratio(int level) const {
  if (!downsampling_enabled) return 1;
  return resolutions_ms.at(static_cast<std::size_t>(level)) / resolutions_ms.front();
}

int ModelConfig::period_ms(int level) const { return resolutions_ms.front() * cumulative_ratio(level); }

int ModelConfig::total_layers() const {
  return std::accumulate(layers_per_encoder.begin(), layers_per_encoder.end(), 0);
}

std::vector<std::string> validate(const ModelConfig& c) {
  std::vector<std::string> errors;
  auto fail = [&](const std::string& field, const std::string& msg) { errors.push_back(field + ": " + msg); };

  if (c.resolutions_ms.empty()) fail("resolutions_ms", "must not be empty");
  for (int r : c.resolutions_ms)
    if (r <= 0) fail("resolutions_ms", "periods must be positive");
  for (std::size_t i = 1; i < c.resolutions_ms.size(); ++i) {
    const int a = c.resolutions_ms[i - 1];
    const int b = c.resolutions_ms[i];
    if (a > 0 && (b % a != 0 || b / a < 2))
      fail("resolutions_ms", "adjacent resolutions " + std::to_string(a) + " and " + std::to_string(b) +
                                 " must differ by an integer ratio >= 2");
  }
  const auto nblocks = c.layers_per_encoder.size();
  if (nblocks == 0) fail("layers_per_encoder", "must not be empty");
  for (int n : c.layers_per_encoder)
    if (n < 1) fail("layers_per_encoder", "every encoder needs at least one layer");
  if (c.downsampling_enabled) {
    const auto expected = 2 * c.resolutions_ms.size() - 1;
    if (!c.resolutions_ms.empty() && nblocks != expected)
      fail("layers_per_encoder", "has " + std::to_string(nblocks) + " entries, expected 2*" +
                                     std::to_string(c.resolutions_ms.size()) + "-1 = " + std::to_string(expected));
  } else {
    if (c.resolutions_ms.size() != 1)
      fail("resolutions_ms", "with downsampling disabled only the base period may be listed");
    if (nblocks % 2 != 1) fail("layers_per_encoder", "needs an odd number of entries");
  }
  if (c.input_dim < 1) fail("input_dim", "must be positive");
  if (c.dim < 1) fail("dim", "must be positive");
  if (c.heads < 1) fail("heads", "must be positive");
  if (c.heads >= 1 && c.dim % c.heads != 0) fail("heads", "must divide dim");
  if (c.ffn_dim < 1) fail("ffn_dim", "must be positive");
  if (c.num_classes < 2) fail("num_classes", "needs at least 2 classes");
  if (!(c.aux_loss_weight >= 0.0)) fail("aux_loss_weight", "must be non-negative");
  if (!(c.mask_prob > 0.0 && c.mask_prob <= 1.0)) fail("mask_prob", "must lie in (0, 1]");
  if (c.mask_span < 1) fail("mask_span", "must be positive");
  return errors;
}

void validate_or_throw(const ModelConfig& config) {
  const auto errors = validate(config);
  if (errors.empty()) return;
  std::string msg = "invalid model config";
  if (!config.name.empty()) msg += " '" + config.name + "'";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ValidationError(msg);
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"hubert-base-toy", "mr-base-toy", "b2-a",
                                              "b2-b",            "b4-a",        "b5-a"};
  return names;
}

ModelConfig preset(std::string_view name) {
  ModelConfig c;
  c.name = std::string(name);
  if (name == "hubert-base-toy") {
    c.resolutions_ms = {20};
    c.layers_per_encoder = {12};
    c.downsampling_enabled = false;
    c.aux_loss_enabled = false;
  } else if (name == "mr-base-toy") {
    c.resolutions_ms = {20, 40};
    c.layers_per_encoder = {4, 4, 4};
  } else if (name == "b2-a") {
    c.resolutions_ms = {20, 40, 80};
    c.layers_per_encoder = {3, 2, 2, 2, 3};
  } else if (name == "b2-b") {
    c.resolutions_ms = {20, 40, 80};
    c.layers_per_encoder = {2, 2, 4, 2, 2};
  } else if (name == "b4-a") {
    c.resolutions_ms = {20, 40};
    c.layers_per_encoder = {4, 4, 4};
    c.aux_loss_enabled = false;
  } else if (name == "b5-a") {
    c.resolutions_ms = {20};
    c.layers_per_encoder = {4, 4, 4};
    c.downsampling_enabled = false;
  } else {
    throw ValidationError("unknown preset '" + std::string(name) + "'");
  }
  return c;
}

namespace {

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  j["resolutions_ms"] = c.resolutions_ms;
  j["layers_per_encoder"] = c.layers_per_encoder;
  j["downsampling_enabled"] = c.downsampling_enabled;
  j["aux_loss_enabled"] = c.aux_loss_enabled;
  j["aux_loss_weight"] = c.aux_loss_weight;
  j["residual_mode"] = std::string(to_string(c.residual_mode));
  j["input_dim"] = c.input_dim;
  j["dim"] = c.dim;
  j["heads"] = c.heads;
  j["ffn_dim"] = c.ffn_dim;
  j["num_classes"] = c.num_classes;
  j["mask_prob"] = c.mask_prob;
  j["mask_span"] = c.mask_span;
  j["seed"] = c.seed;
  return j;
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    errors.push_back(std::string(key) + ": wrong type");
  }
}

}  // namespace

ModelConfig config_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config does not parse: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  ModelConfig c;
  if (j.contains("preset")) c = preset(j.at("preset").get<std::string>());
  std::vector<std::string> errors;
  read_field(j, "name", c.name, errors);
  read_field(j, "resolutions_ms", c.resolutions_ms, errors);
  read_field(j, "layers_per_encoder", c.layers_per_encoder, errors);
  read_field(j, "downsampling_enabled", c.downsampling_enabled, errors);
  read_field(j, "aux_loss_enabled", c.aux_loss_enabled, errors);
  read_field(j, "aux_loss_weight", c.aux_loss_weight, errors);
  read_field(j, "input_dim", c.input_dim, errors);
  read_field(j, "dim", c.dim, errors);
  read_field(j, "heads", c.heads, errors);
  read_field(j, "ffn_dim", c.ffn_dim, errors);
  read_field(j, "num_classes", c.num_classes, errors);
  read_field(j, "mask_prob", c.mask_prob, errors);
  read_field(j, "mask_span", c.mask_span, errors);
  read_field(j, "seed", c.seed, errors);
  if (j.contains("residual_mode")) {
    try {
      c.residual_mode = parse_residual_mode(j.at("residual_mode").get<std::string>());
    } catch (const std::exception& e) {
      errors.push_back(std::string("residual_mode: ") + e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid model config";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  validate_or_throw(c);
  return c;
}

std::string config_to_json_text(const ModelConfig& config) { return to_json(config).dump(2) + "\n"; }

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  ModelConfig c = config_from_json_text(ss.str());
  if (c.name.empty()) c.name = path.stem().string();
  return c;
}

ModelConfig resolve_config(const std::string& name_or_path) {
  for (const auto& n : preset_names())
    if (n == name_or_path) return preset(n);
  if (std::filesystem::exists(name_or_path)) return load_config(name_or_path);
  throw ValidationError("'" + name_or_path + "' is neither a preset nor a config file");
}

std::vector<std::string> check_comparison_set(const std::vector<ModelConfig>& configs) {
  std::vector<std::string> errors;
  if (configs.empty()) return errors;
  const int total = configs.front().total_layers();
  for (const auto& c : configs) {
    if (c.total_layers() != total)
      errors.push_back("total_layers: " + c.name + " has " + std::to_string(c.total_layers()) +
                       " layers, " + configs.front().name + " has " + std::to_string(total));
  }
  return errors;
}

}  // namespace probekit::testbed
