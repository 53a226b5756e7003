// include/probekit/testbed/config.hpp

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
#include <string>
#include <vector>

namespace probekit::testbed {

enum class ResidualMode {
  pre_decoder,   // skip added to the upsampled stream before the decoder block
  post_decoder,  // skip added to the decoder block's output
};

std::string_view to_string(ResidualMode mode);
ResidualMode parse_residual_mode(std::string_view token);

// Architecture and masking settings for one multi-resolution encoder.
//
// The stack has `levels()` resolution levels. With downsampling enabled the
// levels are the entries of resolutions_ms; otherwise resolutions_ms holds only
// the base period and the stack keeps (layers.size() + 1) / 2 levels that all
// run at that period. Block b runs at level b on the way down and at level
// 2 * (levels - 1) - b on the way up.
struct ModelConfig {
  std::string name;
  std::vector<int> resolutions_ms{20, 40};
  std::vector<int> layers_per_encoder{4, 4, 4};
  int input_dim = 16;
  int dim = 32;
  int heads = 4;
  int ffn_dim = 64;
  int num_classes = 16;
  bool downsampling_enabled = true;
  bool aux_loss_enabled = true;
  double aux_loss_weight = 1.0;
  ResidualMode residual_mode = ResidualMode::post_decoder;
  double mask_prob = 0.2;
  int mask_span = 3;
  std::uint64_t seed = 0;

  int levels() const;
  int blocks() const { return static_cast<int>(layers_per_encoder.size()); }
  int level_of_block(int block) const;
  // Frame ratio between level l and level l + 1 (1 when downsampling is off).
  int ratio(int level) const;
  // Ratio of level l's frame period to the base period.
  int cumulative_ratio(int level) const;
  int period_ms(int level) const;
  int total_layers() const;
};

// Empty when the config is valid; otherwise one message per violated field.
std::vector<std::string> validate(const ModelConfig& config);
void validate_or_throw(const ModelConfig& config);

// hubert-base-toy, mr-base-toy, b2-a, b2-b, b4-a, b5-a.
const std::vector<std::string>& preset_names();
ModelConfig preset(std::string_view name);

// JSON with the ModelConfig field names; {"preset": "b2-a", ...} starts from a
// preset and overrides the listed fields.
ModelConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ModelConfig& config);
ModelConfig load_config(const std::filesystem::path& path);

// A preset name or a path to a config file.
ModelConfig resolve_config(const std::string& name_or_path);

// Models compared side by side must share the total layer count.
std::vector<std::string> check_comparison_set(const std::vector<ModelConfig>& configs);

}  // namespace probekit::testbed
