// include/probekit/testbed/params.hpp

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
#include "probekit/testbed/config.hpp"

namespace probekit::testbed {

// One named tensor inside the flat parameter buffer.
struct ParamRef {
  std::size_t offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

using MatMap = Eigen::Map<Matrix>;
using ConstMatMap = Eigen::Map<const Matrix>;

// All weights live in one contiguous double buffer so that gradients, SGD and
// finite-difference checks can treat the model as a flat vector.
class Parameters {
 public:
  ParamRef add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  const ParamRef& ref(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  ConstMatMap view(const ParamRef& r) const { return {values_.data() + r.offset, r.rows, r.cols}; }
  MatMap view(const ParamRef& r) { return {values_.data() + r.offset, r.rows, r.cols}; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  // Tensor names in allocation order.
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<double> values_;
  std::vector<std::string> names_;
  std::map<std::string, ParamRef> index_;
};

// Gradient buffer with the same layout as a Parameters instance.
struct Gradients {
  std::vector<double> values;
  MatMap view(const ParamRef& r) { return {values.data() + r.offset, r.rows, r.cols}; }
};

// Allocates every tensor the config needs and initializes from config.seed:
// projections ~ N(0, 1/fan_in), LayerNorm gain 1 / bias 0, sampling affines
// identity, mask embedding ~ N(0, 1).
Parameters build_parameters(const ModelConfig& config);

// Adds N(0, scale^2) noise to every entry (tests use this to get generic weights).
void perturb(Parameters& params, std::uint64_t seed, double scale);

// <dir>/config.json + <dir>/params.prbf (1 x P, f64, bit exact).
void save_model(const ModelConfig& config, const Parameters& params, const std::filesystem::path& dir);
std::pair<ModelConfig, Parameters> load_model(const std::filesystem::path& dir);

}  // namespace probekit::testbed
