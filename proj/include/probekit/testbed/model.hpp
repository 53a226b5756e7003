// include/probekit/testbed/model.hpp

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
#include <string>
#include <vector>

#include "probekit/common.hpp"
#include "probekit/featio.hpp"
#include "probekit/testbed/config.hpp"
#include "probekit/testbed/params.hpp"

namespace probekit::testbed {

struct TargetStream {
  std::vector<int> units;  // one per base-resolution frame, in [0, C)
  int period_ms = 20;
};

struct LossBreakdown {
  double main = 0.0;
  std::vector<double> aux;  // one per low-resolution level (empty when aux is off)
  double total = 0.0;
};

struct ForwardTrace {
  // Transformer layers T1..Tn and sampling modules D*/U* in execution order,
  // each with its native frame period.
  std::vector<featio::FeatureDump> layers;
  Matrix main_logits;              // T x C
  std::vector<Matrix> aux_logits;  // per aux level, T_l x C
  std::vector<int> aux_levels;
  std::vector<bool> mask;
  LossBreakdown loss;

  const featio::FeatureDump& layer(const std::string& id) const;
};

// Raised when a mask seed masks no frame; callers retry with another seed.
class EmptyMaskError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

// Each frame starts a span of `span` masked frames with probability `prob`.
std::vector<bool> make_mask(std::size_t frames, double prob, int span, std::uint64_t seed);

// Window-average r frames (last window zero-padded to r), then x W + b.
// Output has ceil(T / r) rows. r must be >= 2.
Matrix downsample(const Matrix& x, int ratio, const Matrix& weight, const Eigen::RowVectorXd& bias);

// Repeat each frame r times, truncate to target_len, then x W + b.
// Requires ceil(target_len / r) == x.rows().
Matrix upsample(const Matrix& x, int ratio, Eigen::Index target_len, const Matrix& weight,
                const Eigen::RowVectorXd& bias);

// Length of a stream after downsampling to `level`.
Eigen::Index level_length(const ModelConfig& config, Eigen::Index frames, int level);

class Model {
 public:
  explicit Model(ModelConfig config);
  Model(ModelConfig config, Parameters params);

  const ModelConfig& config() const { return config_; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  // Unmasked pass: layer outputs and logits, no loss.
  ForwardTrace run(const Matrix& frames) const;

  // Masked pass with losses. The mask comes from mask_seed; EmptyMaskError if
  // nothing is masked.
  ForwardTrace forward(const Matrix& frames, const TargetStream& targets, std::uint64_t mask_seed) const;
  ForwardTrace forward_with_mask(const Matrix& frames, const TargetStream& targets,
                                 const std::vector<bool>& mask) const;

  // Total loss and its gradient with respect to every parameter; `grad` is
  // resized to params().size().
  LossBreakdown loss_and_gradient(const Matrix& frames, const TargetStream& targets,
                                  const std::vector<bool>& mask, std::vector<double>& grad) const;

  // Layer ids in trace order without running the model.
  std::vector<std::string> layer_ids() const;

 private:
  ForwardTrace evaluate(const Matrix& frames, const TargetStream* targets, const std::vector<bool>* mask,
                        std::vector<double>* grad) const;

  ModelConfig config_;
  Parameters params_;
};

struct GradCheckOptions {
  double epsilon = 3e-3;  // five-point stencil step
  std::size_t samples = 256;  // at least one per tensor, the rest uniform
  std::uint64_t seed = 0;
  std::uint64_t mask_seed = 1;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
  std::size_t tensors_covered = 0;
  std::size_t tensors_total = 0;
};

// Analytic gradient of the total loss against five-point central differences.
// Relative error per entry = |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport grad_check(const Model& model, const Matrix& frames, const TargetStream& targets,
                           const GradCheckOptions& options = {});

// Unmasked forward; one dump per layer id at its native frame period.
std::vector<featio::FeatureDump> extract(const Model& model, const Matrix& frames);

// extract() written as <dir>/<layer_id>.prbf (f32) plus <dir>/manifest.json.
featio::Manifest extract_to_dir(const Model& model, const std::string& utterance_id,
                                const Matrix& frames, const featio::fs::path& dir);

}  // namespace probekit::testbed
