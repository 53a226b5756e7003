// include/probekit/testbed/train.hpp

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
#include <functional>
#include <string>
#include <vector>

#include "probekit/testbed/model.hpp"
#include "probekit/testbed/synth.hpp"

namespace probekit::testbed {

struct TrainOptions {
  int steps = 2000;
  double lr = 0.05;
  int batch = 4;
  int eval_every = 250;
  double clip_norm = 0.0;  // global gradient norm clip; 0 disables
  std::uint64_t seed = 0;
};

struct EvalPoint {
  int step = 0;
  double loss = 0.0;
};

struct TrainHistory {
  // train_loss[s] is the minibatch loss before update s; steps + 1 entries,
  // the last one measured after the final update.
  std::vector<double> train_loss;
  std::vector<EvalPoint> heldout;
  // Mean loss over the training utterances with fixed masks, before and after training.
  double initial_train_eval = 0.0;
  double final_train_eval = 0.0;
};

class DivergenceError : public RuntimeError {
 public:
  DivergenceError(int step, const std::string& what) : RuntimeError(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

// Mean total loss over `ids`, each utterance masked with a seed derived from
// (seed, utterance index); seeds that mask nothing are skipped deterministically.
double evaluate_loss(const Model& model, const SynthCorpus& corpus, const std::vector<std::string>& ids,
                     std::uint64_t seed);

// Plain minibatch SGD on the masked prediction loss. Deterministic for a fixed
// model, corpus and options.
TrainHistory train_toy(Model& model, const SynthCorpus& corpus, const TrainOptions& options,
                       const std::function<void(const std::string&)>& log = {});

}  // namespace probekit::testbed
