// src/testbed/train.cpp

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

#include "probekit/testbed/train.hpp"

#include <cmath>
#include <sstream>

#include "probekit/parallel.hpp"

namespace probekit::testbed {

namespace {

std::vector<bool> nonempty_mask(const ModelConfig& c, std::size_t frames, std::uint64_t seed) {
  for (std::uint64_t k = 0; k < 1000; ++k) {
    auto mask = make_mask(frames, c.mask_prob, c.mask_span, mix_seed(seed, k));
    for (bool b : mask)
      if (b) return mask;
  }
  throw EmptyMaskError("no mask seed produced a masked frame");
}

TargetStream targets_of(const Utterance& u) { return {u.units, 0}; }

}  // namespace

double evaluate_loss(const Model& model, const SynthCorpus& corpus, const std::vector<std::string>& ids,
                     std::uint64_t seed) {
  if (ids.empty()) throw ValidationError("no utterances to evaluate");
  std::vector<double> losses(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    const Utterance& u = corpus.utterance(ids[i]);
    const auto mask = nonempty_mask(model.config(), u.units.size(), mix_seed(seed, i, 0x6576616c));
    losses[i] = model.forward_with_mask(u.frames, targets_of(u), mask).loss.total;
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

TrainHistory train_toy(Model& model, const SynthCorpus& corpus, const TrainOptions& options,
                       const std::function<void(const std::string&)>& log) {
  if (options.steps < 0) throw ValidationError("steps must be non-negative");
  if (options.batch < 1) throw ValidationError("batch must be positive");
  if (!(options.lr > 0.0)) throw ValidationError("lr must be positive");
  if (corpus.train_ids.empty()) throw ValidationError("corpus has no training utterances");
  if (corpus.num_classes != model.config().num_classes)
    throw ValidationError("corpus has " + std::to_string(corpus.num_classes) + " unit classes, model expects " +
                          std::to_string(model.config().num_classes));

  TrainHistory history;
  const std::uint64_t eval_seed = mix_seed(options.seed, 0x686f6c64);
  history.initial_train_eval = evaluate_loss(model, corpus, corpus.train_ids, eval_seed);
  auto heldout_eval = [&](int step) {
    if (corpus.heldout_ids.empty()) return;
    const double l = evaluate_loss(model, corpus, corpus.heldout_ids, eval_seed);
    history.heldout.push_back({step, l});
    if (log) log("step " + std::to_string(step) + " heldout " + std::to_string(l));
  };
  heldout_eval(0);

  Rng order(mix_seed(options.seed, 0x62617463));
  const auto B = static_cast<std::size_t>(options.batch);
  std::vector<std::vector<double>> grads(B);
  std::vector<double> losses(B);
  auto& values = model.params().values();

  for (int step = 0; step <= options.steps; ++step) {
    std::vector<const Utterance*> batch(B);
    for (auto& u : batch) u = &corpus.utterance(corpus.train_ids[order.below(corpus.train_ids.size())]);
    const bool update = step < options.steps;

    parallel_for(B, [&](std::size_t i) {
      const auto mask = nonempty_mask(model.config(), batch[i]->units.size(),
                                      mix_seed(options.seed, static_cast<std::uint64_t>(step), i));
      if (update) {
        losses[i] = model.loss_and_gradient(batch[i]->frames, targets_of(*batch[i]), mask, grads[i]).total;
      } else {
        losses[i] = model.forward_with_mask(batch[i]->frames, targets_of(*batch[i]), mask).loss.total;
      }
    });
    double loss = 0.0;
    for (double l : losses) loss += l;
    loss /= static_cast<double>(B);
    if (!std::isfinite(loss)) throw DivergenceError(step, "training diverged at step " + std::to_string(step));
    history.train_loss.push_back(loss);
    if (!update) break;

    std::vector<double> g(values.size(), 0.0);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t p = 0; p < g.size(); ++p) g[p] += grads[i][p];
    double norm2 = 0.0;
    for (double& v : g) {
      v /= static_cast<double>(B);
      norm2 += v * v;
    }
    if (!std::isfinite(norm2)) throw DivergenceError(step, "non-finite gradient at step " + std::to_string(step));
    double scale = options.lr;
    const double norm = std::sqrt(norm2);
    if (options.clip_norm > 0.0 && norm > options.clip_norm) scale *= options.clip_norm / norm;
    for (std::size_t p = 0; p < g.size(); ++p) values[p] -= scale * g[p];

    if (options.eval_every > 0 && (step + 1) % options.eval_every == 0) heldout_eval(step + 1);
    if (log && (step + 1) % 100 == 0) {
      std::ostringstream s;
      s << "step " << step + 1 << " train " << loss << " |g| " << norm;
      log(s.str());
    }
  }
  history.final_train_eval = evaluate_loss(model, corpus, corpus.train_ids, eval_seed);
  return history;
}

}  // namespace probekit::testbed
