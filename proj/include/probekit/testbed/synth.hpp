// include/probekit/testbed/synth.hpp

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
#include "probekit/stats.hpp"

namespace probekit::testbed {

// A toy "speech" corpus: words are phone strings from a fixed lexicon, each
// phone is a noisy prototype vector held for a few frames, and the unit
// targets are a nearest-codeword quantization of the noisy frames.
struct SynthOptions {
  int utterances = 96;
  int input_dim = 16;
  int num_classes = 16;
  int phones = 12;
  int words = 24;
  int min_words = 3, max_words = 6;
  int min_phones_per_word = 2, max_phones_per_word = 4;
  int min_duration = 2, max_duration = 5;  // frames per phone
  double noise = 0.3;
  int embedding_dim = 8;
  int pairs = 64;
  double heldout_fraction = 0.25;
  int base_period_ms = 20;
  std::uint64_t seed = 0;
};

struct Utterance {
  std::string id;
  Matrix frames;           // T x input_dim
  std::vector<int> units;  // T
};

struct SynthCorpus {
  int base_period_ms = 20;
  int num_classes = 16;
  std::vector<Utterance> utterances;
  std::vector<std::string> train_ids;
  std::vector<std::string> heldout_ids;
  std::vector<featio::SpanAnnotation> spans;  // word, phone and utterance spans
  featio::EmbeddingTable word_embeddings;     // dense, one row per lexicon word
  std::vector<stats::JudgedPair> pairs;       // utterance similarity judgements

  const Utterance& utterance(const std::string& id) const;
};

SynthCorpus make_synth_corpus(const SynthOptions& options);

// <dir>/corpus.json, <dir>/feats/<utt>/{fbank.prbf,manifest.json} (f64),
// <dir>/units/<utt>.txt, <dir>/annotations.tsv, <dir>/words.emb, <dir>/pairs.tsv.
void write_synth_corpus(const SynthCorpus& corpus, const featio::fs::path& dir);
SynthCorpus read_synth_corpus(const featio::fs::path& dir);

}  // namespace probekit::testbed
