// src/testbed/synth.cpp

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

#include "probekit/testbed/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "probekit/textio.hpp"

namespace probekit::testbed {

namespace {

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

std::string numbered(const char* prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
  return buf;
}

Matrix normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

void check_range(const char* field, int lo, int hi) {
  if (lo < 1 || hi < lo) throw ValidationError(std::string(field) + ": need 1 <= min <= max");
}

}  // namespace

const Utterance& SynthCorpus::utterance(const std::string& id) const {
  for (const auto& u : utterances)
    if (u.id == id) return u;
  throw ValidationError("corpus has no utterance " + id);
}

SynthCorpus make_synth_corpus(const SynthOptions& o) {
  if (o.utterances < 2) throw ValidationError("utterances: need at least 2");
  if (o.input_dim < 1 || o.num_classes < 2 || o.phones < 1 || o.words < 1 || o.embedding_dim < 1)
    throw ValidationError("synthetic corpus sizes must be positive");
  check_range("words per utterance", o.min_words, o.max_words);
  check_range("phones per word", o.min_phones_per_word, o.max_phones_per_word);
  check_range("phone duration", o.min_duration, o.max_duration);
  if (!(o.heldout_fraction >= 0.0 && o.heldout_fraction < 1.0))
    throw ValidationError("heldout_fraction must lie in [0, 1)");

  Rng rng(mix_seed(o.seed, 0x73796e7468));
  const Matrix phone_proto = normal_matrix(rng, o.phones, o.input_dim);
  const Matrix codebook = normal_matrix(rng, o.num_classes, o.input_dim);
  const Matrix phone_emb = normal_matrix(rng, o.phones, o.embedding_dim);

  std::vector<std::vector<int>> lexicon(static_cast<std::size_t>(o.words));
  for (auto& w : lexicon) {
    const int n = uniform_int(rng, o.min_phones_per_word, o.max_phones_per_word);
    for (int i = 0; i < n; ++i) w.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(o.phones))));
  }

  SynthCorpus corpus;
  corpus.base_period_ms = o.base_period_ms;
  corpus.num_classes = o.num_classes;

  // Word embeddings follow phone content, so they carry recoverable structure.
  corpus.word_embeddings.kind = featio::EmbeddingKind::dense;
  corpus.word_embeddings.dim = static_cast<std::size_t>(o.embedding_dim);
  for (int w = 0; w < o.words; ++w) {
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(o.embedding_dim);
    for (int p : lexicon[static_cast<std::size_t>(w)]) e += phone_emb.row(p);
    e /= static_cast<double>(lexicon[static_cast<std::size_t>(w)].size());
    for (Eigen::Index j = 0; j < e.size(); ++j) e(j) += 0.1 * rng.normal();
    const std::string name = numbered("w", w, 3);
    corpus.word_embeddings.entries[name] = std::vector<double>(e.data(), e.data() + e.size());
    corpus.word_embeddings.order.push_back(name);
  }

  std::vector<std::set<int>> word_sets;
  for (int u = 0; u < o.utterances; ++u) {
    Utterance utt;
    utt.id = numbered("utt", u, 4);
    std::vector<Eigen::RowVectorXd> rows;
    std::set<int> used;
    const int nwords = uniform_int(rng, o.min_words, o.max_words);
    for (int k = 0; k < nwords; ++k) {
      const int w = static_cast<int>(rng.below(static_cast<std::uint64_t>(o.words)));
      used.insert(w);
      const auto word_start = static_cast<std::int64_t>(rows.size());
      for (int p : lexicon[static_cast<std::size_t>(w)]) {
        const auto phone_start = static_cast<std::int64_t>(rows.size());
        const int dur = uniform_int(rng, o.min_duration, o.max_duration);
        for (int f = 0; f < dur; ++f) {
          Eigen::RowVectorXd x = phone_proto.row(p);
          for (Eigen::Index j = 0; j < x.size(); ++j) x(j) += o.noise * rng.normal();
          rows.push_back(std::move(x));
        }
        corpus.spans.push_back({utt.id, numbered("p", p, 2), featio::SpanKind::phone, phone_start,
                                static_cast<std::int64_t>(rows.size())});
      }
      corpus.spans.push_back({utt.id, numbered("w", w, 3), featio::SpanKind::word, word_start,
                              static_cast<std::int64_t>(rows.size())});
    }
    corpus.spans.push_back({utt.id, utt.id, featio::SpanKind::utterance, 0, static_cast<std::int64_t>(rows.size())});

    utt.frames.resize(static_cast<Eigen::Index>(rows.size()), o.input_dim);
    utt.units.resize(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
      utt.frames.row(static_cast<Eigen::Index>(t)) = rows[t];
      Eigen::Index best = 0;
      (codebook.rowwise() - rows[t]).rowwise().squaredNorm().minCoeff(&best);
      utt.units[t] = static_cast<int>(best);
    }
    word_sets.push_back(std::move(used));
    corpus.utterances.push_back(std::move(utt));
  }

  const auto heldout = static_cast<int>(o.heldout_fraction * o.utterances);
  for (int u = 0; u < o.utterances; ++u) {
    (u < o.utterances - heldout ? corpus.train_ids : corpus.heldout_ids).push_back(corpus.utterances[static_cast<std::size_t>(u)].id);
  }

  // Similarity judgements: scaled word-set overlap plus rater noise.
  for (int k = 0; k < o.pairs; ++k) {
    const auto a = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(o.utterances)));
    auto b = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(o.utterances - 1)));
    if (b >= a) ++b;
    std::size_t common = 0;
    for (int w : word_sets[a]) common += word_sets[b].count(w);
    const double jaccard =
        static_cast<double>(common) / static_cast<double>(word_sets[a].size() + word_sets[b].size() - common);
    const double score = std::clamp(5.0 * jaccard + 0.25 * rng.normal(), 0.0, 5.0);
    corpus.pairs.push_back({corpus.utterances[a].id, corpus.utterances[b].id, score});
  }
  return corpus;
}

void write_synth_corpus(const SynthCorpus& corpus, const featio::fs::path& dir) {
  featio::fs::create_directories(dir / "feats");
  featio::fs::create_directories(dir / "units");
  for (const auto& u : corpus.utterances) {
    const auto udir = dir / "feats" / u.id;
    featio::fs::create_directories(udir);
    featio::write_dump({"fbank", corpus.base_period_ms, u.frames}, udir / "fbank.prbf", featio::DType::f64);
    featio::write_manifest({u.id, {{"fbank", udir / "fbank.prbf", corpus.base_period_ms}}}, udir / "manifest.json");

    std::ofstream out(dir / "units" / (u.id + ".txt"), std::ios::trunc);
    for (std::size_t t = 0; t < u.units.size(); ++t) out << (t ? " " : "") << u.units[t];
    out << '\n';
    if (!out) throw IoError("cannot write units for " + u.id);
  }
  featio::write_annotations(corpus.spans, dir / "annotations.tsv");
  featio::write_embeddings(corpus.word_embeddings, dir / "words.emb");
  stats::write_pairs(corpus.pairs, dir / "pairs.tsv");

  nlohmann::ordered_json j;
  j["base_period_ms"] = corpus.base_period_ms;
  j["num_classes"] = corpus.num_classes;
  j["train"] = corpus.train_ids;
  j["heldout"] = corpus.heldout_ids;
  std::ofstream out(dir / "corpus.json", std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (dir / "corpus.json").string());
}

SynthCorpus read_synth_corpus(const featio::fs::path& dir) {
  std::ifstream in(dir / "corpus.json");
  if (!in) throw IoError("cannot open " + (dir / "corpus.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "corpus.json").string() + ": " + e.what());
  }
  SynthCorpus corpus;
  try {
    corpus.base_period_ms = j.at("base_period_ms").get<int>();
    corpus.num_classes = j.at("num_classes").get<int>();
    corpus.train_ids = j.at("train").get<std::vector<std::string>>();
    corpus.heldout_ids = j.at("heldout").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "corpus.json").string() + ": " + e.what());
  }

  std::vector<std::string> ids = corpus.train_ids;
  ids.insert(ids.end(), corpus.heldout_ids.begin(), corpus.heldout_ids.end());
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) {
    Utterance u;
    u.id = id;
    u.frames = featio::read_dump(dir / "feats" / id / "fbank.prbf").data;
    const auto upath = dir / "units" / (id + ".txt");
    std::ifstream uin(upath);
    if (!uin) throw IoError("cannot open " + upath.string());
    std::string line;
    std::getline(uin, line);
    for (const auto& tok : text::split_ws(line)) {
      const auto v = text::parse_int(tok);
      if (v < 0 || v >= corpus.num_classes) throw FormatError(upath.string() + ": unit " + tok + " out of range");
      u.units.push_back(static_cast<int>(v));
    }
    if (static_cast<Eigen::Index>(u.units.size()) != u.frames.rows())
      throw FormatError(upath.string() + ": " + std::to_string(u.units.size()) + " units for " +
                        std::to_string(u.frames.rows()) + " frames");
    corpus.utterances.push_back(std::move(u));
  }
  corpus.spans = featio::read_annotations(dir / "annotations.tsv");
  corpus.word_embeddings = featio::read_embeddings(dir / "words.emb");
  corpus.pairs = stats::read_pairs(dir / "pairs.tsv");
  return corpus;
}

}  // namespace probekit::testbed
