// tests/test_spanpool.cpp

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

#include <algorithm>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "probekit/spanpool.hpp"

using namespace probekit;
using namespace probekit::spanpool;
using featio::FeatureDump;
namespace fs = std::filesystem;

namespace {

SpanAnnotation span(std::int64_t s, std::int64_t e, const std::string& label = "x",
                    SpanKind kind = SpanKind::word) {
  return {"u", label, kind, s, e};
}

}  // namespace

TEST_CASE("remap examples") {
  CHECK(remap_span(span(10, 15), 20, 40) == std::pair<std::int64_t, std::int64_t>{5, 8});
  CHECK(remap_span(span(4, 6), 20, 20) == std::pair<std::int64_t, std::int64_t>{4, 6});
  CHECK(remap_span(span(7, 8), 20, 80) == std::pair<std::int64_t, std::int64_t>{1, 2});
  CHECK_THROWS_AS(remap_span(span(0, 1), 20, 30), ValidationError);
}

TEST_CASE("remap equals the frames whose time window overlaps the span") {
  for (int r : {1, 2, 3, 4, 8}) {
    for (std::int64_t s = 0; s < 20; ++s) {
      for (std::int64_t e = s + 1; e < 24; ++e) {
        const auto got = remap_span(span(s, e), 20, 20 * r);
        CHECK(got == oracle::overlapping_frames(s, e, 20, 20 * r));
        CHECK(got.second > got.first);
      }
    }
  }
}

TEST_CASE("pooling examples") {
  Matrix m(5, 2);
  m << 1, 1, 2, 2, 3, 3, 4, 4, 5, 5;
  const FeatureDump d{"T1", 20, m};
  const auto r = pool_spans(d, {span(1, 4, "a"), span(0, 1, "b"), span(0, 5, "c", SpanKind::utterance)}, 20);
  REQUIRE(r.set.size() == 3);
  CHECK(r.set.vectors(0, 0) == 3.0);
  CHECK(r.set.vectors(0, 1) == 3.0);
  CHECK(r.set.vectors.row(1) == m.row(0));
  CHECK(r.set.vectors.row(2).isApprox(m.colwise().mean()));
  CHECK(r.set.labels == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("spans past the end are skipped with their index and the rest still pool") {
  const FeatureDump d{"D0", 40, Matrix::Ones(4, 3)};
  const auto r = pool_spans(d, {span(0, 2, "a"), span(6, 10, "b"), span(2, 4, "c")}, 20);
  CHECK(r.set.labels == std::vector<std::string>{"a", "c"});
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0].index == 1);
}

TEST_CASE("pooling properties") {
  Rng rng(4);
  const Matrix m = oracle::random_normal(2, 30, 6);
  std::vector<SpanAnnotation> spans;
  for (int i = 0; i < 40; ++i) {
    const auto s = static_cast<std::int64_t>(rng.below(29));
    const auto e = s + 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(30 - s - 1) + 1));
    spans.push_back(span(s, std::min<std::int64_t>(e, 30)));
  }

  SUBCASE("constant input gives the constant") {
    Eigen::RowVectorXd c(6);
    c << 1, -2, 0.5, 3, 7, -1;
    const Matrix k = c.replicate(30, 1);
    const auto r = pool_spans({"T", 20, k}, spans, 20);
    for (Eigen::Index i = 0; i < r.set.vectors.rows(); ++i) CHECK((r.set.vectors.row(i) - c).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("frames outside the span do not matter") {
    const auto base = pool_spans({"T", 20, m}, spans, 20);
    for (std::size_t i = 0; i < spans.size(); ++i) {
      Matrix p = m;
      for (Eigen::Index t = 0; t < 30; ++t)
        if (t < spans[i].start_frame || t >= spans[i].end_frame) p.row(t).setConstant(1e6);
      const auto r = pool_spans({"T", 20, p}, {spans[i]}, 20);
      CHECK(r.set.vectors.row(0) == base.set.vectors.row(static_cast<Eigen::Index>(i)));
    }
  }

  SUBCASE("pooling an r-fold repeated matrix at the coarse rate matches the base rate") {
    for (int r : {2, 3}) {
      // coarse dump: each coarse frame is one frame of m; base dump repeats it r times
      Matrix fine(30 * r, 6);
      for (Eigen::Index t = 0; t < fine.rows(); ++t) fine.row(t) = m.row(t / r);
      for (const auto& s : spans) {
        const SpanAnnotation aligned{"u", "x", SpanKind::word, s.start_frame * r, s.end_frame * r};
        const auto coarse = pool_spans({"D", 20 * r, m}, {aligned}, 20);
        const auto base = pool_spans({"T", 20, fine}, {aligned}, 20);
        CHECK((coarse.set.vectors - base.set.vectors).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }
}

TEST_CASE("sampling without replacement") {
  PooledSet set;
  set.layer_id = "T1";
  set.vectors = oracle::random_normal(1, 50, 3);
  for (int i = 0; i < 50; ++i) set.labels.push_back("l" + std::to_string(i));

  const auto all = sample_pooled(set, 50, 3);
  std::multiset<std::string> a(all.labels.begin(), all.labels.end()), b(set.labels.begin(), set.labels.end());
  CHECK(a == b);
  const auto s1 = sample_pooled(set, 20, 11), s2 = sample_pooled(set, 20, 11);
  CHECK(s1.labels == s2.labels);
  CHECK(s1.vectors == s2.vectors);
  CHECK(std::set<std::string>(s1.labels.begin(), s1.labels.end()).size() == 20);
  CHECK_THROWS_AS(sample_pooled(set, 51, 0), ValidationError);

  const auto big = sample_indices(20000, 7000, 1);
  CHECK(big.size() == 7000);
  CHECK(std::set<std::size_t>(big.begin(), big.end()).size() == 7000);
}

TEST_CASE("corpus pooling and pooled directories") {
  oracle::TempDir tmp("spanpool");
  std::vector<featio::Manifest> manifests;
  for (const std::string u : {"a", "b"}) {
    fs::create_directories(tmp / u);
    const Matrix t1 = oracle::random_normal(u == "a" ? 1 : 2, 8, 2);
    const Matrix d0 = oracle::random_normal(u == "a" ? 3 : 4, 4, 2);
    featio::write_dump({"T1", 20, t1}, tmp / u / "T1.prbf", featio::DType::f64);
    featio::write_dump({"D0", 40, d0}, tmp / u / "D0.prbf", featio::DType::f64);
    manifests.push_back({u, {{"T1", tmp / u / "T1.prbf", 20}, {"D0", tmp / u / "D0.prbf", 40}}});
  }
  const std::vector<SpanAnnotation> spans{{"a", "x", SpanKind::word, 0, 3},
                                          {"a", "y", SpanKind::word, 3, 8},
                                          {"a", "p", SpanKind::phone, 0, 1},
                                          {"b", "x", SpanKind::word, 1, 5}};
  const auto r = pool_corpus(manifests, spans, SpanKind::word, 20);
  REQUIRE(r.layers.size() == 2);
  CHECK(r.layers[0].labels == std::vector<std::string>{"x", "y", "x"});
  CHECK(r.layers[1].layer_id == "D0");
  CHECK(r.periods == std::vector<int>{20, 40});
  CHECK(r.skipped == 0);

  write_pooled_dir(r.layers, r.periods, tmp / "pooled");
  std::vector<PooledLayerInfo> info;
  const auto back = read_pooled_dir(tmp / "pooled", &info);
  REQUIRE(back.size() == 2);
  CHECK(back[1].vectors == r.layers[1].vectors);
  CHECK(back[0].labels == r.layers[0].labels);
  CHECK(info[1].frame_period_ms == 40);

  manifests[1].layers.pop_back();
  CHECK_THROWS_AS(pool_corpus(manifests, spans, SpanKind::word, 20), ValidationError);
}
