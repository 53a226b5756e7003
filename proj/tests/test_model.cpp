// tests/test_model.cpp

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

#include <chrono>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "probekit/testbed/model.hpp"

using namespace probekit;
using namespace probekit::testbed;

namespace {

Matrix frames_for(const ModelConfig& c, Eigen::Index T, std::uint64_t seed) {
  return oracle::random_normal(seed, T, c.input_dim);
}

TargetStream targets_for(const ModelConfig& c, Eigen::Index T, std::uint64_t seed) {
  Rng rng(seed);
  TargetStream t;
  for (Eigen::Index i = 0; i < T; ++i) t.units.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(c.num_classes))));
  return t;
}

Model generic(ModelConfig c, std::uint64_t seed = 3) {
  Parameters p = build_parameters(c);
  perturb(p, seed, 0.05);
  return Model(std::move(c), std::move(p));
}

std::vector<bool> some_mask(Eigen::Index T) {
  std::vector<bool> m(static_cast<std::size_t>(T), false);
  for (Eigen::Index t = 2; t < T; t += 3) m[static_cast<std::size_t>(t)] = true;
  return m;
}

// (id, level) in execution order, walked independently of the model code.
std::vector<std::pair<std::string, int>> expected_layout(const ModelConfig& c) {
  std::vector<std::pair<std::string, int>> out;
  const int L = static_cast<int>(c.layers_per_encoder.size() + 1) / 2;
  int n = 0;
  for (int b = 0; b < static_cast<int>(c.layers_per_encoder.size()); ++b) {
    const int level = b < L ? b : 2 * (L - 1) - b;
    if (b >= L) out.emplace_back("U" + std::to_string(level), level);
    for (int i = 0; i < c.layers_per_encoder[static_cast<std::size_t>(b)]; ++i)
      out.emplace_back("T" + std::to_string(++n), level);
    if (b < L - 1) out.emplace_back("D" + std::to_string(b), level + 1);
  }
  return out;
}

Eigen::Index ceil_div(Eigen::Index a, Eigen::Index b) { return (a + b - 1) / b; }

}  // namespace

TEST_CASE("dump lengths follow the cumulative frame ratio") {
  for (const char* name : {"mr-base-toy", "b2-a"}) {
    const auto c = preset(name);
    const Model m(c);
    for (Eigen::Index T : {7, 8, 16, 33}) {
      const auto trace = m.run(frames_for(c, T, 1));
      const auto layout = expected_layout(c);
      REQUIRE(trace.layers.size() == layout.size());
      CHECK(m.layer_ids().size() == layout.size());
      for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& [id, level] = layout[i];
        const int ratio = c.resolutions_ms[static_cast<std::size_t>(level)] / c.resolutions_ms[0];
        CHECK(trace.layers[i].layer_id == id);
        CHECK(m.layer_ids()[i] == id);
        CHECK(trace.layers[i].frames() == ceil_div(T, ratio));
        CHECK(trace.layers[i].frame_period_ms == c.resolutions_ms[static_cast<std::size_t>(level)]);
        CHECK(trace.layers[i].dims() == c.dim);
      }
      CHECK(trace.main_logits.rows() == T);
    }
  }
}

TEST_CASE("without downsampling every layer stays at the base resolution") {
  const auto c = preset("b5-a");
  const Model m(c);
  for (Eigen::Index T : {7, 8, 16, 33}) {
    const auto trace = m.run(frames_for(c, T, 2));
    CHECK(trace.layers.size() == 14);
    for (const auto& l : trace.layers) {
      CHECK(l.frames() == T);
      CHECK(l.frame_period_ms == 20);
    }
    CHECK(trace.layer("D0").frames() == T);
    CHECK(trace.layer("U0").frames() == T);
  }
}

TEST_CASE("sampling modules") {
  Matrix x(5, 1);
  x << 1, 2, 3, 4, 5;
  const Matrix I = Matrix::Identity(1, 1);
  const Eigen::RowVectorXd zero = Eigen::RowVectorXd::Zero(1);
  const Matrix d = downsample(x, 2, I, zero);
  REQUIRE(d.rows() == 3);
  CHECK(d(0, 0) == 1.5);
  CHECK(d(1, 0) == 3.5);
  CHECK(d(2, 0) == 2.5);  // zero-padded final window

  Matrix two(2, 1);
  two << 1, 2;
  const Matrix u = upsample(two, 2, 3, I, zero);
  REQUIRE(u.rows() == 3);
  CHECK(u(0, 0) == 1);
  CHECK(u(1, 0) == 1);
  CHECK(u(2, 0) == 2);
  CHECK_THROWS_AS(upsample(two, 2, 5, I, zero), ValidationError);
  CHECK_THROWS_AS(downsample(x, 1, I, zero), ValidationError);

  // constant streams survive a full-window round trip
  const Matrix c = Matrix::Constant(8, 3, 0.7);
  const Matrix I3 = Matrix::Identity(3, 3);
  const Eigen::RowVectorXd z3 = Eigen::RowVectorXd::Zero(3);
  CHECK(upsample(downsample(c, 4, I3, z3), 4, 8, I3, z3) == c);

  const Matrix W = oracle::random_normal(5, 3, 3);
  Eigen::RowVectorXd b(3);
  b << 0.1, -0.2, 0.3;
  const Matrix y = downsample(oracle::random_normal(6, 6, 3), 3, W, b);
  CHECK(y.rows() == 2);
  const Matrix in = oracle::random_normal(6, 6, 3);
  const Eigen::RowVectorXd first = (in.topRows(3).colwise().sum() / 3.0) * W + b;
  CHECK((y.row(0) - first).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("masks") {
  CHECK(make_mask(20, 0.3, 3, 5) == make_mask(20, 0.3, 3, 5));
  const auto all = make_mask(10, 1.0, 2, 0);
  CHECK(std::all_of(all.begin(), all.end(), [](bool b) { return b; }));
  // every masked run is at least one span long unless it hits the end
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto m = make_mask(40, 0.1, 4, s);
    std::size_t t = 0;
    while (t < m.size()) {
      if (!m[t]) {
        ++t;
        continue;
      }
      std::size_t e = t;
      while (e < m.size() && m[e]) ++e;
      CHECK((e - t >= 4 || e == m.size()));
      t = e;
    }
  }
}

TEST_CASE("disabling the auxiliary loss leaves the forward pass untouched") {
  for (const char* name : {"mr-base-toy", "b2-a"}) {
    auto on = preset(name);
    auto off = on;
    off.aux_loss_enabled = false;
    const Model a = generic(on);
    const Model b(off, a.params());
    const Matrix x = frames_for(on, 16, 4);
    const auto t = targets_for(on, 16, 5);
    const auto mask = some_mask(16);
    const auto ta = a.forward_with_mask(x, t, mask);
    const auto tb = b.forward_with_mask(x, t, mask);
    REQUIRE(ta.layers.size() == tb.layers.size());
    for (std::size_t i = 0; i < ta.layers.size(); ++i) CHECK(ta.layers[i].data == tb.layers[i].data);
    CHECK(ta.main_logits == tb.main_logits);
    CHECK(ta.loss.main == tb.loss.main);
    CHECK(tb.loss.aux.empty());
    CHECK(tb.loss.total == tb.loss.main);
    CHECK_FALSE(ta.loss.aux.empty());

    std::vector<double> g;
    b.loss_and_gradient(x, t, mask, g);
    const auto& P = b.params();
    for (const auto& pname : P.names()) {
      if (pname.rfind("aux", 0) != 0) continue;
      const auto r = P.ref(pname);
      for (std::size_t k = 0; k < r.size(); ++k) CHECK(g[r.offset + k] == 0.0);
    }

    // a zero aux weight is the main loss alone
    auto zero = on;
    zero.aux_loss_weight = 0.0;
    const Model z(zero, a.params());
    std::vector<double> gz, gb;
    const auto lz = z.loss_and_gradient(x, t, mask, gz);
    const auto lb = b.loss_and_gradient(x, t, mask, gb);
    CHECK(std::abs(lz.total - lb.total) < 1e-12);
    double worst = 0.0;
    for (std::size_t k = 0; k < gz.size(); ++k) worst = std::max(worst, std::abs(gz[k] - gb[k]));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("only masked frames contribute to the loss") {
  for (const char* name : {"mr-base-toy", "b2-a", "hubert-base-toy"}) {
    const auto c = preset(name);
    const Model m = generic(c);
    const Matrix x = frames_for(c, 17, 6);
    const auto mask = some_mask(17);
    auto t = targets_for(c, 17, 7);
    const double base = m.forward_with_mask(x, t, mask).loss.total;
    for (std::size_t i = 0; i < t.units.size(); ++i)
      if (!mask[i]) t.units[i] = (t.units[i] + 5) % c.num_classes;
    CHECK(m.forward_with_mask(x, t, mask).loss.total == base);
    t.units[2] = (t.units[2] + 1) % c.num_classes;  // a masked frame
    CHECK(m.forward_with_mask(x, t, mask).loss.total != base);
  }
}

TEST_CASE("an empty mask is reported") {
  const auto c = preset("mr-base-toy");
  const Model m(c);
  CHECK_THROWS_AS(m.forward_with_mask(frames_for(c, 8, 1), targets_for(c, 8, 1), std::vector<bool>(8, false)),
                  EmptyMaskError);
  CHECK_THROWS_AS(m.run(Matrix::Zero(8, c.input_dim + 1)), ValidationError);
  CHECK_THROWS_AS(m.forward_with_mask(frames_for(c, 8, 1), targets_for(c, 7, 1), some_mask(8)), ValidationError);
}

TEST_CASE("residual placement") {
  for (const char* name : {"mr-base-toy", "b2-a"}) {
    auto post = preset(name);
    auto pre = post;
    pre.residual_mode = ResidualMode::pre_decoder;
    const Matrix x = frames_for(post, 16, 8);

    const Model a = generic(post);
    const Model b(pre, a.params());
    CHECK((a.run(x).main_logits - b.run(x).main_logits).cwiseAbs().maxCoeff() > 1e-6);

    // Decoder layers that add nothing to their input make the two placements agree.
    Parameters p = a.params();
    const int L = post.levels();
    int n = 0;
    for (int blk = 0; blk < post.blocks(); ++blk)
      for (int i = 0; i < post.layers_per_encoder[static_cast<std::size_t>(blk)]; ++i) {
        ++n;
        if (blk < L) continue;
        for (const char* t : {".attn.Wo", ".attn.bo", ".ffn.W2", ".ffn.b2"})
          p.view(p.ref("layer" + std::to_string(n) + t)).setZero();
      }
    const auto ta = Model(post, p).run(x);
    const auto tb = Model(pre, p).run(x);
    CHECK((ta.main_logits - tb.main_logits).cwiseAbs().maxCoeff() < 1e-12);
    const std::string last = "T" + std::to_string(post.total_layers());
    CHECK((ta.layer(last).data - tb.layer(last).data).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("analytic gradients match finite differences") {
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    CHECK(c.dim == 32);
    const Model m = generic(c, 11);
    const auto start = std::chrono::steady_clock::now();
    const auto r = grad_check(m, frames_for(c, 16, 12), targets_for(c, 16, 13));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    MESSAGE(name << ": max rel err " << r.max_relative_error << " at " << r.worst_parameter << ", " << secs << " s");
    CHECK(r.max_relative_error < 1e-4);
    CHECK(r.tensors_covered == r.tensors_total);
    CHECK(r.checked >= r.tensors_total);
  }
}

TEST_CASE("extraction") {
  const auto c = preset("b2-a");
  const Model m = generic(c);
  const Matrix x = frames_for(c, 33, 14);
  const auto a = extract(m, x);
  const auto b = extract(m, x);
  REQUIRE(a.size() == m.layer_ids().size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].data == b[i].data);
    CHECK(a[i].layer_id == m.layer_ids()[i]);
  }

  oracle::TempDir dir("extract");
  const auto manifest = extract_to_dir(m, "u1", x, dir.path());
  CHECK(manifest.utterance_id == "u1");
  const auto back = featio::load_layers(featio::read_manifest(dir / "manifest.json"));
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].layer_id == a[i].layer_id);
    CHECK(back[i].frame_period_ms == a[i].frame_period_ms);
    // stored as f32
    CHECK((back[i].data - a[i].data).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + a[i].data.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("saved models reload bit for bit") {
  const auto c = preset("mr-base-toy");
  const Model m = generic(c);
  oracle::TempDir dir("model");
  save_model(m.config(), m.params(), dir.path());
  auto [c2, p2] = load_model(dir.path());
  CHECK(p2.values() == m.params().values());
  CHECK(config_to_json_text(c2) == config_to_json_text(c));
  const Matrix x = frames_for(c, 9, 1);
  CHECK(Model(c2, p2).run(x).main_logits == m.run(x).main_logits);
}
