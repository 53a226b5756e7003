// tests/acceptance.cpp

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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "probekit/cca.hpp"
#include "probekit/cluster.hpp"
#include "probekit/curve.hpp"
#include "probekit/layerweights.hpp"
#include "probekit/mi.hpp"
#include "probekit/stats.hpp"
#include "probekit/testbed/model.hpp"
#include "probekit/textio.hpp"

namespace fs = std::filesystem;
using namespace probekit;
using namespace probekit::testbed;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// ------------------------------------------------------------------ 1

void cca_oracle(Outcome& o) {
  const auto start = Clock::now();
  Rng rng(2024);
  cca::CcaOptions full;
  full.variance_keep = 1.0;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto dx = static_cast<Eigen::Index>(1 + rng.below(16));
    const auto dy = static_cast<Eigen::Index>(1 + rng.below(16));
    const auto lo = dx + dy + 10;
    const auto n = static_cast<Eigen::Index>(lo + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(501 - lo))));
    const Matrix x = oracle::random_normal(rng.next(), n, dx);
    const double mix = 0.25 + 2.0 * rng.uniform();
    const Matrix y = x * oracle::random_normal(rng.next(), dx, dy) + mix * oracle::random_normal(rng.next(), n, dy);
    const Vector got = cca::canonical_correlations(x, y, full).rhos;
    const Vector want = oracle::cca_rhos(x, y);
    if (got.size() != want.size()) {
      o.require(false, "instance " + std::to_string(t) + " returned " + std::to_string(got.size()) + " correlations");
      continue;
    }
    worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(start);
  o.detail << "50 instances, max|drho|=" << sci(worst) << ", " << secs << " s";
  o.require(worst < 1e-6, "max|drho| < 1e-6");
  o.require(secs < 30.0, "runtime < 30 s");
}

// ------------------------------------------------------------------ 2

void cca_invariance(Outcome& o) {
  const Matrix x = oracle::random_normal(77, 500, 12);
  double worst = 1.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Matrix a = oracle::random_normal(1000 + s, 12, 12);
    while (std::abs(a.determinant()) < 1e-2) a += Matrix::Identity(12, 12);
    worst = std::min(worst, cca::pwcca(x, x * a).pwcca);
  }
  const double self = cca::pwcca(x, x).pwcca;
  o.detail << "min PWCCA(X,XA)=" << text::format_double(worst) << " over 20 maps, PWCCA(X,X)=" << text::format_double(self);
  o.require(worst >= 1.0 - 1e-4, "PWCCA(X,XA) >= 1-1e-4");
  o.require(self >= 1.0 - 1e-6, "PWCCA(X,X) >= 1-1e-6");
}

// ------------------------------------------------------------------ 3

void mi_exact(Outcome& o) {
  const auto start = Clock::now();
  double worst = 0.0;
  std::uint64_t tables = 0;
  for (std::size_t kx = 1; kx <= 4; ++kx)
    for (std::size_t ky = 1; ky <= 4; ++ky)
      tables += oracle::for_each_table(kx, ky, 12, [&](const std::vector<std::uint64_t>& c) {
        const double d = std::abs(mi::mutual_information_nats(c, kx, ky) - oracle::mi_direct(c, kx, ky));
        if (d > worst) worst = d;
      });

  Rng rng(99);
  int bound_violations = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto kx = static_cast<std::size_t>(1 + rng.below(8));
    const auto ky = static_cast<std::size_t>(1 + rng.below(8));
    std::vector<std::uint64_t> c(kx * ky);
    for (auto& v : c) v = rng.below(3) == 0 ? 0 : rng.below(100);
    c[rng.below(c.size())] += 1;
    const auto r = mi::mutual_information(mi::make_table(kx, ky, c));
    if (!(r.mi_nats >= 0.0) || r.mi_nats > std::min(r.hx, r.hy)) ++bound_violations;
  }
  o.detail << tables << " exhaustive tables, max|dI|=" << sci(worst) << "; " << bound_violations
           << " bound violations in 10000 random tables, " << seconds_since(start) << " s";
  o.require(worst < 1e-12, "max|dI| < 1e-12");
  o.require(bound_violations == 0, "0 <= I <= min(Hx, Hy)");
}

// ------------------------------------------------------------------ 4

// Unstructured 8-point draws have several Lloyd fixpoints (single-run hit
// rate 12-100%), so the oracle comparison uses 50 restarts.
constexpr int kRestarts = 50;

void kmeans(Outcome& o) {
  Rng rng(4);
  int increases = 0;
  for (int run = 0; run < 100; ++run) {
    const auto n = static_cast<Eigen::Index>(20 + rng.below(300));
    const Matrix p = oracle::random_normal(rng.next(), n, static_cast<Eigen::Index>(1 + rng.below(8)));
    const auto c = cluster::kmeans(p, {static_cast<std::size_t>(2 + rng.below(15)), rng.next(), 100});
    for (std::size_t i = 1; i < c.inertia_trace.size(); ++i)
      if (c.inertia_trace[i] > c.inertia_trace[i - 1]) ++increases;
  }
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Matrix p = oracle::random_normal(500 + s, 8, 3);
    const auto c = cluster::kmeans_restarts(p, {2, s, 100}, kRestarts);
    worst = std::max(worst, std::abs(c.inertia - oracle::best_two_partition(p)));
  }
  o.detail << increases << " inertia increases over 100 runs; N=8 k=2 restarts=" << kRestarts << " vs exhaustive: max gap " << sci(worst)
           << " over 50 sets";
  o.require(increases == 0, "inertia non-increasing");
  o.require(worst < 1e-9, "exhaustive optimum within 1e-9");
}

// ------------------------------------------------------------------ 5

void spearman(Outcome& o) {
  Rng rng(5);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto n = static_cast<std::size_t>(3 + rng.below(100));
    std::vector<double> x(n), y(n);
    const bool tx = t % 2 == 0, ty = t % 3 == 0;
    for (auto& v : x) v = tx ? static_cast<double>(rng.below(6)) : rng.normal();
    for (auto& v : y) v = ty ? static_cast<double>(rng.below(6)) : rng.normal();
    x[0] = -1.0;
    y[0] = -1.0;
    y[1] = 9.0;
    worst = std::max(worst, std::abs(stats::spearman(x, y) - oracle::spearman_direct(x, y)));
  }
  int monotone_misses = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(50), up, down;
    for (auto& v : x) v = rng.normal();
    for (double v : x) {
      up.push_back(std::exp(v) + v * v * v);
      down.push_back(-2.0 * v + 7.0);
    }
    if (stats::spearman(x, up) != 1.0) ++monotone_misses;
    if (stats::spearman(x, down) != -1.0) ++monotone_misses;
  }
  o.detail << "1000 vectors with ties: max|drho|=" << sci(worst) << "; " << monotone_misses
           << " misses on 200 monotone pairs";
  o.require(worst < 1e-12, "oracle within 1e-12");
  o.require(monotone_misses == 0, "+-1 on monotone pairs");
}

// ------------------------------------------------------------------ 6

Matrix frames(const ModelConfig& c, Eigen::Index T, std::uint64_t seed) { return oracle::random_normal(seed, T, c.input_dim); }

TargetStream targets(const ModelConfig& c, Eigen::Index T, std::uint64_t seed) {
  Rng rng(seed);
  TargetStream t;
  for (Eigen::Index i = 0; i < T; ++i) t.units.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(c.num_classes))));
  return t;
}

Model generic(const ModelConfig& c, std::uint64_t seed) {
  Parameters p = build_parameters(c);
  perturb(p, seed, 0.05);
  return Model(c, std::move(p));
}

void gradients(Outcome& o) {
  const auto start = Clock::now();
  double worst = 0.0;
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    o.require(c.dim == 32, name + " has dim 32");
    const auto r = grad_check(generic(c, 21), frames(c, 16, 22), targets(c, 16, 23));
    o.detail << name << " " << sci(r.max_relative_error) << "; ";
    worst = std::max(worst, r.max_relative_error);
    o.require(r.tensors_covered == r.tensors_total, name + " covers every tensor");
  }
  const double secs = seconds_since(start);
  o.detail << "dim 32, T=16, max rel err " << sci(worst) << ", " << secs << " s";
  o.require(worst < 1e-4, "rel err < 1e-4");
  o.require(secs < 120.0, "runtime < 2 min");
}

// ------------------------------------------------------------------ 7

void shapes(Outcome& o) {
  int checked = 0;
  for (const char* name : {"mr-base-toy", "b2-a"}) {
    const auto c = preset(name);
    const Model m(c);
    for (Eigen::Index T : {7, 8, 16, 33}) {
      for (const auto& l : m.run(frames(c, T, 1)).layers) {
        const int ratio = l.frame_period_ms / c.resolutions_ms.front();
        ++checked;
        if (l.frames() != (T + ratio - 1) / ratio)
          o.require(false, std::string(name) + " " + l.layer_id + " at T=" + std::to_string(T));
      }
    }
  }
  const auto b5 = preset("b5-a");
  const Model m5(b5);
  for (Eigen::Index T : {7, 8, 16, 33}) {
    for (const auto& l : m5.run(frames(b5, T, 1)).layers) {
      ++checked;
      if (l.frames() != T || l.frame_period_ms != b5.resolutions_ms.front())
        o.require(false, "b5-a " + l.layer_id + " at T=" + std::to_string(T));
    }
  }
  o.detail << checked << " dumps checked (mr-base-toy 20/40, b2-a 20/40/80, b5-a at base)";
}

// ------------------------------------------------------------------ 8

void ablations(Outcome& o) {
  const Eigen::Index T = 16;
  std::vector<bool> mask(T, false);
  for (Eigen::Index t = 1; t < T; t += 3) mask[static_cast<std::size_t>(t)] = true;

  // aux off
  auto on = preset("mr-base-toy");
  auto off = on;
  off.aux_loss_enabled = false;
  const Model a = generic(on, 31);
  const Model b(off, a.params());
  const auto x = frames(on, T, 32);
  const auto t = targets(on, T, 33);
  const auto ta = a.forward_with_mask(x, t, mask);
  const auto tb = b.forward_with_mask(x, t, mask);
  bool identical = ta.layers.size() == tb.layers.size() && ta.main_logits == tb.main_logits;
  for (std::size_t i = 0; identical && i < ta.layers.size(); ++i) identical = ta.layers[i].data == tb.layers[i].data;
  o.require(identical, "aux off leaves layer outputs bit-identical");
  o.detail << "aux off: " << (identical ? "bit-identical" : "differs") << "; ";

  // downsampling off
  const auto b5 = preset("b5-a");
  const auto t5 = Model(b5).run(frames(b5, 33, 34));
  const bool flat = t5.layer("D0").frames() == 33 && t5.layer("U0").frames() == 33 &&
                    t5.layer("D0").frame_period_ms == 20 && t5.layer("U0").frame_period_ms == 20;
  o.require(flat, "no resolution change at D0/U0 without downsampling");
  o.detail << "b5-a D0/U0 at " << t5.layer("D0").frame_period_ms << "/" << t5.layer("U0").frame_period_ms << " ms; ";

  // residual placement
  auto post = preset("mr-base-toy");
  auto pre = post;
  pre.residual_mode = ResidualMode::pre_decoder;
  const Model mp = generic(post, 35);
  const double generic_gap = (mp.run(x).main_logits - Model(pre, mp.params()).run(x).main_logits).cwiseAbs().maxCoeff();
  Parameters p = mp.params();
  int n = 0;
  for (int blk = 0; blk < post.blocks(); ++blk)
    for (int i = 0; i < post.layers_per_encoder[static_cast<std::size_t>(blk)]; ++i) {
      ++n;
      if (blk < post.levels()) continue;
      for (const char* w : {".attn.Wo", ".attn.bo", ".ffn.W2", ".ffn.b2"}) p.view(p.ref("layer" + std::to_string(n) + w)).setZero();
    }
  const double identity_gap =
      (Model(post, p).run(x).main_logits - Model(pre, p).run(x).main_logits).cwiseAbs().maxCoeff();
  o.require(generic_gap > 1e-6, "pre and post residual differ on a random instance");
  o.require(identity_gap < 1e-12, "pre and post coincide with identity decoder");
  o.detail << "pre/post gap " << sci(generic_gap) << " generic, " << sci(identity_gap) << " with identity decoder";
}

// ------------------------------------------------------------------ 9

const std::string probe = PROBE_BIN;
const std::vector<std::string> e2e_models{"mr-base-toy", "b2-a", "b5-a"};
const std::vector<std::string> e2e_metrics{"cca-word", "cca-phone", "cca-mel", "mi-word", "mi-phone", "sts"};

int step(const fs::path& dir, const std::string& args, Outcome& o) {
  std::string out;
  const int rc = oracle::run("cd '" + dir.string() + "' && '" + probe + "' " + args, &out);
  if (rc != 0) o.require(false, "probe " + args + " exited " + std::to_string(rc) + ": " + out.substr(0, 300));
  return rc;
}

bool pipeline(const fs::path& dir, Outcome& o) {
  auto run = [&](const std::string& args) { return step(dir, args, o) == 0; };
  if (!run("synth --out corpus --seed 7")) return false;
  if (!run("pool --dumps corpus/feats --annotations corpus/annotations.tsv --kind phone --out pooled/fbank/phone"))
    return false;
  for (const auto& m : e2e_models) {
    if (!run("train --config " + m + " --corpus corpus --out models/" + m + " --steps 2000")) return false;
    if (!run("extract --model models/" + m + " --corpus corpus --out dumps/" + m)) return false;
    for (const char* kind : {"word", "phone", "utterance"})
      if (!run("pool --dumps dumps/" + m + " --annotations corpus/annotations.tsv --kind " + kind + " --out pooled/" + m +
               "/" + kind))
        return false;
    const std::string r = " --out results/" + m + "/";
    if (!run("cca --x pooled/" + m + "/word --y corpus/words.emb" + r + "cca-word.csv")) return false;
    if (!run("cca --x pooled/" + m + "/phone --y onehot" + r + "cca-phone.csv")) return false;
    if (!run("cca --x pooled/" + m + "/phone --y pooled:pooled/fbank/phone/fbank" + r + "cca-mel.csv")) return false;
    if (!run("mi --x pooled/" + m + "/word --k 24" + r + "mi-word.csv")) return false;
    if (!run("mi --x pooled/" + m + "/phone --k 12" + r + "mi-phone.csv")) return false;
    if (!run("sts --x pooled/" + m + "/utterance --pairs corpus/pairs.tsv" + r + "sts.csv")) return false;
  }
  std::string models;
  for (const auto& m : e2e_models) models += (models.empty() ? "" : ",") + m;
  for (const auto& metric : e2e_metrics)
    if (!run("report --models " + models + " --metric " + metric)) return false;
  return true;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = oracle::read_file(e.path());
  return out;
}

double json_number(const std::string& text, const std::string& key) {
  const auto at = text.find("\"" + key + "\":");
  if (at == std::string::npos) return NAN;
  return std::strtod(text.c_str() + at + key.size() + 3, nullptr);
}

void end_to_end(Outcome& o) {
  oracle::TempDir first("acceptance-a"), second("acceptance-b");
  auto start = Clock::now();
  const bool ok_a = pipeline(first.path(), o);
  const double secs_a = seconds_since(start);
  start = Clock::now();
  const bool ok_b = ok_a && pipeline(second.path(), o);
  const double secs_b = seconds_since(start);
  o.detail << "runs took " << secs_a << " s and " << secs_b << " s; ";
  o.require(secs_a < 600.0 && secs_b < 600.0, "each run under 10 min");
  if (!ok_a || !ok_b) return;

  for (const auto& m : e2e_models) {
    const double red = json_number(oracle::read_file(first / ("models/" + m + "/train.json")), "relative_reduction");
    o.detail << m << " train loss -" << text::format_double(std::round(red * 1000.0) / 10.0) << "%; ";
    o.require(red >= 0.2, m + " reduces train loss by >= 20%");
  }

  for (const auto& metric : e2e_metrics) {
    const auto csv = oracle::read_file(first / ("results/report-" + metric + ".csv"));
    const auto lines = text::split(csv.substr(0, csv.size() - (csv.empty() ? 0 : 1)), '\n');
    std::string header = "layer_id";
    for (const auto& m : e2e_models) header += "," + m;
    o.require(!lines.empty() && lines[0] == header, metric + " header has one column per model");
    std::map<std::string, int> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto cells = text::split(lines[i], ',');
      o.require(cells.size() == e2e_models.size() + 1, metric + " row width");
      ++rows[cells[0]];
    }
    for (const auto& [id, count] : rows) o.require(count == 1, metric + " layer " + id + " appears once");
    for (const auto& m : e2e_models) {
      const auto curve = read_curve(first / ("results/" + m + "/" + metric + ".csv"));
      for (const auto& pt : curve) o.require(rows.count(pt.layer_id) == 1, metric + " has a row for " + m + " " + pt.layer_id);
    }
    if (metric == "cca-word") o.detail << rows.size() << " merged layers per report; ";
  }

  const auto sa = snapshot(first.path());
  const auto sb = snapshot(second.path());
  std::size_t differing = sa.size() == sb.size() ? 0 : 1;
  for (const auto& [name, bytes] : sa) {
    const auto it = sb.find(name);
    if (it == sb.end() || it->second != bytes) {
      ++differing;
      o.require(false, "byte-identical " + name);
    }
  }
  o.detail << sa.size() << " files, " << differing << " differ between runs";
}

// ------------------------------------------------------------------ 10

void layer_weights(Outcome& o) {
  auto make = [](const std::string& task, std::vector<double> w) {
    layerweights::LayerWeights lw;
    lw.task = task;
    for (std::size_t i = 0; i < w.size(); ++i) lw.layer_ids.push_back("T" + std::to_string(i));
    lw.raw = w;
    lw.normalized = layerweights::normalize(w, layerweights::Mode::already_normalized);
    return lw;
  };
  std::vector<double> asr(12, 0.58 / 10.0);
  asr[8] = asr[9] = 0.21;
  std::vector<double> se(12, 0.34 / 9.0);
  se[0] = 0.30;
  se[1] = 0.20;
  se[2] = 0.16;
  const auto ra = layerweights::report(make("asr", asr), {{"layers 8-9", {"T8", "T9"}, 0.4}});
  const auto rs = layerweights::report(make("se", se), {{"first three", {"T0", "T1", "T2"}, 0.66}});
  o.detail << "ASR layers 8-9 mass " << text::format_double(ra.groups[0].mass) << (ra.groups[0].dominant ? " dominant" : " not dominant")
           << " at 0.4; SE first-three mass " << text::format_double(rs.groups[0].mass)
           << (rs.groups[0].dominant ? " dominant" : " not dominant") << " at 0.66";
  o.require(ra.groups[0].dominant, "ASR group flagged");
  o.require(rs.groups[0].dominant, "SE group flagged");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"1 cca oracle equivalence", cca_oracle},
      {"2 cca invariance", cca_invariance},
      {"3 mi exactness and bounds", mi_exact},
      {"4 k-means monotone and optimal", kmeans},
      {"5 spearman oracle", spearman},
      {"6 testbed gradients", gradients},
      {"7 shape laws", shapes},
      {"8 ablation semantics", ablations},
      {"9 end-to-end pipeline", end_to_end},
      {"10 layer weight dominance", layer_weights},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += o.pass ? 0 : 1;
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
