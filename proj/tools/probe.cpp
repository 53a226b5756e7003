// tools/probe.cpp

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

// probe: command-line driver for the probing toolkit and the toy testbed.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "probekit/cca.hpp"
#include "probekit/curve.hpp"
#include "probekit/featio.hpp"
#include "probekit/layerweights.hpp"
#include "probekit/mi.hpp"
#include "probekit/parallel.hpp"
#include "probekit/spanpool.hpp"
#include "probekit/stats.hpp"
#include "probekit/testbed/config.hpp"
#include "probekit/testbed/model.hpp"
#include "probekit/testbed/synth.hpp"
#include "probekit/testbed/train.hpp"
#include "probekit/textio.hpp"

namespace fs = std::filesystem;
using namespace probekit;

namespace {

// Collects log lines; written next to the command's result file.
class Log {
 public:
  void operator()(const std::string& line) {
    lines_.push_back(line);
    std::cerr << line << '\n';
  }
  void write(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : lines_) out << l << '\n';
    if (!out) throw IoError("cannot write " + path.string());
  }

 private:
  std::vector<std::string> lines_;
};

fs::path log_path(const fs::path& result) {
  fs::path p = result;
  return p.replace_extension(".log");
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

void save_curve(const Curve& curve, const fs::path& path) {
  ensure_parent(path);
  write_curve(curve, path);
}

std::string fmt(double v) { return text::format_double(v); }

// Every <dir>/<utt>/manifest.json, sorted by utterance directory.
std::vector<featio::Manifest> read_manifests(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) subdirs.push_back(e.path());
  std::sort(subdirs.begin(), subdirs.end());
  if (subdirs.empty()) throw IoError("no manifests under " + dir.string());
  std::vector<featio::Manifest> out;
  for (const auto& d : subdirs) out.push_back(featio::read_manifest(d / "manifest.json"));
  return out;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  testbed::SynthOptions opts;
};

void run_synth(const SynthArgs& a) {
  const auto corpus = testbed::make_synth_corpus(a.opts);
  testbed::write_synth_corpus(corpus, a.out);
  Log log;
  std::size_t frames = 0;
  for (const auto& u : corpus.utterances) frames += static_cast<std::size_t>(u.frames.rows());
  log("utterances " + std::to_string(corpus.utterances.size()) + " (train " +
      std::to_string(corpus.train_ids.size()) + ", heldout " + std::to_string(corpus.heldout_ids.size()) + ")");
  log("frames " + std::to_string(frames));
  log("spans " + std::to_string(corpus.spans.size()));
  log("pairs " + std::to_string(corpus.pairs.size()));
  log.write(fs::path(a.out) / "synth.log");
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config, corpus, out;
  testbed::TrainOptions opts;
};

void run_train(const TrainArgs& a) {
  const auto config = testbed::resolve_config(a.config);
  const auto corpus = testbed::read_synth_corpus(a.corpus);
  testbed::Model model(config);
  Log log;
  log("config " + config.name + ", " + std::to_string(model.params().size()) + " parameters");
  const auto history = testbed::train_toy(model, corpus, a.opts, std::ref(log));

  const fs::path out(a.out);
  testbed::save_model(config, model.params(), out);
  std::ostringstream hist;
  hist << "step,train_loss\n";
  for (std::size_t s = 0; s < history.train_loss.size(); ++s) hist << s << ',' << fmt(history.train_loss[s]) << '\n';
  write_text(out / "history.csv", hist.str());
  std::ostringstream held;
  held << "step,heldout_loss\n";
  for (const auto& p : history.heldout) held << p.step << ',' << fmt(p.loss) << '\n';
  write_text(out / "heldout.csv", held.str());

  nlohmann::ordered_json j;
  j["config"] = config.name;
  j["steps"] = a.opts.steps;
  j["lr"] = a.opts.lr;
  j["batch"] = a.opts.batch;
  j["seed"] = a.opts.seed;
  j["initial_train_eval"] = history.initial_train_eval;
  j["final_train_eval"] = history.final_train_eval;
  j["relative_reduction"] = 1.0 - history.final_train_eval / history.initial_train_eval;
  write_text(out / "train.json", j.dump(2) + "\n");
  log("train eval " + fmt(history.initial_train_eval) + " -> " + fmt(history.final_train_eval));
  log.write(out / "train.log");
}

// ---------------------------------------------------------------- gradcheck

struct GradCheckArgs {
  std::string config, out = "gradcheck.json";
  int frames = 16;
  double perturb = 0.05;
  double tolerance = 1e-4;
  testbed::GradCheckOptions opts;
};

void run_gradcheck(const GradCheckArgs& a) {
  const auto config = testbed::resolve_config(a.config);
  testbed::Model model(config);
  if (a.perturb > 0.0) testbed::perturb(model.params(), mix_seed(a.opts.seed, 0x7065727475), a.perturb);
  Rng rng(mix_seed(a.opts.seed, 0x6672616d));
  Matrix x(a.frames, config.input_dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  testbed::TargetStream targets;
  for (int t = 0; t < a.frames; ++t) targets.units.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(config.num_classes))));

  const auto r = testbed::grad_check(model, x, targets, a.opts);
  const bool pass = r.max_relative_error < a.tolerance;
  nlohmann::ordered_json j;
  j["config"] = config.name;
  j["frames"] = a.frames;
  j["checked"] = r.checked;
  j["tensors_covered"] = r.tensors_covered;
  j["tensors_total"] = r.tensors_total;
  j["max_relative_error"] = r.max_relative_error;
  j["worst_parameter"] = r.worst_parameter;
  j["tolerance"] = a.tolerance;
  j["pass"] = pass;
  write_text(a.out, j.dump(2) + "\n");
  Log log;
  std::ostringstream s;
  s << config.name << ": max relative error " << r.max_relative_error << " at " << r.worst_parameter << " over "
    << r.checked << " entries -> " << (pass ? "ok" : "FAIL");
  log(s.str());
  log.write(log_path(a.out));
  if (!pass) throw RuntimeError("gradient check failed for " + config.name);
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
  std::string model, corpus, out;
};

void run_extract(const ExtractArgs& a) {
  auto [config, params] = testbed::load_model(a.model);
  const testbed::Model model(config, std::move(params));
  const auto corpus = testbed::read_synth_corpus(a.corpus);
  std::vector<std::string> ids;
  for (const auto& u : corpus.utterances) ids.push_back(u.id);
  std::vector<featio::Manifest> manifests(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    const auto& u = corpus.utterance(ids[i]);
    manifests[i] = testbed::extract_to_dir(model, u.id, u.frames, fs::path(a.out) / u.id);
  });
  Log log;
  log("model " + config.name + ": " + std::to_string(ids.size()) + " utterances, layers:");
  for (const auto& l : manifests.front().layers)
    log("  " + l.layer_id + " period " + std::to_string(l.frame_period_ms) + " ms");
  log.write(fs::path(a.out) / "extract.log");
}

// ---------------------------------------------------------------- pool

struct PoolArgs {
  std::string dumps, annotations, kind = "word", out;
  int base_period = 20;
};

void run_pool(const PoolArgs& a) {
  const auto manifests = read_manifests(a.dumps);
  const auto spans = featio::read_annotations(a.annotations);
  const auto r = spanpool::pool_corpus(manifests, spans, featio::parse_span_kind(a.kind), a.base_period);
  spanpool::write_pooled_dir(r.layers, r.periods, a.out);
  Log log;
  for (const auto& m : r.messages) log(m);
  log(std::to_string(r.layers.size()) + " layers, " + std::to_string(r.layers.front().size()) + " " + a.kind +
      " items, " + std::to_string(r.skipped) + " skipped spans");
  log.write(fs::path(a.out) / "pool.log");
}

// ---------------------------------------------------------------- cca

struct CcaArgs {
  std::string x, y, out = "cca_curve.csv";
  double variance = 0.99;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  bool standardize = false;
};

cca::Reference load_reference(const std::string& arg) {
  if (arg == "onehot") return cca::OneHotLabels{};
  const std::string prefix = "pooled:";
  if (arg.rfind(prefix, 0) == 0) {
    const fs::path p(arg.substr(prefix.size()));
    const auto layers = spanpool::read_pooled_dir(p.parent_path());
    for (const auto& l : layers)
      if (l.layer_id == p.filename().string()) return l;
    throw ValidationError("pooled directory " + p.parent_path().string() + " has no layer " + p.filename().string());
  }
  return featio::read_embeddings(arg);
}

void run_cca(const CcaArgs& a) {
  const auto layers = spanpool::read_pooled_dir(a.x);
  cca::CurveOptions opts;
  opts.cca.variance_keep = a.variance;
  opts.cca.standardize = a.standardize;
  opts.n_samples = a.samples;
  opts.seed = a.seed;
  const auto r = cca::cca_curve(layers, load_reference(a.y), opts);
  save_curve(r.curve, a.out);
  Log log;
  log("x " + a.x + ", y " + a.y + ", variance " + fmt(a.variance) + ", samples " + std::to_string(a.samples) +
      ", seed " + std::to_string(a.seed));
  for (const auto& l : r.log) log(l);
  log.write(log_path(a.out));
}

// ---------------------------------------------------------------- mi

struct MiArgs {
  std::string x, out = "mi_curve.csv";
  std::size_t samples = 0;
  mi::MiCurveOptions opts;
};

void run_mi(const MiArgs& a) {
  auto layers = spanpool::read_pooled_dir(a.x);
  if (a.samples > 0) {
    const auto rows = spanpool::sample_indices(layers.front().size(), a.samples, a.opts.seed);
    for (auto& l : layers) l = spanpool::select_rows(l, rows);
  }
  const auto r = mi::mi_curve(layers, layers.front().labels, a.opts);
  save_curve(r.curve, a.out);
  Log log;
  log("x " + a.x + ", k " + std::to_string(a.opts.k) + ", samples " + std::to_string(layers.front().size()) +
      ", seed " + std::to_string(a.opts.seed));
  for (const auto& l : r.log) log(l);
  for (std::size_t i = 0; i < r.baselines.size(); ++i) {
    log(r.curve[i].layer_id + ": mi=" + fmt(r.curve[i].value) + " baseline " + fmt(r.baselines[i].mean) + " +- " +
        fmt(r.baselines[i].stddev));
  }
  log.write(log_path(a.out));
}

// ---------------------------------------------------------------- sts

struct StsArgs {
  std::string x, pairs, out = "sts_curve.csv";
};

void run_sts(const StsArgs& a) {
  const auto layers = spanpool::read_pooled_dir(a.x);
  const auto r = stats::sts_curve(layers, stats::read_pairs(a.pairs));
  save_curve(r.curve, a.out);
  Log log;
  for (const auto& l : r.log) log(l);
  for (const auto& p : r.curve) log(p.layer_id + ": spearman=" + fmt(p.value));
  log.write(log_path(a.out));
}

// ---------------------------------------------------------------- weights

struct WeightsArgs {
  std::string input, out = ".";
  std::vector<std::string> groups;
  double threshold = 0.4;
  std::size_t top = 3;
};

void run_weights(const WeightsArgs& a) {
  const auto tasks = layerweights::read_weights(a.input);
  std::vector<layerweights::Group> groups;
  for (const auto& g : a.groups) groups.push_back(layerweights::parse_group(g, a.threshold));
  std::vector<layerweights::Report> reports;
  Log log;
  for (const auto& t : tasks) {
    reports.push_back(layerweights::report(t, groups, a.top));
    Curve c;
    for (std::size_t i = 0; i < t.layer_ids.size(); ++i) c.push_back({t.layer_ids[i], t.normalized[i]});
    save_curve(c, fs::path(a.out) / ("weights-" + t.task + ".csv"));
    for (const auto& g : reports.back().groups)
      log(t.task + ": group " + g.name + " mass " + fmt(g.mass) + (g.dominant ? " (dominant)" : ""));
  }
  write_text(fs::path(a.out) / "weights-report.json", layerweights::report_json(reports));
  log.write(fs::path(a.out) / "weights-report.log");
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::string models, metric, results = "results", out;
};

// Union of the models' layer orders. A layer missing from the running order is
// inserted right after its predecessor in the model that has it.
std::vector<std::string> merge_layer_orders(const std::vector<std::vector<std::string>>& orders) {
  std::vector<std::string> merged;
  for (const auto& order : orders) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (std::find(merged.begin(), merged.end(), order[i]) != merged.end()) continue;
      auto at = merged.begin();
      if (i > 0) at = std::find(merged.begin(), merged.end(), order[i - 1]) + 1;
      merged.insert(at, order[i]);
    }
  }
  return merged;
}

void run_report(const ReportArgs& a) {
  const auto models = text::split(a.models, ',');
  if (models.empty() || a.models.empty()) throw ValidationError("--models needs at least one model");
  std::set<std::string> seen;
  std::vector<Curve> curves;
  std::vector<std::vector<std::string>> orders;
  for (const auto& m : models) {
    if (!seen.insert(m).second) throw ValidationError("model " + m + " listed twice");
    const fs::path p = fs::path(a.results) / m / (a.metric + ".csv");
    if (!fs::exists(p)) throw IoError("model " + m + ": missing " + a.metric + " result " + p.string());
    curves.push_back(read_curve(p));
    std::vector<std::string> ids;
    for (const auto& pt : curves.back()) ids.push_back(pt.layer_id);
    orders.push_back(std::move(ids));
  }
  const auto rows = merge_layer_orders(orders);
  std::ostringstream csv;
  csv << "layer_id";
  for (const auto& m : models) csv << ',' << m;
  csv << '\n';
  for (const auto& id : rows) {
    csv << id;
    for (const auto& c : curves) {
      csv << ',';
      for (const auto& pt : c)
        if (pt.layer_id == id) csv << fmt(pt.value);
    }
    csv << '\n';
  }
  const fs::path out = a.out.empty() ? fs::path(a.results) / ("report-" + a.metric + ".csv") : fs::path(a.out);
  write_text(out, csv.str());
  Log log;
  log("metric " + a.metric + ": " + std::to_string(models.size()) + " models, " + std::to_string(rows.size()) +
      " layers");
  log.write(log_path(out));
}

// ---------------------------------------------------------------- validate-config

struct ValidateArgs {
  std::vector<std::string> configs;
  bool comparison_set = false;
};

void run_validate(const ValidateArgs& a) {
  std::vector<testbed::ModelConfig> configs;
  for (const auto& c : a.configs) {
    configs.push_back(testbed::resolve_config(c));
    std::cout << testbed::config_to_json_text(configs.back());
  }
  if (a.comparison_set) {
    const auto errors = testbed::check_comparison_set(configs);
    if (!errors.empty()) {
      std::string msg = "comparison set is inconsistent";
      for (const auto& e : errors) msg += "\n  " + e;
      throw ValidationError(msg);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probe: layer-wise probing of speech encoders"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
  c_synth->add_option("--out", synth.out, "corpus directory")->required();
  c_synth->add_option("--seed", synth.opts.seed);
  c_synth->add_option("--utterances", synth.opts.utterances);
  c_synth->add_option("--noise", synth.opts.noise);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train a toy model with SGD");
  c_train->add_option("--config", train.config, "preset name or config file")->required();
  c_train->add_option("--corpus", train.corpus)->required();
  c_train->add_option("--out", train.out, "model directory")->required();
  c_train->add_option("--steps", train.opts.steps);
  c_train->add_option("--lr", train.opts.lr);
  c_train->add_option("--batch", train.opts.batch);
  c_train->add_option("--eval-every", train.opts.eval_every);
  c_train->add_option("--clip", train.opts.clip_norm);
  c_train->add_option("--seed", train.opts.seed);

  GradCheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  c_gc->add_option("--config", gc.config)->required();
  c_gc->add_option("--frames", gc.frames);
  c_gc->add_option("--samples", gc.opts.samples);
  c_gc->add_option("--eps", gc.opts.epsilon);
  c_gc->add_option("--perturb", gc.perturb, "noise added to the initial weights");
  c_gc->add_option("--tolerance", gc.tolerance);
  c_gc->add_option("--seed", gc.opts.seed);
  c_gc->add_option("--out", gc.out);

  ExtractArgs ex;
  auto* c_ex = app.add_subcommand("extract", "dump every layer for every utterance");
  c_ex->add_option("--model", ex.model)->required();
  c_ex->add_option("--corpus", ex.corpus)->required();
  c_ex->add_option("--out", ex.out)->required();

  PoolArgs pool;
  auto* c_pool = app.add_subcommand("pool", "mean-pool dumps over annotated spans");
  c_pool->add_option("--dumps", pool.dumps)->required();
  c_pool->add_option("--annotations", pool.annotations)->required();
  c_pool->add_option("--kind", pool.kind)->check(CLI::IsMember({"word", "phone", "utterance"}));
  c_pool->add_option("--base-period", pool.base_period);
  c_pool->add_option("--out", pool.out)->required();

  CcaArgs cc;
  auto* c_cca = app.add_subcommand("cca", "PWCCA curve against a reference");
  c_cca->add_option("--x", cc.x, "pooled directory")->required();
  c_cca->add_option("--y", cc.y, "embedding file, 'onehot' or pooled:<dir>/<layer>")->required();
  c_cca->add_option("--variance", cc.variance);
  c_cca->add_option("--samples", cc.samples, "0 = all items");
  c_cca->add_option("--seed", cc.seed);
  c_cca->add_flag("--standardize", cc.standardize);
  c_cca->add_option("--out", cc.out);

  MiArgs mia;
  auto* c_mi = app.add_subcommand("mi", "k-means / label mutual information curve");
  c_mi->add_option("--x", mia.x)->required();
  c_mi->add_option("--k", mia.opts.k);
  c_mi->add_option("--samples", mia.samples, "0 = all items");
  c_mi->add_option("--seed", mia.opts.seed);
  c_mi->add_option("--max-iters", mia.opts.max_iters);
  c_mi->add_option("--permutations", mia.opts.permutations);
  c_mi->add_option("--out", mia.out);

  StsArgs sts;
  auto* c_sts = app.add_subcommand("sts", "Spearman correlation of cosine similarities");
  c_sts->add_option("--x", sts.x)->required();
  c_sts->add_option("--pairs", sts.pairs)->required();
  c_sts->add_option("--out", sts.out);

  WeightsArgs w;
  auto* c_w = app.add_subcommand("weights", "layer weight reports");
  c_w->add_option("--input", w.input)->required();
  c_w->add_option("--group", w.groups, "name=id1,id2[@threshold]");
  c_w->add_option("--threshold", w.threshold);
  c_w->add_option("--top", w.top);
  c_w->add_option("--out", w.out, "output directory");

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "join per-model curves into one CSV");
  c_rep->add_option("--models", rep.models)->required();
  c_rep->add_option("--metric", rep.metric)->required();
  c_rep->add_option("--results", rep.results);
  c_rep->add_option("--out", rep.out);

  ValidateArgs val;
  auto* c_val = app.add_subcommand("validate-config", "check presets or config files");
  c_val->add_option("configs", val.configs)->required();
  c_val->add_flag("--comparison-set", val.comparison_set, "require equal total layer counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (*c_synth) run_synth(synth);
    if (*c_train) run_train(train);
    if (*c_gc) run_gradcheck(gc);
    if (*c_ex) run_extract(ex);
    if (*c_pool) run_pool(pool);
    if (*c_cca) run_cca(cc);
    if (*c_mi) run_mi(mia);
    if (*c_sts) run_sts(sts);
    if (*c_w) run_weights(w);
    if (*c_rep) run_report(rep);
    if (*c_val) run_validate(val);
  } catch (const ValidationError& e) {
    std::cerr << "probe " << stage << ": " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << "probe " << stage << ": " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "probe " << stage << ": " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "probe " << stage << ": " << e.what() << '\n';
    return 2;
  }
  return 0;
}
