// src/testbed/params.cpp

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

#include "probekit/testbed/params.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "probekit/featio.hpp"

namespace probekit::testbed {

ParamRef Parameters::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (index_.count(name)) throw RuntimeError("duplicate parameter " + name);
  ParamRef r{values_.size(), rows, cols};
  values_.resize(values_.size() + r.size(), 0.0);
  names_.push_back(name);
  index_.emplace(name, r);
  return r;
}

const ParamRef& Parameters::ref(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw RuntimeError("no parameter named " + name);
  return it->second;
}

namespace {

void fill_normal(MatMap m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = stddev * rng.normal();
}

}  // namespace

Parameters build_parameters(const ModelConfig& c) {
  validate_or_throw(c);
  Parameters p;
  Rng rng(mix_seed(c.seed, 0x706172616d73));
  const Eigen::Index D = c.dim;

  auto projection = [&](const std::string& name, Eigen::Index in, Eigen::Index out) {
    fill_normal(p.view(p.add(name, in, out)), rng, 1.0 / std::sqrt(static_cast<double>(in)));
  };

  projection("in.W", c.input_dim, D);
  p.add("in.b", 1, D);
  fill_normal(p.view(p.add("mask_emb", 1, D)), rng, 1.0);

  int layer = 0;
  const int L = c.levels();
  for (int b = 0; b < c.blocks(); ++b) {
    if (b >= L) {
      const int level = c.level_of_block(b);
      p.view(p.add("up" + std::to_string(level) + ".W", D, D)).setIdentity();
      p.add("up" + std::to_string(level) + ".b", 1, D);
    }
    for (int i = 0; i < c.layers_per_encoder[static_cast<std::size_t>(b)]; ++i) {
      const std::string pre = "layer" + std::to_string(++layer) + ".";
      p.view(p.add(pre + "ln1.g", 1, D)).setOnes();
      p.add(pre + "ln1.b", 1, D);
      for (const char* m : {"q", "k", "v", "o"}) {
        projection(pre + "attn.W" + m, D, D);
        p.add(pre + "attn.b" + m, 1, D);
      }
      p.view(p.add(pre + "ln2.g", 1, D)).setOnes();
      p.add(pre + "ln2.b", 1, D);
      projection(pre + "ffn.W1", D, c.ffn_dim);
      p.add(pre + "ffn.b1", 1, c.ffn_dim);
      projection(pre + "ffn.W2", c.ffn_dim, D);
      p.add(pre + "ffn.b2", 1, D);
    }
    if (b < L - 1) {
      p.view(p.add("down" + std::to_string(b) + ".W", D, D)).setIdentity();
      p.add("down" + std::to_string(b) + ".b", 1, D);
    }
  }

  // Prediction heads read a layer-normalized copy of the stream.
  auto head = [&](const std::string& pre) {
    p.view(p.add(pre + ".ln.g", 1, D)).setOnes();
    p.add(pre + ".ln.b", 1, D);
    projection(pre + ".W", D, c.num_classes);
    p.add(pre + ".b", 1, c.num_classes);
  };
  head("head");
  for (int level = 1; level < L; ++level) head("aux" + std::to_string(level));
  return p;
}

void perturb(Parameters& params, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (double& v : params.values()) v += scale * rng.normal();
}

void save_model(const ModelConfig& config, const Parameters& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.json", std::ios::trunc);
    out << config_to_json_text(config);
    if (!out) throw IoError("cannot write " + (dir / "config.json").string());
  }
  featio::FeatureDump dump;
  dump.layer_id = "params";
  dump.data = Eigen::Map<const Matrix>(params.values().data(), 1, static_cast<Eigen::Index>(params.size()));
  featio::write_dump(dump, dir / "params.prbf", featio::DType::f64);
}

std::pair<ModelConfig, Parameters> load_model(const std::filesystem::path& dir) {
  ModelConfig config = load_config(dir / "config.json");
  Parameters params = build_parameters(config);
  const auto dump = featio::read_dump(dir / "params.prbf");
  if (dump.data.rows() != 1 || static_cast<std::size_t>(dump.data.cols()) != params.size())
    throw FormatError((dir / "params.prbf").string() + ": parameter count " +
                      std::to_string(dump.data.size()) + " does not match config (" +
                      std::to_string(params.size()) + ")");
  std::copy(dump.data.data(), dump.data.data() + dump.data.size(), params.values().begin());
  return {std::move(config), std::move(params)};
}

}  // namespace probekit::testbed
