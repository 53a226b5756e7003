// src/testbed/model.cpp

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

#include "probekit/testbed/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace probekit::testbed {

namespace {

constexpr double kLayerNormEps = 1e-5;

using RowVec = Eigen::RowVectorXd;

Matrix linear(const Matrix& x, ConstMatMap w, ConstMatMap b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

// Accumulates weight/bias gradients and returns dL/dx.
Matrix linear_backward(const Matrix& dy, const Matrix& x, ConstMatMap w, MatMap dw, MatMap db) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  return dy * w.transpose();
}

struct LayerNormCache {
  Matrix xhat;
  Vector rstd;
};

Matrix layer_norm(const Matrix& x, ConstMatMap g, ConstMatMap b, LayerNormCache& cache) {
  const Eigen::Index T = x.rows();
  const double D = static_cast<double>(x.cols());
  cache.xhat.resize(T, x.cols());
  cache.rstd.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double mu = x.row(t).sum() / D;
    const RowVec centered = x.row(t).array() - mu;
    const double var = centered.squaredNorm() / D;
    cache.rstd(t) = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.xhat.row(t) = centered * cache.rstd(t);
  }
  Matrix y = cache.xhat.array().rowwise() * g.row(0).array();
  y.rowwise() += b.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, ConstMatMap g, MatMap dg,
                           MatMap db) {
  dg.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * g.row(0).array();
  const double D = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index t = 0; t < dy.rows(); ++t) {
    const double mean_dxhat = dxhat.row(t).sum() / D;
    const double mean_dxhat_xhat = dxhat.row(t).dot(cache.xhat.row(t)) / D;
    dx.row(t) = cache.rstd(t) *
                (dxhat.row(t).array() - mean_dxhat - cache.xhat.row(t).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

// tanh form of GELU
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

Matrix gelu(const Matrix& x) {
  const auto u = kGeluC * (x.array() + kGeluA * x.array().cube());
  return (0.5 * x.array() * (1.0 + u.tanh())).matrix();
}

Matrix gelu_grad(const Matrix& x) {
  const auto x2 = x.array().square();
  const Eigen::ArrayXXd th = (kGeluC * (x.array() + kGeluA * x.array() * x2)).tanh();
  return (0.5 * (1.0 + th) + 0.5 * x.array() * (1.0 - th.square()) * kGeluC * (1.0 + 3.0 * kGeluA * x2))
      .matrix();
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

struct LayerRefs {
  ParamRef ln1g, ln1b, wq, bq, wk, bk, wv, bv, wo, bo, ln2g, ln2b, w1, b1, w2, b2;
};

LayerRefs layer_refs(const Parameters& p, int layer) {
  const std::string pre = "layer" + std::to_string(layer) + ".";
  return {p.ref(pre + "ln1.g"),   p.ref(pre + "ln1.b"),   p.ref(pre + "attn.Wq"), p.ref(pre + "attn.bq"),
          p.ref(pre + "attn.Wk"), p.ref(pre + "attn.bk"), p.ref(pre + "attn.Wv"), p.ref(pre + "attn.bv"),
          p.ref(pre + "attn.Wo"), p.ref(pre + "attn.bo"), p.ref(pre + "ln2.g"),   p.ref(pre + "ln2.b"),
          p.ref(pre + "ffn.W1"),  p.ref(pre + "ffn.b1"),  p.ref(pre + "ffn.W2"),  p.ref(pre + "ffn.b2")};
}

struct LayerCache {
  LayerNormCache ln1, ln2;
  Matrix a;  // ln1 output
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, T x T
  Matrix o;                   // concatenated head outputs
  Matrix n2;                  // ln2 output
  Matrix pre;                 // FFN pre-activation
  Matrix act;
};

// Pre-LN block: x + MHA(LN(x)), then + FFN(LN(.)).
Matrix layer_forward(const Matrix& x, const Parameters& P, const LayerRefs& r, int heads, LayerCache& c) {
  const Eigen::Index T = x.rows();
  const Eigen::Index D = x.cols();
  const Eigen::Index dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  c.a = layer_norm(x, P.view(r.ln1g), P.view(r.ln1b), c.ln1);
  c.q = linear(c.a, P.view(r.wq), P.view(r.bq));
  c.k = linear(c.a, P.view(r.wk), P.view(r.bk));
  c.v = linear(c.a, P.view(r.wv), P.view(r.bv));
  c.o.resize(T, D);
  c.probs.resize(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Matrix s = (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
    softmax_rows(s);
    c.o.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
    c.probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  const Matrix x1 = x + linear(c.o, P.view(r.wo), P.view(r.bo));

  c.n2 = layer_norm(x1, P.view(r.ln2g), P.view(r.ln2b), c.ln2);
  c.pre = linear(c.n2, P.view(r.w1), P.view(r.b1));
  c.act = gelu(c.pre);
  return x1 + linear(c.act, P.view(r.w2), P.view(r.b2));
}

Matrix layer_backward(const Matrix& dout, const Parameters& P, Gradients& G, const LayerRefs& r, int heads,
                      const LayerCache& c) {
  const Eigen::Index D = dout.cols();
  const Eigen::Index dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // FFN branch
  const Matrix dact = linear_backward(dout, c.act, P.view(r.w2), G.view(r.w2), G.view(r.b2));
  const Matrix dpre = dact.cwiseProduct(gelu_grad(c.pre));
  const Matrix dn2 = linear_backward(dpre, c.n2, P.view(r.w1), G.view(r.w1), G.view(r.b1));
  Matrix dx1 = dout + layer_norm_backward(dn2, c.ln2, P.view(r.ln2g), G.view(r.ln2g), G.view(r.ln2b));

  // Attention branch
  const Matrix dconcat = linear_backward(dx1, c.o, P.view(r.wo), G.view(r.wo), G.view(r.bo));
  Matrix dq(dout.rows(), D), dk(dout.rows(), D), dv(dout.rows(), D);
  for (int h = 0; h < heads; ++h) {
    const Matrix& p = c.probs[static_cast<std::size_t>(h)];
    const Matrix doh = dconcat.middleCols(h * dh, dh);
    const Matrix dp = doh * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = p.transpose() * doh;
    Matrix ds = p.cwiseProduct(dp);
    const Vector rowdot = ds.rowwise().sum();
    ds -= p.cwiseProduct(rowdot.replicate(1, p.cols()));
    ds *= scale;
    dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  Matrix da = linear_backward(dq, c.a, P.view(r.wq), G.view(r.wq), G.view(r.bq));
  da += linear_backward(dk, c.a, P.view(r.wk), G.view(r.wk), G.view(r.bk));
  da += linear_backward(dv, c.a, P.view(r.wv), G.view(r.wv), G.view(r.bv));
  return dx1 + layer_norm_backward(da, c.ln1, P.view(r.ln1g), G.view(r.ln1g), G.view(r.ln1b));
}

Matrix window_average(const Matrix& x, int r) {
  const Eigen::Index T = x.rows();
  const Eigen::Index out_len = (T + r - 1) / r;
  Matrix avg = Matrix::Zero(out_len, x.cols());
  for (Eigen::Index t = 0; t < T; ++t) avg.row(t / r) += x.row(t);
  avg /= static_cast<double>(r);
  return avg;
}

Matrix window_average_backward(const Matrix& davg, int r, Eigen::Index T) {
  Matrix dx(T, davg.cols());
  for (Eigen::Index t = 0; t < T; ++t) dx.row(t) = davg.row(t / r) / static_cast<double>(r);
  return dx;
}

Matrix repeat_frames(const Matrix& x, int r, Eigen::Index target_len) {
  Matrix rep(target_len, x.cols());
  for (Eigen::Index t = 0; t < target_len; ++t) rep.row(t) = x.row(t / r);
  return rep;
}

Matrix repeat_frames_backward(const Matrix& drep, int r, Eigen::Index low_len) {
  Matrix dx = Matrix::Zero(low_len, drep.cols());
  for (Eigen::Index t = 0; t < drep.rows(); ++t) dx.row(t / r) += drep.row(t);
  return dx;
}

Matrix positional_encoding(Eigen::Index T, Eigen::Index D) {
  Matrix pe(T, D);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < D; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(D));
      pe(t, i) = (i % 2 == 0) ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
    }
  }
  return pe;
}

// Mean cross-entropy over rows where `use` is set. Writes dL/dlogits (scaled by
// `weight`) into dlogits when given. Returns 0 when no row is used.
double masked_cross_entropy(const Matrix& logits, const std::vector<int>& targets, const std::vector<bool>& use,
                            double weight, Matrix* dlogits) {
  std::size_t count = 0;
  for (bool u : use) count += u ? 1 : 0;
  if (dlogits) *dlogits = Matrix::Zero(logits.rows(), logits.cols());
  if (count == 0) return 0.0;
  double loss = 0.0;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    if (!use[static_cast<std::size_t>(t)]) continue;
    const double m = logits.row(t).maxCoeff();
    const RowVec e = (logits.row(t).array() - m).exp();
    const double z = e.sum();
    const int y = targets[static_cast<std::size_t>(t)];
    loss += std::log(z) + m - logits(t, y);
    if (dlogits) {
      dlogits->row(t) = e / z;
      (*dlogits)(t, y) -= 1.0;
      dlogits->row(t) *= weight / static_cast<double>(count);
    }
  }
  return loss / static_cast<double>(count);
}

std::string layer_name(int n) { return "T" + std::to_string(n); }

}  // namespace

const featio::FeatureDump& ForwardTrace::layer(const std::string& id) const {
  for (const auto& l : layers)
    if (l.layer_id == id) return l;
  throw ValidationError("trace has no layer " + id);
}

std::vector<bool> make_mask(std::size_t frames, double prob, int span, std::uint64_t seed) {
  std::vector<bool> mask(frames, false);
  Rng rng(seed);
  for (std::size_t t = 0; t < frames; ++t) {
    if (rng.uniform() < prob) {
      for (std::size_t s = t; s < std::min(frames, t + static_cast<std::size_t>(span)); ++s) mask[s] = true;
    }
  }
  return mask;
}

Matrix downsample(const Matrix& x, int ratio, const Matrix& weight, const Eigen::RowVectorXd& bias) {
  if (ratio < 2) throw ValidationError("downsample ratio must be >= 2");
  if (x.rows() < 1) throw ValidationError("downsample needs at least one frame");
  Matrix y = window_average(x, ratio) * weight;
  y.rowwise() += bias;
  return y;
}

Matrix upsample(const Matrix& x, int ratio, Eigen::Index target_len, const Matrix& weight,
                const Eigen::RowVectorXd& bias) {
  if (ratio < 1) throw ValidationError("upsample ratio must be positive");
  if ((target_len + ratio - 1) / ratio != x.rows())
    throw ValidationError("upsample: ceil(" + std::to_string(target_len) + "/" + std::to_string(ratio) +
                          ") != " + std::to_string(x.rows()) + " input frames");
  Matrix y = repeat_frames(x, ratio, target_len) * weight;
  y.rowwise() += bias;
  return y;
}

Eigen::Index level_length(const ModelConfig& config, Eigen::Index frames, int level) {
  Eigen::Index len = frames;
  for (int l = 0; l < level; ++l) {
    const int r = config.ratio(l);
    len = (len + r - 1) / r;
  }
  return len;
}

Model::Model(ModelConfig config) : config_(std::move(config)), params_(build_parameters(config_)) {}

Model::Model(ModelConfig config, Parameters params) : config_(std::move(config)), params_(std::move(params)) {
  validate_or_throw(config_);
  if (params_.size() != build_parameters(config_).size())
    throw ValidationError("parameter buffer does not match config " + config_.name);
}

std::vector<std::string> Model::layer_ids() const {
  std::vector<std::string> ids;
  const int L = config_.levels();
  int n = 0;
  for (int b = 0; b < config_.blocks(); ++b) {
    if (b >= L) ids.push_back("U" + std::to_string(config_.level_of_block(b)));
    for (int i = 0; i < config_.layers_per_encoder[static_cast<std::size_t>(b)]; ++i) ids.push_back(layer_name(++n));
    if (b < L - 1) ids.push_back("D" + std::to_string(b));
  }
  return ids;
}

ForwardTrace Model::run(const Matrix& frames) const { return evaluate(frames, nullptr, nullptr, nullptr); }

ForwardTrace Model::forward(const Matrix& frames, const TargetStream& targets, std::uint64_t mask_seed) const {
  const auto mask = make_mask(static_cast<std::size_t>(frames.rows()), config_.mask_prob, config_.mask_span, mask_seed);
  return forward_with_mask(frames, targets, mask);
}

ForwardTrace Model::forward_with_mask(const Matrix& frames, const TargetStream& targets,
                                      const std::vector<bool>& mask) const {
  return evaluate(frames, &targets, &mask, nullptr);
}

LossBreakdown Model::loss_and_gradient(const Matrix& frames, const TargetStream& targets,
                                       const std::vector<bool>& mask, std::vector<double>& grad) const {
  return evaluate(frames, &targets, &mask, &grad).loss;
}

ForwardTrace Model::evaluate(const Matrix& frames, const TargetStream* targets, const std::vector<bool>* mask,
                             std::vector<double>* grad) const {
  const ModelConfig& c = config_;
  const Parameters& P = params_;
  const Eigen::Index T = frames.rows();
  const int L = c.levels();
  const int heads = c.heads;

  if (T < 1) throw ValidationError("forward needs at least one frame");
  if (frames.cols() != c.input_dim)
    throw ValidationError("input has " + std::to_string(frames.cols()) + " dims, model expects " +
                          std::to_string(c.input_dim));
  if (!frames.allFinite()) throw ValidationError("input frames contain non-finite values");
  if (targets) {
    if (static_cast<Eigen::Index>(targets->units.size()) != T)
      throw ValidationError("target stream has " + std::to_string(targets->units.size()) + " units for " +
                            std::to_string(T) + " frames");
    for (int u : targets->units)
      if (u < 0 || u >= c.num_classes) throw ValidationError("target unit out of range");
  }
  std::vector<bool> no_mask;
  if (!mask) {
    no_mask.assign(static_cast<std::size_t>(T), false);
    mask = &no_mask;
  }
  if (static_cast<Eigen::Index>(mask->size()) != T) throw ValidationError("mask length does not match frames");
  if (targets && std::none_of(mask->begin(), mask->end(), [](bool b) { return b; }))
    throw EmptyMaskError("mask covers no frames");

  ForwardTrace trace;
  trace.mask = *mask;
  auto record = [&](const std::string& id, int level, const Matrix& m) {
    trace.layers.push_back({id, c.period_ms(level), m});
  };

  // Input projection, mask embedding, positions.
  const ParamRef in_w = P.ref("in.W"), in_b = P.ref("in.b"), mask_emb = P.ref("mask_emb");
  Matrix h = linear(frames, P.view(in_w), P.view(in_b));
  for (Eigen::Index t = 0; t < T; ++t)
    if ((*mask)[static_cast<std::size_t>(t)]) h.row(t) = P.view(mask_emb).row(0);
  h += positional_encoding(T, c.dim);

  // Block structure caches for the backward pass.
  std::vector<LayerCache> caches(static_cast<std::size_t>(c.total_layers()));
  std::vector<LayerRefs> refs;
  refs.reserve(caches.size());
  for (int n = 1; n <= c.total_layers(); ++n) refs.push_back(layer_refs(P, n));
  std::vector<Matrix> skip(static_cast<std::size_t>(L));
  std::vector<Matrix> down_avg(static_cast<std::size_t>(L));  // window averages per level
  std::vector<Matrix> up_rep(static_cast<std::size_t>(L));    // repeated frames per level
  std::vector<Matrix> aux_input(static_cast<std::size_t>(L));  // normalized head inputs
  std::vector<LayerNormCache> aux_ln(static_cast<std::size_t>(L));
  std::vector<Matrix> aux_dlogits(static_cast<std::size_t>(L));

  auto aux_targets = [&](int level, std::vector<int>& units, std::vector<bool>& use) {
    const int R = c.cumulative_ratio(level);
    const Eigen::Index len = level_length(c, T, level);
    units.resize(static_cast<std::size_t>(len));
    use.resize(static_cast<std::size_t>(len));
    for (Eigen::Index j = 0; j < len; ++j) {
      const auto src = static_cast<std::size_t>(j * R);
      units[static_cast<std::size_t>(j)] = targets ? targets->units[src] : 0;
      use[static_cast<std::size_t>(j)] = (*mask)[src];
    }
  };

  auto aux_head = [&](int level, const Matrix& stream) {
    if (!c.aux_loss_enabled || level < 1) return;
    const std::string pre = "aux" + std::to_string(level);
    const ParamRef w = P.ref(pre + ".W"), b = P.ref(pre + ".b");
    const auto lv = static_cast<std::size_t>(level);
    aux_input[lv] = layer_norm(stream, P.view(P.ref(pre + ".ln.g")), P.view(P.ref(pre + ".ln.b")), aux_ln[lv]);
    const Matrix& stream_n = aux_input[lv];
    trace.aux_logits.push_back(linear(stream_n, P.view(w), P.view(b)));
    trace.aux_levels.push_back(level);
    if (targets) {
      std::vector<int> units;
      std::vector<bool> use;
      aux_targets(level, units, use);
      Matrix dl;
      trace.loss.aux.push_back(masked_cross_entropy(trace.aux_logits.back(), units, use, c.aux_loss_weight,
                                                    grad ? &dl : nullptr));
      aux_dlogits[static_cast<std::size_t>(level)] = std::move(dl);
    }
  };

  int n = 0;  // transformer layer counter
  for (int b = 0; b < c.blocks(); ++b) {
    const int level = c.level_of_block(b);
    const int count = c.layers_per_encoder[static_cast<std::size_t>(b)];
    const bool decoder = b >= L;
    if (decoder) {
      const auto lv = static_cast<std::size_t>(level);
      const ParamRef w = P.ref("up" + std::to_string(level) + ".W");
      const ParamRef bias = P.ref("up" + std::to_string(level) + ".b");
      up_rep[lv] = repeat_frames(h, c.ratio(level), skip[lv].rows());
      h = linear(up_rep[lv], P.view(w), P.view(bias));
      record("U" + std::to_string(level), level, h);
      if (c.residual_mode == ResidualMode::pre_decoder) h += skip[lv];
    }
    for (int i = 0; i < count; ++i) {
      ++n;
      h = layer_forward(h, P, refs[static_cast<std::size_t>(n - 1)], heads, caches[static_cast<std::size_t>(n - 1)]);
      if (decoder && i == count - 1 && c.residual_mode == ResidualMode::post_decoder)
        h += skip[static_cast<std::size_t>(level)];
      record(layer_name(n), level, h);
    }
    if (b >= L - 1) aux_head(level, h);
    if (b < L - 1) {
      const auto lv = static_cast<std::size_t>(level);
      skip[lv] = h;
      const ParamRef w = P.ref("down" + std::to_string(level) + ".W");
      const ParamRef bias = P.ref("down" + std::to_string(level) + ".b");
      down_avg[lv] = window_average(h, c.ratio(level));
      h = linear(down_avg[lv], P.view(w), P.view(bias));
      record("D" + std::to_string(level), level + 1, h);
    }
  }

  const ParamRef head_w = P.ref("head.W"), head_b = P.ref("head.b");
  const ParamRef head_g = P.ref("head.ln.g"), head_beta = P.ref("head.ln.b");
  LayerNormCache head_ln;
  const Matrix head_in = layer_norm(h, P.view(head_g), P.view(head_beta), head_ln);
  trace.main_logits = linear(head_in, P.view(head_w), P.view(head_b));
  if (!targets) return trace;

  Matrix dmain;
  trace.loss.main = masked_cross_entropy(trace.main_logits, targets->units, *mask, 1.0, grad ? &dmain : nullptr);
  trace.loss.total = trace.loss.main;
  for (double a : trace.loss.aux) trace.loss.total += c.aux_loss_weight * a;
  if (!grad) return trace;

  // Backward pass.
  grad->assign(P.size(), 0.0);
  Gradients G{std::move(*grad)};
  Matrix dh = layer_norm_backward(linear_backward(dmain, head_in, P.view(head_w), G.view(head_w), G.view(head_b)),
                                  head_ln, P.view(head_g), G.view(head_g), G.view(head_beta));
  std::vector<Matrix> dskip(static_cast<std::size_t>(L));

  n = c.total_layers();
  for (int b = c.blocks() - 1; b >= 0; --b) {
    const int level = c.level_of_block(b);
    const auto lv = static_cast<std::size_t>(level);
    const int count = c.layers_per_encoder[static_cast<std::size_t>(b)];
    const bool decoder = b >= L;

    if (b < L - 1) {
      const ParamRef w = P.ref("down" + std::to_string(level) + ".W");
      const ParamRef bias = P.ref("down" + std::to_string(level) + ".b");
      const Matrix davg = linear_backward(dh, down_avg[lv], P.view(w), G.view(w), G.view(bias));
      dh = window_average_backward(davg, c.ratio(level), skip[lv].rows()) + dskip[lv];
    }
    if (b >= L - 1 && c.aux_loss_enabled && level >= 1) {
      const std::string pre = "aux" + std::to_string(level);
      const ParamRef w = P.ref(pre + ".W"), bias = P.ref(pre + ".b");
      const ParamRef g = P.ref(pre + ".ln.g"), beta = P.ref(pre + ".ln.b");
      dh += layer_norm_backward(linear_backward(aux_dlogits[lv], aux_input[lv], P.view(w), G.view(w), G.view(bias)),
                                aux_ln[lv], P.view(g), G.view(g), G.view(beta));
    }
    if (decoder && c.residual_mode == ResidualMode::post_decoder) dskip[lv] = dh;
    for (int i = count - 1; i >= 0; --i) {
      dh = layer_backward(dh, P, G, refs[static_cast<std::size_t>(n - 1)], heads, caches[static_cast<std::size_t>(n - 1)]);
      --n;
    }
    if (decoder) {
      if (c.residual_mode == ResidualMode::pre_decoder) dskip[lv] = dh;
      const ParamRef w = P.ref("up" + std::to_string(level) + ".W");
      const ParamRef bias = P.ref("up" + std::to_string(level) + ".b");
      const Matrix drep = linear_backward(dh, up_rep[lv], P.view(w), G.view(w), G.view(bias));
      dh = repeat_frames_backward(drep, c.ratio(level), level_length(c, T, level + 1));
    }
  }

  // Masked rows came from the mask embedding, the rest from the input projection.
  Matrix dproj = dh;
  for (Eigen::Index t = 0; t < T; ++t) {
    if ((*mask)[static_cast<std::size_t>(t)]) {
      G.view(mask_emb).row(0) += dh.row(t);
      dproj.row(t).setZero();
    }
  }
  linear_backward(dproj, frames, P.view(in_w), G.view(in_w), G.view(in_b));
  *grad = std::move(G.values);
  return trace;
}

GradCheckReport grad_check(const Model& model, const Matrix& frames, const TargetStream& targets,
                           const GradCheckOptions& options) {
  // Deterministic mask; skip seeds that mask nothing.
  std::vector<bool> mask;
  for (std::uint64_t s = options.mask_seed;; ++s) {
    mask = make_mask(static_cast<std::size_t>(frames.rows()), model.config().mask_prob, model.config().mask_span, s);
    if (std::any_of(mask.begin(), mask.end(), [](bool b) { return b; })) break;
  }
  std::vector<double> analytic;
  model.loss_and_gradient(frames, targets, mask, analytic);
  for (double g : analytic)
    if (!std::isfinite(g)) throw RuntimeError("non-finite analytic gradient");

  Model probe = model;
  auto& values = probe.params().values();
  const auto& names = probe.params().names();

  // One entry from every tensor, then uniform picks.
  Rng rng(options.seed);
  std::vector<std::pair<std::size_t, std::string>> picks;
  for (const auto& name : names) {
    const ParamRef& r = probe.params().ref(name);
    picks.emplace_back(r.offset + static_cast<std::size_t>(rng.below(r.size())), name);
  }
  while (picks.size() < options.samples) {
    const auto idx = static_cast<std::size_t>(rng.below(values.size()));
    std::string owner;
    for (const auto& name : names) {
      const ParamRef& r = probe.params().ref(name);
      if (idx >= r.offset && idx < r.offset + r.size()) owner = name;
    }
    picks.emplace_back(idx, owner);
  }

  GradCheckReport report;
  report.tensors_total = names.size();
  report.tensors_covered = names.size();
  for (const auto& [idx, owner] : picks) {
    const double saved = values[idx];
    auto loss_at = [&](double delta) {
      values[idx] = saved + delta;
      const double l = probe.forward_with_mask(frames, targets, mask).loss.total;
      values[idx] = saved;
      return l;
    };
    const double h = options.epsilon;
    const double numeric = (loss_at(-2 * h) - 8 * loss_at(-h) + 8 * loss_at(h) - loss_at(2 * h)) / (12 * h);
    const double a = analytic[idx];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    if (report.checked == 0 || rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_parameter = owner;
    }
    ++report.checked;
  }
  return report;
}

std::vector<featio::FeatureDump> extract(const Model& model, const Matrix& frames) {
  return model.run(frames).layers;
}

featio::Manifest extract_to_dir(const Model& model, const std::string& utterance_id, const Matrix& frames,
                                const featio::fs::path& dir) {
  featio::fs::create_directories(dir);
  featio::Manifest manifest;
  manifest.utterance_id = utterance_id;
  for (const auto& dump : extract(model, frames)) {
    const auto path = dir / (dump.layer_id + ".prbf");
    featio::write_dump(dump, path, featio::DType::f32);
    manifest.layers.push_back({dump.layer_id, path, dump.frame_period_ms});
  }
  featio::write_manifest(manifest, dir / "manifest.json");
  return manifest;
}

}  // namespace probekit::testbed
