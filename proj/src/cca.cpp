// src/cca.cpp

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

#include "probekit/cca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/SVD>

#include "probekit/parallel.hpp"

namespace probekit::cca {

namespace {

Matrix center(const Matrix& m, bool standardize) {
  Matrix c = m.rowwise() - m.colwise().mean();
  if (standardize) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double sd = std::sqrt(c.col(j).squaredNorm() / static_cast<double>(c.rows()));
      if (sd > 0.0) c.col(j) /= sd;
    }
  }
  return c;
}

struct ReducedView {
  Matrix basis;  // N x r, whitened (orthonormal up to the ridge)
  Eigen::Index rank = 0;
};

ReducedView reduce(const Matrix& centered, const CcaOptions& options, const char* name) {
  const Eigen::MatrixXd dense = centered;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0.0)
    throw ValidationError(std::string("view ") + name + " is identically zero after centering");

  const double tol = s(0) * static_cast<double>(std::max(dense.rows(), dense.cols())) *
                     std::numeric_limits<double>::epsilon();
  Eigen::Index numerical_rank = 0;
  while (numerical_rank < s.size() && s(numerical_rank) > tol) ++numerical_rank;

  Eigen::Index keep = numerical_rank;
  if (options.variance_keep < 1.0) {
    const double total = s.head(numerical_rank).squaredNorm();
    double cum = 0.0;
    for (Eigen::Index i = 0; i < numerical_rank; ++i) {
      cum += s(i) * s(i);
      if (cum >= options.variance_keep * total) {
        keep = i + 1;
        break;
      }
    }
  }

  ReducedView out;
  out.rank = keep;
  // X V_r diag(1 / (s + ridge)) rather than U_r directly, so the ridge applies.
  const Eigen::MatrixXd scaled =
      svd.matrixV().leftCols(keep) *
      (s.head(keep).array() + options.ridge).inverse().matrix().asDiagonal();
  out.basis = dense * scaled;
  return out;
}

}  // namespace

CcaResult canonical_correlations(const Matrix& x, const Matrix& y, const CcaOptions& options) {
  if (x.rows() != y.rows())
    throw ValidationError("views have different sample counts (" + std::to_string(x.rows()) +
                          " vs " + std::to_string(y.rows()) + ")");
  if (x.rows() < 2) throw ValidationError("CCA needs at least 2 samples");
  if (x.cols() < 1 || y.cols() < 1) throw ValidationError("CCA views need at least one column");
  if (!(options.variance_keep > 0.0 && options.variance_keep <= 1.0))
    throw ValidationError("variance_keep must lie in (0, 1]");
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("CCA input contains non-finite values");

  const ReducedView rx = reduce(center(x, options.standardize), options, "x");
  const ReducedView ry = reduce(center(y, options.standardize), options, "y");

  const Eigen::MatrixXd cross = rx.basis.transpose() * ry.basis;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeThinU);

  CcaResult result;
  result.rank_x = rx.rank;
  result.rank_y = ry.rank;
  result.k = std::min(rx.rank, ry.rank);
  result.rhos = svd.singularValues().head(result.k).cwiseMax(0.0).cwiseMin(1.0);
  result.x_variates = rx.basis * svd.matrixU().leftCols(result.k);
  for (Eigen::Index i = 0; i < result.k; ++i) {
    const double n = result.x_variates.col(i).norm();
    if (n > 0.0) result.x_variates.col(i) /= n;
  }
  return result;
}

double pwcca_score(CcaResult& result, const Matrix& x, const CcaOptions& options) {
  if (result.x_variates.rows() != x.rows() || result.x_variates.cols() != result.k)
    throw ValidationError("canonical variates do not match the x view");
  const Matrix xc = center(x, options.standardize);
  // (k x N) * (N x Dx): entry (i, j) is the projection of column j onto variate i.
  const Eigen::MatrixXd proj = result.x_variates.transpose() * xc;
  Vector alpha = proj.cwiseAbs().rowwise().sum();
  const double total = alpha.sum();
  result.uniform_weight_fallback = !(total > 0.0);
  if (result.uniform_weight_fallback) {
    alpha = Vector::Constant(result.k, 1.0 / static_cast<double>(std::max<Eigen::Index>(result.k, 1)));
  } else {
    alpha /= total;
  }
  result.weights = alpha;
  result.pwcca = std::clamp(alpha.dot(result.rhos), 0.0, 1.0);
  return result.pwcca;
}

CcaResult pwcca(const Matrix& x, const Matrix& y, const CcaOptions& options) {
  CcaResult r = canonical_correlations(x, y, options);
  pwcca_score(r, x, options);
  return r;
}

Matrix reference_matrix(const Reference& reference, const std::vector<std::string>& labels,
                        const std::vector<std::size_t>& rows) {
  if (const auto* pooled = std::get_if<spanpool::PooledSet>(&reference)) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), pooled->vectors.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = pooled->vectors.row(static_cast<Eigen::Index>(rows[i]));
    return out;
  }
  if (const auto* table = std::get_if<featio::EmbeddingTable>(&reference)) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table->dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& v = table->entries.at(labels.at(rows[i]));
      out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    return out;
  }
  std::map<std::string, Eigen::Index> column;
  std::vector<Eigen::Index> col_of(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto [it, inserted] = column.emplace(labels.at(rows[i]), static_cast<Eigen::Index>(column.size()));
    col_of[i] = it->second;
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(column.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i), col_of[i]) = 1.0;
  return out;
}

CurveResult cca_curve(const std::vector<spanpool::PooledSet>& layers, const Reference& reference,
                      const CurveOptions& options) {
  if (layers.empty()) throw ValidationError("no layers to score");
  const auto& labels = layers.front().labels;
  for (const auto& l : layers) {
    if (l.labels != labels)
      throw ValidationError("layer " + l.layer_id + " does not share the item list of " +
                            layers.front().layer_id);
  }

  CurveResult out;
  std::vector<std::size_t> eligible;
  if (const auto* table = std::get_if<featio::EmbeddingTable>(&reference)) {
    std::size_t missing = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (table->contains(labels[i])) {
        eligible.push_back(i);
      } else {
        ++missing;
      }
    }
    if (missing) {
      out.log.push_back("dropped " + std::to_string(missing) +
                        " item(s) whose label has no embedding");
    }
  } else {
    if (const auto* pooled = std::get_if<spanpool::PooledSet>(&reference)) {
      if (pooled->labels != labels)
        throw ValidationError("reference " + pooled->layer_id + " does not share the layers' item list");
    }
    eligible.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) eligible[i] = i;
  }
  if (eligible.empty()) throw ValidationError("no items shared between layers and reference");

  const std::size_t n = options.n_samples == 0 ? eligible.size() : options.n_samples;
  const auto picks = spanpool::sample_indices(eligible.size(), n, options.seed);
  std::vector<std::size_t> rows(picks.size());
  for (std::size_t i = 0; i < picks.size(); ++i) rows[i] = eligible[picks[i]];

  const Matrix y = reference_matrix(reference, labels, rows);
  if (std::holds_alternative<OneHotLabels>(reference)) {
    out.log.push_back("one-hot reference: " + std::to_string(y.cols()) + " distinct labels in " +
                      std::to_string(rows.size()) + " samples");
  }

  out.curve.resize(layers.size());
  parallel_for(layers.size(), [&](std::size_t l) {
    Matrix x(static_cast<Eigen::Index>(rows.size()), layers[l].vectors.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      x.row(static_cast<Eigen::Index>(i)) = layers[l].vectors.row(static_cast<Eigen::Index>(rows[i]));
    const CcaResult r = pwcca(x, y, options.cca);
    out.curve[l] = {layers[l].layer_id, r.pwcca};
  });
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::ostringstream s;
    s << layers[l].layer_id << ": pwcca=" << out.curve[l].value;
    out.log.push_back(s.str());
  }
  return out;
}

}  // namespace probekit::cca
