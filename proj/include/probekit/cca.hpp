// include/probekit/cca.hpp

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
#include <variant>
#include <vector>

#include "probekit/common.hpp"
#include "probekit/curve.hpp"
#include "probekit/featio.hpp"
#include "probekit/spanpool.hpp"

namespace probekit::cca {

struct CcaOptions {
  // Fraction of squared singular-value mass each view keeps after truncation.
  double variance_keep = 0.99;
  // Added to singular values before whitening.
  double ridge = 1e-10;
  // Rescale columns to unit variance after centering (off: center only).
  bool standardize = false;
};

struct CcaResult {
  Vector rhos;         // descending, clipped to [0, 1]
  Vector weights;      // projection weights, filled by pwcca_score
  double pwcca = 0.0;  // filled by pwcca_score
  Eigen::Index k = 0;  // number of canonical pairs
  Eigen::Index rank_x = 0;
  Eigen::Index rank_y = 0;
  // Canonical variates of the x view (N x k), unit norm columns.
  Matrix x_variates;
  bool uniform_weight_fallback = false;
};

// Centers both views, truncates each by SVD to the smallest rank holding
// variance_keep of the squared singular mass, and takes the singular values of
// the cross product of the two whitened bases.
CcaResult canonical_correlations(const Matrix& x, const Matrix& y, const CcaOptions& options = {});

// Weights each canonical pair by how much of x's centered columns project onto
// its variate; returns the weighted mean correlation and stores it in `result`.
double pwcca_score(CcaResult& result, const Matrix& x, const CcaOptions& options = {});

// canonical_correlations followed by pwcca_score.
CcaResult pwcca(const Matrix& x, const Matrix& y, const CcaOptions& options = {});

// What a layer is compared against: a pooled set over the same items (e.g.
// pooled filterbanks or another model), an embedding table looked up by label,
// or a one-hot encoding of the labels themselves.
struct OneHotLabels {};
using Reference = std::variant<spanpool::PooledSet, featio::EmbeddingTable, OneHotLabels>;

struct CurveOptions {
  CcaOptions cca;
  std::size_t n_samples = 0;  // 0 = use every item
  std::uint64_t seed = 0;
};

struct CurveResult {
  Curve curve;
  std::vector<std::string> log;
};

// Matrix of reference rows for the given labels (one-hot columns follow first
// appearance order, so labels absent from the sample get no column).
Matrix reference_matrix(const Reference& reference, const std::vector<std::string>& labels,
                        const std::vector<std::size_t>& rows);

CurveResult cca_curve(const std::vector<spanpool::PooledSet>& layers, const Reference& reference,
                      const CurveOptions& options);

}  // namespace probekit::cca
