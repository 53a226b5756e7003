// include/probekit/cluster.hpp

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
#include <functional>
#include <vector>

#include "probekit/common.hpp"

namespace probekit::cluster {

struct Clustering {
  Matrix centroids;                  // k x D
  std::vector<std::size_t> assignments;  // N, each < k
  double inertia = 0.0;              // sum of squared distances to assigned centroid
  int iterations_run = 0;
  // Inertia after each Lloyd update (index 0 = after initialization).
  std::vector<double> inertia_trace;
};

struct KMeansOptions {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  int max_iters = 100;
};

// k-means++ seeding followed by Lloyd iterations until the assignment stops
// changing (or max_iters). Empty clusters are reseeded at the point farthest
// from its own centroid. Centroid sums are accumulated sequentially in point
// order, so a fixed seed reproduces the result bit for bit.
Clustering kmeans(const Matrix& points, const KMeansOptions& options);

// Best of `restarts` runs (seeds derived from options.seed), lowest inertia wins,
// earliest run on ties.
Clustering kmeans_restarts(const Matrix& points, const KMeansOptions& options, int restarts);

// Nearest centroid by squared Euclidean distance, lowest index on ties.
std::vector<std::size_t> assign(const Matrix& points, const Clustering& clustering);

// Sum of squared distances of each point to its assigned centroid.
double inertia(const Matrix& points, const Matrix& centroids,
               const std::vector<std::size_t>& assignments);

}  // namespace probekit::cluster
