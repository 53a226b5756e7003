// src/cluster.cpp

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

#include "probekit/cluster.hpp"

#include <limits>
#include <string>

#include "probekit/kernels.hpp"

namespace probekit::cluster {

namespace {

void check_inputs(const Matrix& points, std::size_t k) {
  if (k == 0) throw ValidationError("k must be positive");
  if (points.rows() < 1 || points.cols() < 1) throw ValidationError("no points to cluster");
  if (k > static_cast<std::size_t>(points.rows()))
    throw ValidationError("k = " + std::to_string(k) + " exceeds the number of points (" +
                          std::to_string(points.rows()) + ")");
  if (!points.allFinite()) throw ValidationError("points contain non-finite values");
}

// D^2 seeding. When every remaining distance is zero (duplicate points), the
// lowest-index point is taken.
Matrix plus_plus_init(const Matrix& points, std::size_t k, Rng& rng) {
  const auto& kern = kernels::active();
  const auto N = static_cast<std::size_t>(points.rows());
  const auto D = static_cast<std::size_t>(points.cols());
  Matrix centroids(static_cast<Eigen::Index>(k), points.cols());

  std::size_t first = static_cast<std::size_t>(rng.below(N));
  centroids.row(0) = points.row(static_cast<Eigen::Index>(first));
  std::vector<double> d2(N);
  for (std::size_t i = 0; i < N; ++i)
    d2[i] = kern.squared_distance(points.row(static_cast<Eigen::Index>(i)).data(), centroids.row(0).data(), D);

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cum = 0.0;
      pick = N;
      for (std::size_t i = 0; i < N; ++i) {
        cum += d2[i];
        if (d2[i] > 0.0 && cum > target) {
          pick = i;
          break;
        }
      }
      if (pick == N) {
        // Rounding left target beyond the last cumulative sum.
        for (std::size_t i = N; i-- > 0;) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      rng.uniform();  // keep the stream position independent of the data
    }
    centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < N; ++i) {
      const double d = kern.squared_distance(points.row(static_cast<Eigen::Index>(i)).data(),
                                             centroids.row(static_cast<Eigen::Index>(c)).data(), D);
      if (d < d2[i]) d2[i] = d;
    }
  }
  return centroids;
}

}  // namespace

double inertia(const Matrix& points, const Matrix& centroids,
               const std::vector<std::size_t>& assignments) {
  // Same distance kernel as the assignment step.
  const auto& kern = kernels::active();
  const auto D = static_cast<std::size_t>(points.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto a = static_cast<Eigen::Index>(assignments[static_cast<std::size_t>(i)]);
    total += kern.squared_distance(points.row(i).data(), centroids.row(a).data(), D);
  }
  return total;
}

std::vector<std::size_t> assign(const Matrix& points, const Clustering& clustering) {
  if (points.cols() != clustering.centroids.cols())
    throw ValidationError("point dimension " + std::to_string(points.cols()) +
                          " does not match centroid dimension " +
                          std::to_string(clustering.centroids.cols()));
  const auto& kern = kernels::active();
  const auto k = static_cast<std::size_t>(clustering.centroids.rows());
  const auto D = static_cast<std::size_t>(points.cols());
  std::vector<std::size_t> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    out[static_cast<std::size_t>(i)] = kern.nearest(points.row(i).data(), clustering.centroids.data(), k, D, nullptr);
  return out;
}

Clustering kmeans(const Matrix& points, const KMeansOptions& options) {
  check_inputs(points, options.k);
  if (options.max_iters < 1) throw ValidationError("max_iters must be positive");
  const auto& kern = kernels::active();
  const auto N = static_cast<std::size_t>(points.rows());
  const auto D = static_cast<std::size_t>(points.cols());
  const std::size_t k = options.k;

  Rng rng(options.seed);
  Clustering c;
  c.centroids = plus_plus_init(points, k, rng);
  c.assignments.assign(N, 0);
  std::vector<double> dist(N);
  for (std::size_t i = 0; i < N; ++i)
    c.assignments[i] = kern.nearest(points.row(static_cast<Eigen::Index>(i)).data(), c.centroids.data(), k, D, &dist[i]);
  c.inertia_trace.push_back(inertia(points, c.centroids, c.assignments));

  std::vector<std::size_t> counts(k);
  Matrix sums(static_cast<Eigen::Index>(k), points.cols());
  for (int iter = 0; iter < options.max_iters; ++iter) {
    // Update: sequential accumulation in point order.
    sums.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < N; ++i) {
      kern.add_rows(points.row(static_cast<Eigen::Index>(i)).data(), 1, D,
                    sums.row(static_cast<Eigen::Index>(c.assignments[i])).data());
      ++counts[c.assignments[i]];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] > 0) c.centroids.row(static_cast<Eigen::Index>(j)) = sums.row(static_cast<Eigen::Index>(j)) / static_cast<double>(counts[j]);
    }
    // Empty clusters take the point currently farthest from its centroid.
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < N; ++i) {
        const std::size_t a = c.assignments[i];
        if (counts[a] <= 1) continue;  // do not empty another cluster
        const double d = kern.squared_distance(points.row(static_cast<Eigen::Index>(i)).data(),
                                               c.centroids.row(static_cast<Eigen::Index>(a)).data(), D);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far_d <= 0.0) continue;  // all points sit on their centroids
      --counts[c.assignments[far]];
      c.assignments[far] = j;
      counts[j] = 1;
      c.centroids.row(static_cast<Eigen::Index>(j)) = points.row(static_cast<Eigen::Index>(far));
    }
    c.iterations_run = iter + 1;

    // Assignment.
    bool changed = false;
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t a = kern.nearest(points.row(static_cast<Eigen::Index>(i)).data(), c.centroids.data(), k, D, &dist[i]);
      if (a != c.assignments[i]) {
        c.assignments[i] = a;
        changed = true;
      }
    }
    c.inertia_trace.push_back(inertia(points, c.centroids, c.assignments));
    if (!changed) break;
  }
  c.inertia = inertia(points, c.centroids, c.assignments);
  return c;
}

Clustering kmeans_restarts(const Matrix& points, const KMeansOptions& options, int restarts) {
  if (restarts < 1) throw ValidationError("restarts must be positive");
  Clustering best;
  for (int r = 0; r < restarts; ++r) {
    KMeansOptions o = options;
    o.seed = mix_seed(options.seed, static_cast<std::uint64_t>(r), 0x6b6d);
    Clustering c = kmeans(points, o);
    if (r == 0 || c.inertia < best.inertia) best = std::move(c);
  }
  return best;
}

}  // namespace probekit::cluster
