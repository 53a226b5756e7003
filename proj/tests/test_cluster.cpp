// tests/test_cluster.cpp

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
#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "probekit/cluster.hpp"

using namespace probekit;
using namespace probekit::cluster;

namespace {

double naive_inertia(const Matrix& p, const Clustering& c) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    s += (p.row(i) - c.centroids.row(static_cast<Eigen::Index>(c.assignments[static_cast<std::size_t>(i)]))).squaredNorm();
  return s;
}

std::size_t naive_nearest(const Eigen::RowVectorXd& x, const Matrix& centroids) {
  std::size_t best = 0;
  double bd = INFINITY;
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    const double d = (x - centroids.row(j)).squaredNorm();
    if (d < bd) {
      bd = d;
      best = static_cast<std::size_t>(j);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("k equal to N puts every point on its own centroid") {
  const Matrix p = oracle::random_normal(1, 12, 3);
  const auto c = kmeans(p, {12, 4, 100});
  CHECK(c.inertia == 0.0);
  CHECK(std::set<std::size_t>(c.assignments.begin(), c.assignments.end()).size() == 12);
}

TEST_CASE("k = 1 gives the column mean") {
  const Matrix p = oracle::random_normal(2, 40, 5);
  const auto c = kmeans(p, {1, 0, 100});
  CHECK((c.centroids.row(0) - p.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
  const double total = (p.rowwise() - p.colwise().mean()).squaredNorm();
  CHECK(c.inertia == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("two clusters of eight points reach the exhaustive optimum") {
  // Unstructured draws have several Lloyd fixpoints; single runs land on the
  // global one 12-100% of the time, so these get 50 restarts.
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Matrix p = oracle::random_normal(50 + s, 8, 2);
    const auto c = kmeans_restarts(p, {2, s, 100}, 50);
    CHECK(std::abs(c.inertia - oracle::best_two_partition(p)) < 1e-9);
  }
  // Two well separated blobs: five restarts suffice.
  for (std::uint64_t s = 0; s < 30; ++s) {
    Matrix p = oracle::random_normal(90 + s, 8, 2);
    p.topRows(4).col(0).array() += 6.0;
    const auto c = kmeans_restarts(p, {2, s, 100}, 5);
    CHECK(std::abs(c.inertia - oracle::best_two_partition(p)) < 1e-9);
  }
}

TEST_CASE("inertia never increases across Lloyd iterations") {
  Rng rng(3);
  for (int run = 0; run < 100; ++run) {
    const auto n = static_cast<Eigen::Index>(20 + rng.below(200));
    const auto k = static_cast<std::size_t>(2 + rng.below(12));
    const Matrix p = oracle::random_normal(rng.next(), n, static_cast<Eigen::Index>(1 + rng.below(6)));
    const auto c = kmeans(p, {k, rng.next(), 100});
    for (std::size_t i = 1; i < c.inertia_trace.size(); ++i) CHECK(c.inertia_trace[i] <= c.inertia_trace[i - 1]);
    CHECK(c.inertia == doctest::Approx(naive_inertia(p, c)).epsilon(1e-9));
    for (auto a : c.assignments) CHECK(a < k);
  }
}

TEST_CASE("same seed, same clustering bit for bit") {
  const Matrix p = oracle::random_normal(4, 300, 4);
  const auto a = kmeans(p, {7, 9, 100});
  const auto b = kmeans(p, {7, 9, 100});
  CHECK(a.centroids == b.centroids);
  CHECK(a.assignments == b.assignments);
  CHECK(a.inertia == b.inertia);
}

TEST_CASE("well separated groups are recovered regardless of row order") {
  Matrix p(60, 2);
  for (Eigen::Index i = 0; i < 60; ++i) {
    const double cx = static_cast<double>(i % 3) * 100.0;
    p.row(i) << cx + static_cast<double>(i % 7) * 0.1, static_cast<double>(i % 5) * 0.1;
  }
  Matrix rev = p.colwise().reverse();
  const auto a = kmeans_restarts(p, {3, 1, 100}, 3);
  const auto b = kmeans_restarts(rev, {3, 1, 100}, 3);
  for (Eigen::Index i = 0; i < 60; ++i)
    for (Eigen::Index j = 0; j < 60; ++j) {
      const bool same_a = a.assignments[static_cast<std::size_t>(i)] == a.assignments[static_cast<std::size_t>(j)];
      const bool same_b = b.assignments[static_cast<std::size_t>(59 - i)] == b.assignments[static_cast<std::size_t>(59 - j)];
      CHECK(same_a == same_b);
    }
}

TEST_CASE("duplicate points do not break seeding or reseeding") {
  const Matrix p = Matrix::Constant(10, 3, 2.5);
  const auto c = kmeans(p, {4, 0, 50});
  CHECK(c.inertia == 0.0);
  for (auto a : c.assignments) CHECK(a < 4);
}

TEST_CASE("assignment") {
  Clustering c;
  c.centroids.resize(5, 2);
  c.centroids << 0, -10, 1, 0, 5, 5, 2, 2, -1, 0;
  Matrix q(2, 2);
  q << 2, 2,  // on centroid 3
      0, 1;   // squared distance 2 to centroids 1 and 4
  const auto a = assign(q, c);
  CHECK(a[0] == 3);
  CHECK(a[1] == 1);

  const Matrix pts = oracle::random_normal(7, 500, 4);
  Clustering r;
  r.centroids = oracle::random_normal(8, 9, 4);
  const auto got = assign(pts, r);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) CHECK(got[static_cast<std::size_t>(i)] == naive_nearest(pts.row(i), r.centroids));

  CHECK_THROWS_AS(assign(Matrix::Ones(2, 3), c), ValidationError);
}

TEST_CASE("input errors") {
  const Matrix p = oracle::random_normal(1, 5, 2);
  CHECK_THROWS_AS(kmeans(p, {0, 0, 10}), ValidationError);
  CHECK_THROWS_AS(kmeans(p, {6, 0, 10}), ValidationError);
  Matrix bad = p;
  bad(2, 1) = std::nan("");
  CHECK_THROWS_AS(kmeans(bad, {2, 0, 10}), ValidationError);
}
