// src/kernels/kernels_scalar.cpp

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

#include "probekit/kernels.hpp"

namespace probekit::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_rows_scalar(const double* src, std::size_t rows, std::size_t n, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = src + r * n;
    for (std::size_t i = 0; i < n; ++i) out[i] += row[i];
  }
}

std::size_t nearest_scalar(const double* point, const double* centroids, std::size_t k,
                           std::size_t d, double* best_distance) {
  std::size_t best = 0;
  double best_d = squared_distance_scalar(point, centroids, d);
  for (std::size_t c = 1; c < k; ++c) {
    const double dist = squared_distance_scalar(point, centroids + c * d, d);
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  if (best_distance) *best_distance = best_d;
  return best;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar,     dot_scalar,      squared_distance_scalar,
                                 axpy_scalar,     add_rows_scalar, nearest_scalar};
  return table;
}

}  // namespace probekit::kernels
