// include/probekit/kernels.hpp

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

#include <cstddef>
#include <span>
#include <string_view>

namespace probekit::kernels {

// Inner loops shared by clustering, pooling and similarity code. Each kernel
// has a portable scalar reference and an AVX2/FMA variant; the variant is
// picked once at startup from CPUID (override with PROBEKIT_SIMD=scalar).
//
// Elementwise kernels (axpy, add_rows) give bitwise-identical results across
// variants. Reductions (dot, squared_distance) reassociate the sum in the
// vector variant and agree with the scalar reference to rounding.

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out += sum of `rows` consecutive rows of width n starting at src (row stride n)
  void (*add_rows)(const double* src, std::size_t rows, std::size_t n, double* out);
  // Index of the nearest of k centroids (row-major k x d); ties -> lowest index.
  std::size_t (*nearest)(const double* point, const double* centroids, std::size_t k,
                         std::size_t d, double* best_distance);
};

const KernelTable& scalar_table();
// Returns nullptr when the build has no AVX2 variant.
const KernelTable* avx2_table();
bool cpu_has_avx2();

const KernelTable& active();
// For tests and benchmarking; not thread-safe with concurrent kernel calls.
void force(Isa isa);
std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace probekit::kernels
