// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Inner-loop kernels behind every synaptic accumulation in the engine.
//
// The scalar table is the reference. Vector tables must agree with it
// exactly on integer kernels and to rounding on floating kernels (the
// vector versions use FMA and a different summation order). The active
// table is chosen once at startup from CPU features; SPIKESEG_ISA=scalar
// in the environment forces the reference path.

namespace spikeseg::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  const char* name;

  // y[0..n) += a * x[0..n)
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y[0..n) += x[0..n)
  void (*add)(const double* x, double* y, std::size_t n);
  // returns sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[0..n) += a[0..n) * b[0..n)
  void (*vmadd)(const double* a, const double* b, double* y, std::size_t n);

  // y[0..cols) += sum_r a[r] * m[r*cols .. r*cols+cols), rows with a[r]==0 skipped
  void (*rows_axpy)(const double* a, const double* m, double* y, std::size_t rows, std::size_t cols);
  // Spike-driven form of rows_axpy: a[r] is a nonnegative integer count and
  // row r is added a[r] times. Additions only.
  void (*rows_accumulate)(const double* a, const double* m, double* y, std::size_t rows,
                          std::size_t cols);
  // y[r] += dot(m[r*cols..], x) for r in [0, rows)
  void (*rows_dot)(const double* m, const double* x, double* y, std::size_t rows, std::size_t cols);
  // m[r*cols..] += a[r] * x for r in [0, rows), rows with a[r]==0 skipped
  void (*outer_acc)(const double* a, const double* x, double* m, std::size_t rows, std::size_t cols);

  // Integer accumulation for the Hamming attention charge.
  // y[0..n) += x[0..n)
  void (*add_i32)(const std::int32_t* x, std::int32_t* y, std::size_t n);
  // y[0..n) -= x[0..n)
  void (*sub_i32)(const std::int32_t* x, std::int32_t* y, std::size_t n);
};

const KernelTable& scalar_kernels();
/// Null when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();

/// Currently selected table.
const KernelTable& kernels();
Isa active_isa();
bool isa_available(Isa isa);
/// Select a table explicitly (tests and benchmarks). Throws if unavailable.
void force_isa(Isa isa);
std::string_view isa_name(Isa isa);

/// RAII override of the active ISA, restoring the previous one on exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa);
  ~ScopedIsa();
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

}  // namespace spikeseg::simd
