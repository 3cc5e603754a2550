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

#include "spikeseg/simd/kernels.hpp"

namespace spikeseg::simd {
namespace {

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void vmadd(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

void rows_axpy(const double* a, const double* m, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (a[r] == 0.0) continue;
    axpy(a[r], m + r * cols, y, cols);
  }
}

void rows_accumulate(const double* a, const double* m, double* y, std::size_t rows,
                     std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (int k = static_cast<int>(a[r]); k > 0; --k) add(m + r * cols, y, cols);
  }
}

void rows_dot(const double* m, const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot(m + r * cols, x, cols);
}

void outer_acc(const double* a, const double* x, double* m, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (a[r] == 0.0) continue;
    axpy(a[r], x, m + r * cols, cols);
  }
}

void add_i32(const std::int32_t* x, std::int32_t* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void sub_i32(const std::int32_t* x, std::int32_t* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] -= x[i];
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::kScalar, "scalar", axpy,     add,       dot,     vmadd,
                                 rows_axpy,    rows_accumulate,   rows_dot, outer_acc, add_i32,
                                 sub_i32};
  return table;
}

}  // namespace spikeseg::simd
