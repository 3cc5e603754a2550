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

// Compiled with -mavx2 -mfma. Only reached through the dispatch table after
// a CPU feature check.

#include <immintrin.h>

#include "spikeseg/simd/kernels.hpp"

namespace spikeseg::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    __m256d y1 = _mm256_loadu_pd(y + i + 4);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), y0);
    y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), y1);
    _mm256_storeu_pd(y + i, y0);
    _mm256_storeu_pd(y + i + 4, y1);
  }
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void add(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] += x[i];
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void vmadd(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a[i] * b[i];
}

// Column tiles of 16 keep the destination in four registers across rows.
void rows_axpy(const double* a, const double* m, double* y, std::size_t rows, std::size_t cols) {
  std::size_t c = 0;
  for (; c + 16 <= cols; c += 16) {
    __m256d y0 = _mm256_loadu_pd(y + c);
    __m256d y1 = _mm256_loadu_pd(y + c + 4);
    __m256d y2 = _mm256_loadu_pd(y + c + 8);
    __m256d y3 = _mm256_loadu_pd(y + c + 12);
    for (std::size_t r = 0; r < rows; ++r) {
      if (a[r] == 0.0) continue;
      const __m256d va = _mm256_set1_pd(a[r]);
      const double* row = m + r * cols + c;
      y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(row), y0);
      y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(row + 4), y1);
      y2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(row + 8), y2);
      y3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(row + 12), y3);
    }
    _mm256_storeu_pd(y + c, y0);
    _mm256_storeu_pd(y + c + 4, y1);
    _mm256_storeu_pd(y + c + 8, y2);
    _mm256_storeu_pd(y + c + 12, y3);
  }
  for (; c + 4 <= cols; c += 4) {
    __m256d y0 = _mm256_loadu_pd(y + c);
    for (std::size_t r = 0; r < rows; ++r) {
      if (a[r] == 0.0) continue;
      y0 = _mm256_fmadd_pd(_mm256_set1_pd(a[r]), _mm256_loadu_pd(m + r * cols + c), y0);
    }
    _mm256_storeu_pd(y + c, y0);
  }
  for (; c < cols; ++c) {
    double s = y[c];
    for (std::size_t r = 0; r < rows; ++r)
      if (a[r] != 0.0) s += a[r] * m[r * cols + c];
    y[c] = s;
  }
}

void rows_accumulate(const double* a, const double* m, double* y, std::size_t rows,
                     std::size_t cols) {
  std::size_t c = 0;
  for (; c + 16 <= cols; c += 16) {
    __m256d y0 = _mm256_loadu_pd(y + c);
    __m256d y1 = _mm256_loadu_pd(y + c + 4);
    __m256d y2 = _mm256_loadu_pd(y + c + 8);
    __m256d y3 = _mm256_loadu_pd(y + c + 12);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = m + r * cols + c;
      for (int k = static_cast<int>(a[r]); k > 0; --k) {
        y0 = _mm256_add_pd(y0, _mm256_loadu_pd(row));
        y1 = _mm256_add_pd(y1, _mm256_loadu_pd(row + 4));
        y2 = _mm256_add_pd(y2, _mm256_loadu_pd(row + 8));
        y3 = _mm256_add_pd(y3, _mm256_loadu_pd(row + 12));
      }
    }
    _mm256_storeu_pd(y + c, y0);
    _mm256_storeu_pd(y + c + 4, y1);
    _mm256_storeu_pd(y + c + 8, y2);
    _mm256_storeu_pd(y + c + 12, y3);
  }
  for (; c + 4 <= cols; c += 4) {
    __m256d y0 = _mm256_loadu_pd(y + c);
    for (std::size_t r = 0; r < rows; ++r)
      for (int k = static_cast<int>(a[r]); k > 0; --k)
        y0 = _mm256_add_pd(y0, _mm256_loadu_pd(m + r * cols + c));
    _mm256_storeu_pd(y + c, y0);
  }
  for (; c < cols; ++c) {
    double s = y[c];
    for (std::size_t r = 0; r < rows; ++r)
      for (int k = static_cast<int>(a[r]); k > 0; --k) s += m[r * cols + c];
    y[c] = s;
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
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256i vy = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(y + i));
    const __m256i vx = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(x + i));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(y + i), _mm256_add_epi32(vy, vx));
  }
  for (; i < n; ++i) y[i] += x[i];
}

void sub_i32(const std::int32_t* x, std::int32_t* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256i vy = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(y + i));
    const __m256i vx = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(x + i));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(y + i), _mm256_sub_epi32(vy, vx));
  }
  for (; i < n; ++i) y[i] -= x[i];
}

}  // namespace

const KernelTable& avx2_kernel_table() {
  static const KernelTable table{Isa::kAvx2, "avx2",   axpy,     add,       dot,     vmadd,
                                 rows_axpy,  rows_accumulate, rows_dot, outer_acc, add_i32,
                                 sub_i32};
  return table;
}

}  // namespace spikeseg::simd
