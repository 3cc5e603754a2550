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

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "spikeseg/simd/kernels.hpp"

namespace spikeseg::simd {

#if defined(SPIKESEG_WITH_AVX2)
const KernelTable& avx2_kernel_table();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(SPIKESEG_WITH_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  const char* env = std::getenv("SPIKESEG_ISA");
  if (env && std::string(env) == "scalar") return &scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{initial_table()};
  return slot;
}

}  // namespace

const KernelTable* avx2_kernels() {
#if defined(SPIKESEG_WITH_AVX2)
  static const bool ok = cpu_has_avx2();
  return ok ? &avx2_kernel_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& kernels() { return *active_slot().load(std::memory_order_relaxed); }

Isa active_isa() { return kernels().isa; }

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
      return avx2_kernels() != nullptr;
  }
  return false;
}

void force_isa(Isa isa) {
  if (!isa_available(isa))
    throw std::runtime_error("ISA " + std::string(isa_name(isa)) + " not available");
  active_slot().store(isa == Isa::kAvx2 ? avx2_kernels() : &scalar_kernels());
}

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

ScopedIsa::ScopedIsa(Isa isa) : previous_(active_isa()) { force_isa(isa); }
ScopedIsa::~ScopedIsa() { force_isa(previous_); }

}  // namespace spikeseg::simd
