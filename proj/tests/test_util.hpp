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

#include <cstdint>
#include <random>

#include "spikeseg/autodiff.hpp"
#include "spikeseg/tensor.hpp"

namespace testutil {

using spikeseg::Dims;
using spikeseg::PotentialTensor;
using spikeseg::SpikeTensor;

/// Forward-only tape options.
inline spikeseg::TapeOptions no_record() {
  spikeseg::TapeOptions o;
  o.record = false;
  return o;
}

inline PotentialTensor uniform(const Dims& d, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  PotentialTensor t(d);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = u(rng);
  return t;
}

/// Values in {0..levels}, each nonzero with probability p.
inline PotentialTensor spikes(const Dims& d, double p, int levels, std::mt19937_64& rng) {
  std::bernoulli_distribution fire(p);
  std::uniform_int_distribution<int> v(1, levels);
  PotentialTensor t(d);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = fire(rng) ? v(rng) : 0;
  return t;
}

inline SpikeTensor binary(const Dims& d, double p, std::mt19937_64& rng) {
  return SpikeTensor::from_potential(spikes(d, p, 1, rng), 2);
}

inline double max_abs_diff(const PotentialTensor& a, const PotentialTensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testutil
