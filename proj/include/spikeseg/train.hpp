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
#include <functional>
#include <stdexcept>
#include <string>

#include "spikeseg/autodiff.hpp"

namespace spikeseg {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// base_lr * (1 + cos(pi*step/total)) / 2, for 0 <= step <= total.
double cosine_lr(int step, int total, double base_lr);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled decay, applied to rank >= 2 tensors only.
  double weight_decay = 0.0;
};

/// Adaptive moments with bias correction and decoupled weight decay.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}
  /// Updates every trainable parameter from its grad; throws NonFiniteGradient
  /// naming the parameter if any gradient entry is NaN or infinite.
  void step(const ParamList& params, double lr);
  int steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  int t_ = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

/// Five-point central differences of a scalar loss against tape gradients.
/// `loss_fn` records the forward on the tape it is given; the check runs it in
/// relaxed spiking mode. Up to `per_param` coordinates are sampled per tensor.
/// Relative error is |a-n| / max(|a|, |n|, kGradFloor); below the floor the
/// difference quotient is dominated by rounding (1e-12 to 1e-11 at eps = 1e-4).
inline constexpr double kGradFloor = 1e-5;
GradCheckResult finite_diff_check(const std::function<Var(Tape&)>& loss_fn, const ParamList& params,
                                  double eps = 1e-4, std::size_t per_param = 6, std::uint64_t seed = 0);

}  // namespace spikeseg
