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

#include <vector>

#include "spikeseg/autodiff.hpp"

namespace spikeseg {

/// Probabilities are clamped to at least this before the log.
inline constexpr double kLogEps = 1e-12;

/// [T,H,W] class indices -> [T,H,W,K] one-hot. Throws on labels outside [0,K).
PotentialTensor one_hot(const std::vector<int>& labels, const Dims& thw, int classes);

/// Mean over all T*H*W pixels of -sum_k y*log(p). probs rows must sum to 1.
double ce_loss(const PotentialTensor& y_onehot, const PotentialTensor& probs);
/// Mean over pixels of -sum_k y*(1-p)^gamma*log(p).
double focal_loss(const PotentialTensor& y_onehot, const PotentialTensor& probs, double gamma);
/// Squared RGB error summed over masked pixels (keep == 0), divided by their count.
double recon_loss(const PotentialTensor& clip, const PotentialTensor& recon, const PotentialTensor& keep);

namespace ops {

Var ce_loss(Var probs, const PotentialTensor& y_onehot);
Var focal_loss(Var probs, const PotentialTensor& y_onehot, double gamma);
/// keep is the pixel-level map [T,H,W,1]; only pixels with keep == 0 count.
Var recon_loss(Var recon, const PotentialTensor& clip, const PotentialTensor& keep);

}  // namespace ops

}  // namespace spikeseg
