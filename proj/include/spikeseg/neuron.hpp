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

#include <utility>

#include "spikeseg/tensor.hpp"

namespace spikeseg {

/// Constants of one spiking layer.
///
/// The effective firing threshold is `scale * u_th`; `scale` is 1 for plain
/// layers and 2D for the Hamming attention output, which absorbs the
/// attention's 1/(2D) normalisation without any multiplication.
struct NeuronParams {
  double beta = 0.5;
  double u_th = 1.0;
  double scale = 1.0;
  int z_levels = 2;
  double surrogate_width = 2.0;

  double threshold() const { return scale * u_th; }
  void validate() const;
};

/// Post-reset membrane potential carried between steps.
struct NeuronState {
  PotentialTensor u;

  static NeuronState zeros(const Dims& dims) { return {PotentialTensor(dims)}; }
};

/// 1 where h >= threshold, else 0. The boundary fires.
SpikeTensor heaviside(const PotentialTensor& h, double threshold);

/// One leaky integrate-and-fire step with soft reset:
///   H = beta*U + x;  S = [H >= th];  U' = H - th*S   (th = p.threshold()).
std::pair<SpikeTensor, NeuronState> lif_step(const NeuronState& state, const PotentialTensor& x,
                                             const NeuronParams& p);

/// Folds lif_step over the leading (time) axis from a zero state.
SpikeTensor temporal_spike(const PotentialTensor& u_seq, const NeuronParams& p);

/// Integer integrate-and-fire step:
///   S = clamp(floor(H/th), 0, Z-1);  U' = H - th*S.
std::pair<SpikeTensor, NeuronState> intif_step(const NeuronState& state, const PotentialTensor& x,
                                               const NeuronParams& p);

SpikeTensor temporal_intif(const PotentialTensor& u_seq, const NeuronParams& p);

/// Expands integer spikes into z binary sub-steps (unary prefix code):
/// value v lights the first v sub-steps. Output dims are [z, ...input dims].
SpikeTensor unfold_intif(const SpikeTensor& s, int z);

/// Per-site sum over the leading sub-step axis; inverse of unfold_intif.
SpikeTensor fold_substeps(const SpikeTensor& unfolded, int z);

/// Smooth step (1/pi)*atan(pi*width*x/2) + 1/2 whose derivative is the ATan surrogate.
double atan_primitive(double x, double width);

/// d/dx atan_primitive = width / (2 * (1 + (pi*width*x/2)^2)).
double atan_surrogate(double x, double width);

}  // namespace spikeseg
