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

#include <string>
#include <vector>

#include "spikeseg/autodiff.hpp"

// Differentiable primitives recorded on a Tape. Feature maps are
// [T,H,W,C] with frames first; token matrices are [M,D].

namespace spikeseg::ops {

struct ConvArgs {
  int stride = 1;
  /// -1 means same padding (kernel/2).
  int pad = -1;
  bool depthwise = false;
  /// Counter key. Empty disables counting for this call.
  std::string name;
  /// Real-valued input embedding (counted as MAC, kept off the spiking path).
  bool embedding = false;
  /// Pretraining-only dense layer.
  bool auxiliary = false;
};

/// x [T,H,W,Cin]; w [KH,KW,Cin,Cout] or [KH,KW,1,C] when depthwise; bias [Cout] or invalid Var.
/// A spike-valued x is consumed with additions only and counted as AC.
Var conv2d(Var x, Var w, Var bias, const ConvArgs& args);

/// x [M,Din] @ w [Din,Dout] + b.
Var linear(Var x, Var w, Var bias, const ConvArgs& args = {});

struct SpikeArgs {
  double u_th = 1.0;
  /// Threshold multiplier; the surrogate is evaluated on (H - j*th)/scale.
  double scale = 1.0;
  /// Largest emitted value: 1 for LIF, Z-1 for IntIF.
  int levels = 1;
  double width = 2.0;
  /// Leak used when no beta parameter is given.
  double fixed_beta = 0.5;
  /// Keep map applied to the input charge, broadcast over trailing elements.
  const PotentialTensor* mask = nullptr;
  std::string name;
};

/// Temporal spiking over the leading axis with soft reset:
///   H_t = beta*U_{t-1} + m*x_t;  S_t = clamp(floor(H_t/th), 0, levels);  U_t = H_t - th*S_t.
/// beta_logit (scalar, optional) gives beta = sigmoid(beta_logit).
/// In relaxed mode S_t is replaced by the sum of smooth ATan steps.
Var spike(Var x, Var beta_logit, const SpikeArgs& args);

Var add(Var a, Var b, const std::string& count_name = {});
Var sub(Var a, Var b);
Var scale(Var a, double s);
/// x * m with m broadcast over trailing elements (m.numel() divides x.numel()).
Var mask_mul(Var x, const PotentialTensor& m);
Var reshape(Var x, Dims dims);
/// Rows [begin, end) of the leading axis.
Var slice0(Var x, int begin, int end);
Var concat0(const std::vector<Var>& xs);
/// [T,H,W,C] -> [T,f*H,f*W,C] by repetition.
Var upsample_nearest(Var x, int factor);

/// Normalises over the last axis, then gamma * xhat + beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-6);
Var gelu(Var x);
Var softmax_last(Var x);
/// qkv [M,3D] -> [M,D]; softmax(q k^T / sqrt(D/heads)) v per head.
Var mh_attention(Var qkv, int heads);

Var sum(Var x);
Var mean(Var x);
/// mean((a-b)^2) over all elements.
Var mse(Var a, Var b);

}  // namespace spikeseg::ops
