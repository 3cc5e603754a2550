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

#include <random>
#include <string>

#include "spikeseg/autodiff.hpp"
#include "spikeseg/ops.hpp"

namespace spikeseg {

using Rng = std::mt19937_64;

/// Normal(0, std) resampled until inside +-2 std.
PotentialTensor trunc_normal(const Dims& dims, double std, Rng& rng);

enum class ConvKind { kPointwise, kDepthwise, kStandard, kReparam };

struct ConvSpec {
  int kh = 3;
  int kw = 3;
  int stride = 1;
  int in_ch = 1;
  int out_ch = 1;
  ConvKind kind = ConvKind::kStandard;

  /// stride in {1,2}; depthwise needs in_ch == out_ch; pointwise is 1x1.
  void validate() const;
};

/// Initialisation constants shared by a model build.
struct InitSpec {
  /// Spiking convs: std = gain / sqrt(fan_in).
  double gain = 2.0;
};

/// Constants of the spiking layers in one network.
struct SpikeConsts {
  double u_th = 1.0;
  double width = 2.0;
};

/// One spiking layer with its own learnable leak (beta = sigmoid(logit), starts at 0.5).
struct Neuron {
  Param beta_logit;
  int levels = 1;
  SpikeConsts consts;

  Neuron() = default;
  Neuron(const std::string& name, int levels, SpikeConsts c);
  Var fire(Tape& tp, Var x, const PotentialTensor* mask, const std::string& name, double scale = 1.0);
  double beta() const;
  void collect(ParamList& out) { out.push_back(&beta_logit); }
};

/// Plain convolution with optional bias.
struct Conv {
  ConvSpec spec;
  Param w;
  Param b;
  bool has_bias = true;

  Conv() = default;
  Conv(const std::string& name, const ConvSpec& s, bool bias, double std, Rng& rng);
  Var forward(Tape& tp, Var x, const std::string& name, bool embedding = false);
  void collect(ParamList& out);
};

/// Pointwise mixer, then a reparameterisable depthwise stage
/// (dw3x3 + dw1x1 + identity) and a bias. Folds into one dense 3x3 kernel.
struct RepConv {
  int in_ch = 0;
  int out_ch = 0;
  Param pw;   // [1,1,in,out]
  Param dw3;  // [3,3,1,out]
  Param dw1;  // [1,1,1,out]
  Param b;    // [out]

  RepConv() = default;
  RepConv(const std::string& name, int in_ch, int out_ch, const InitSpec& init, Rng& rng);
  /// Multi-branch form, or the folded kernel when the tape asks for it.
  Var forward(Tape& tp, Var x, const std::string& name);
  Var forward_branches(Tape& tp, Var x, const std::string& name);
  Var forward_folded(Tape& tp, Var x, const std::string& name);
  /// K[kh][kw][ci][co] = pw[ci][co] * (dw3[kh][kw][co] + [centre] * (dw1[co] + 1)).
  PotentialTensor folded_kernel() const;
  void collect(ParamList& out);
};

}  // namespace spikeseg
