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

#include "spikeseg/attention.hpp"
#include "spikeseg/layers.hpp"

// Residual spiking blocks. Every block takes the residual stream U, an
// optional keep map (applied before each spiking layer and to the block
// output) and a counter name prefix.

namespace spikeseg {

/// U' = U + pw(dw7x7(SN(pw(SN(U))))), hidden width expansion*C.
struct SepConvUnit {
  int channels = 0;
  int hidden = 0;
  Neuron sn1, sn2;
  Conv pw1;
  Param dw;  // [7,7,1,hidden]
  Conv pw2;

  SepConvUnit() = default;
  SepConvUnit(const std::string& name, int channels, int expansion, SpikeConsts sc, const InitSpec& init, Rng& rng);
  Var forward(Tape& tp, Var u, const PotentialTensor* mask, const std::string& name);
  /// dw followed by pw2 as one dense 7x7 kernel: K[tap][ci][co] = dw[tap][ci]*pw2[ci][co].
  PotentialTensor folded_kernel() const;
  void collect(ParamList& out);
};

/// U'' = U' + conv3x3(SN(conv3x3(SN(U')))), hidden width ratio*C.
struct ChannelConvUnit {
  int channels = 0;
  int hidden = 0;
  Neuron sn1, sn2;
  Conv c1, c2;

  ChannelConvUnit() = default;
  ChannelConvUnit(const std::string& name, int channels, double ratio, SpikeConsts sc, const InitSpec& init, Rng& rng);
  Var forward(Tape& tp, Var u, const PotentialTensor* mask, const std::string& name);
  void collect(ParamList& out);
};

struct CnnBlock {
  SepConvUnit sep;
  ChannelConvUnit chan;

  CnnBlock() = default;
  CnnBlock(const std::string& name, int channels, int expansion, double ratio, SpikeConsts sc, const InitSpec& init,
           Rng& rng);
  Var forward(Tape& tp, Var u, const PotentialTensor* mask, const std::string& name);
  void collect(ParamList& out);
};

/// Conv(SN(U)) with stride 1 or 2. The stem variant has no spiking layer and
/// consumes real pixels (counted as MAC embedding ops).
struct Downsample {
  bool stem = false;
  Neuron sn;
  Conv conv;

  Downsample() = default;
  Downsample(const std::string& name, const ConvSpec& spec, bool stem, SpikeConsts sc, const InitSpec& init, Rng& rng);
  /// in_mask gates the spiking layer input, out_mask the result.
  Var forward(Tape& tp, Var u, const PotentialTensor* in_mask, const PotentialTensor* out_mask,
              const std::string& name);
  void collect(ParamList& out);
};

/// U'' = U' + fc2(SN(fc1(SN(U')))), hidden width ratio*C.
struct ChannelMlp {
  int channels = 0;
  int ratio = 4;
  Neuron sn1, sn2;
  Conv fc1, fc2;

  ChannelMlp() = default;
  ChannelMlp(const std::string& name, int channels, int ratio, SpikeConsts sc, const InitSpec& init, Rng& rng);
  /// Returns the branch only (without the residual), optionally gated per frame.
  Var branch(Tape& tp, Var u, const PotentialTensor* mask, const std::string& name);
  Var forward(Tape& tp, Var u, const PotentialTensor* mask, const std::string& name);
  void collect(ParamList& out);
};

/// S = SN(U); Q/K/V = SN(RepConv(S)); U' = U + RepConv(SN_2D(HammingCharge(Q,K,V)));
/// U'' = U' + ChannelMlp(U'). Tokens are all T*H*W positions.
struct TransformerBlock {
  int channels = 0;
  Neuron sn_in, sn_q, sn_k, sn_v, sn_attn;
  RepConv q, k, v, proj;
  ChannelMlp mlp;

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, int channels, int mlp_ratio, SpikeConsts sc, const InitSpec& init,
                   Rng& rng);
  /// ranges: key frames visible per query frame. gate ([T] of 0/1) multiplies
  /// both residual branches per frame when given.
  Var forward(Tape& tp, Var u, const PotentialTensor* mask, const std::vector<FrameRange>& ranges,
              const std::string& name, const PotentialTensor* gate = nullptr);
  void collect(ParamList& out);
};

}  // namespace spikeseg
