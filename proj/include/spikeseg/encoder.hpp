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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spikeseg/blocks.hpp"
#include "spikeseg/masking.hpp"

namespace spikeseg {

/// Four-stage encoder geometry.
///
///   stem   7x7/2 conv on pixels          -> H/2,  C      + stage1_pre CNN blocks
///   stage1 3x3/2 downsample              -> H/4,  2C     + stage1_blocks CNN blocks  (u1)
///   stage2 3x3/2 downsample              -> H/8,  4C     + stage2_blocks CNN blocks  (u2)
///   stage3 3x3/2 downsample              -> H/16, 8C     + stage3_blocks transformers (u3)
///   stage4 3x3/1 channel expansion       -> H/16, c4     + stage4_blocks transformers (u4)
struct EncoderConfig {
  std::string variant = "tiny";
  int base_channels = 8;
  /// Stage-4 width; 12C unless overridden (the 16M variant uses 512).
  int stage4_channels = 96;
  int stage1_pre_blocks = 1;
  int stage1_blocks = 1;
  int stage2_blocks = 1;
  int stage3_blocks = 2;
  int stage4_blocks = 1;
  int sep_expansion = 2;
  double channel_ratio = 5.5;
  int mlp_ratio = 4;
  SpikeConsts spikes;
  InitSpec init;

  static EncoderConfig tiny();
  static EncoderConfig small16m();
  static EncoderConfig base56m();
  /// "tiny", "small-16M" or "base-56M".
  static EncoderConfig from_variant(const std::string& name);

  std::array<int, 5> stage_channels() const;
  void validate() const;
};

/// Stage outputs at H/4, H/8, H/16, H/16.
struct MultiScaleFeatures {
  PotentialTensor u1, u2, u3, u4;
};

class Encoder {
 public:
  struct Taps {
    Var u1, u2, u3, u4;
  };

  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::uint64_t seed);

  /// clip [T,H,W,3] with H, W divisible by 16. masks (optional) gate every
  /// spiking layer and block output at the matching resolution; M0 gates pixels.
  Taps forward(Tape& tp, Var clip, const TubeMaskSet* masks, const std::string& prefix = "enc");

  const EncoderConfig& config() const { return cfg_; }
  void collect(ParamList& out);
  ParamList params();
  std::size_t param_count();

 private:
  EncoderConfig cfg_;
  Downsample stem_;
  std::vector<CnnBlock> stage1_pre_;
  Downsample down1_;
  std::vector<CnnBlock> stage1_;
  Downsample down2_;
  std::vector<CnnBlock> stage2_;
  Downsample down3_;
  std::vector<TransformerBlock> stage3_;
  Downsample down4_;
  std::vector<TransformerBlock> stage4_;
};

/// Deterministic weights from the seed.
Encoder build_encoder(const EncoderConfig& cfg, std::uint64_t seed);

/// Inference pass (surrogate forward, no gradient recording).
MultiScaleFeatures encode(Encoder& enc, const PotentialTensor& clip, const TubeMaskSet* masks = nullptr,
                          const SpikeObserver& observer = {});

}  // namespace spikeseg
