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

#include "spikeseg/tensor.hpp"

namespace spikeseg {

/// Keep (1) / drop (0) map over the coarsest grid, [h16, w16].
struct BaseMask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> keep;

  int masked_cells() const;
};

/// Exactly round(alpha*h16*w16) cells dropped, chosen by a seeded shuffle.
/// Throws ValueError for alpha outside (0,1) or when no cell (or every cell) would be dropped.
BaseMask sample_base_mask(int h16, int w16, double alpha, std::uint64_t seed);

/// Level l map [T, 16*h/2^l, 16*w/2^l, 1]: each base cell becomes a
/// 2^(4-l) square block, identical in every frame.
PotentialTensor expand_mask(const BaseMask& base, int level, int frames);

/// M_0..M_4 for one clip.
struct TubeMaskSet {
  BaseMask base;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  int frames = 0;
  std::array<PotentialTensor, 5> levels;

  static TubeMaskSet sample(const Shape4& clip, double alpha, std::uint64_t seed);
  static TubeMaskSet from_base(BaseMask base, int frames);
  /// Every cell kept.
  static TubeMaskSet all_keep(const Shape4& clip);
  const PotentialTensor& level(int l) const { return levels.at(static_cast<std::size_t>(l)); }
  /// Throws ShapeError unless M_0 matches the clip's T, H, W.
  void check_conforms(const Shape4& clip) const;
};

/// x * m with m [T,H,W,1] broadcast over channels.
PotentialTensor apply_mask(const PotentialTensor& x, const PotentialTensor& m);

/// 2x2 block minimum of a [T,H,W,1] map.
PotentialTensor block_min_downsample(const PotentialTensor& m);

}  // namespace spikeseg
