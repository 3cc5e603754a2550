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

#include "spikeseg/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace spikeseg {

int BaseMask::masked_cells() const { return static_cast<int>(std::count(keep.begin(), keep.end(), 0)); }

BaseMask sample_base_mask(int h16, int w16, double alpha, std::uint64_t seed) {
  if (h16 < 1 || w16 < 1) throw ValueError("mask grid must be at least 1x1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValueError("mask ratio must lie in (0,1)");
  const int cells = h16 * w16;
  const int drop = static_cast<int>(std::lround(alpha * cells));
  if (drop == 0 || drop == cells)
    throw ValueError("mask ratio " + std::to_string(alpha) + " drops " + std::to_string(drop) + " of " +
                     std::to_string(cells) + " cells");
  std::vector<int> order(static_cast<std::size_t>(cells));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the result does not depend on the
  // standard library's shuffle implementation.
  for (int i = cells - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  BaseMask m{h16, w16, std::vector<std::uint8_t>(static_cast<std::size_t>(cells), 1)};
  for (int i = 0; i < drop; ++i) m.keep[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 0;
  return m;
}

PotentialTensor expand_mask(const BaseMask& base, int level, int frames) {
  if (level < 0 || level > 4) throw ValueError("mask level must be in 0..4");
  if (frames < 1) throw ValueError("mask needs at least one frame");
  if (base.keep.size() != static_cast<std::size_t>(base.h) * base.w) throw ShapeError("base mask size mismatch");
  const int block = 1 << (4 - level);
  const int H = base.h * block, W = base.w * block;
  PotentialTensor m({frames, H, W, 1});
  for (int t = 0; t < frames; ++t)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        m[(static_cast<std::size_t>(t) * H + y) * W + x] =
            base.keep[static_cast<std::size_t>(y / block) * base.w + x / block];
  return m;
}

TubeMaskSet TubeMaskSet::from_base(BaseMask base, int frames) {
  TubeMaskSet s;
  s.frames = frames;
  for (int l = 0; l <= 4; ++l) s.levels[static_cast<std::size_t>(l)] = expand_mask(base, l, frames);
  s.alpha = static_cast<double>(base.masked_cells()) / static_cast<double>(base.keep.size());
  s.base = std::move(base);
  return s;
}

TubeMaskSet TubeMaskSet::sample(const Shape4& clip, double alpha, std::uint64_t seed) {
  clip.validate_encoder_input();
  TubeMaskSet s = from_base(sample_base_mask(clip.h / 16, clip.w / 16, alpha, seed), clip.t);
  s.alpha = alpha;
  s.seed = seed;
  return s;
}

TubeMaskSet TubeMaskSet::all_keep(const Shape4& clip) {
  clip.validate_encoder_input();
  BaseMask b{clip.h / 16, clip.w / 16, std::vector<std::uint8_t>(static_cast<std::size_t>(clip.h / 16) * (clip.w / 16), 1)};
  return from_base(std::move(b), clip.t);
}

void TubeMaskSet::check_conforms(const Shape4& clip) const {
  const Dims want{clip.t, clip.h, clip.w, 1};
  if (level(0).dims() != want)
    throw ShapeError("mask " + dims_to_string(level(0).dims()) + " does not match clip " + dims_to_string(clip.dims()));
}

PotentialTensor apply_mask(const PotentialTensor& x, const PotentialTensor& m) {
  if (x.rank() != 4 || m.rank() != 4 || m.dim(3) != 1 || x.dim(0) != m.dim(0) || x.dim(1) != m.dim(1) ||
      x.dim(2) != m.dim(2))
    throw ShapeError("mask " + dims_to_string(m.dims()) + " does not fit " + dims_to_string(x.dims()));
  PotentialTensor y = x;
  const std::size_t c = static_cast<std::size_t>(x.dim(3));
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= m[i / c];
  return y;
}

PotentialTensor block_min_downsample(const PotentialTensor& m) {
  if (m.rank() != 4 || m.dim(3) != 1 || m.dim(1) % 2 || m.dim(2) % 2) throw ShapeError("block_min needs even [T,H,W,1]");
  const int T = m.dim(0), H = m.dim(1) / 2, W = m.dim(2) / 2;
  PotentialTensor o({T, H, W, 1});
  for (int t = 0; t < T; ++t)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double v = 1e300;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) v = std::min(v, m.at(t, 2 * y + dy, 2 * x + dx, 0));
        o[(static_cast<std::size_t>(t) * H + y) * W + x] = v;
      }
  return o;
}

}  // namespace spikeseg
