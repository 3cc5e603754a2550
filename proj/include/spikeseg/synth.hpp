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
#include <optional>
#include <string>
#include <vector>

#include "spikeseg/seghead.hpp"
#include "spikeseg/tensor.hpp"

namespace spikeseg {

/// One 8-bit RGB frame, row-major, 3 bytes per pixel.
struct RgbImage {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> rgb;
};

struct ClipRecord {
  std::string id;
  std::vector<RgbImage> frames;
  /// Per-frame class maps [h*w] when present.
  std::optional<std::vector<std::vector<std::uint8_t>>> labels;

  int frames_count() const { return static_cast<int>(frames.size()); }
  /// Throws on empty clips, inconsistent sizes or label maps of the wrong size.
  void validate() const;
  /// [T,H,W,3] in [0,1].
  PotentialTensor to_tensor() const;
  /// [T*H*W] class indices; throws when the clip has no labels.
  std::vector<int> label_vector() const;
  LabeledClip to_labeled() const;
};

struct SynthConfig {
  int height = 64;
  int width = 64;
  int frames = 4;
  int classes = 2;
  /// Blobs per foreground class.
  int blobs = 1;
  double radius_min = 8.0;
  double radius_max = 14.0;
  /// Pixels per frame.
  double speed_max = 3.0;
  /// Boundary wobble amplitude relative to the radius.
  double deform = 0.25;
  bool occluders = true;
  double noise = 0.03;
  /// When > 0, every blob radius is set so one blob covers this fraction of the frame.
  double area_fraction = 0.0;

  void validate() const;
};

/// Deterministic clips of moving, deforming blobs (class k >= 1) over a
/// textured background (class 0), with optional bar occluders that hide blobs.
std::vector<ClipRecord> synth_dataset(const SynthConfig& cfg, int n_clips, std::uint64_t seed);

/// Uniform double in [0,1) from the top 53 bits; fixed across standard libraries.
double unit_uniform(std::uint64_t bits);

}  // namespace spikeseg
