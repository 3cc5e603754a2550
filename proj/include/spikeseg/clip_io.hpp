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
#include <string>
#include <vector>

#include "spikeseg/synth.hpp"

// Clip directories hold frames 000.png, 001.png, ... (any zero-padded
// width) and optionally labels/000.png, ... as 8-bit palette or grey index maps.

namespace spikeseg {

class MissingFrameError : public IoError {
 public:
  using IoError::IoError;
};

class FrameSizeError : public IoError {
 public:
  using IoError::IoError;
};

class UnreadableFileError : public IoError {
 public:
  using IoError::IoError;
};

RgbImage read_png_rgb(const std::string& path);
void write_png_rgb(const std::string& path, const RgbImage& img);

/// Index map from a palette (indices) or 8-bit grey (values) PNG.
std::vector<std::uint8_t> read_png_index(const std::string& path, int& h, int& w);
/// 8-bit palette PNG; class k uses palette entry k.
void write_png_index(const std::string& path, const std::vector<std::uint8_t>& index, int h, int w);

/// Loads a clip directory. `expected_frames` > 0 additionally requires that many frames.
ClipRecord load_clip(const std::string& dir, int expected_frames = 0);
void save_clip(const std::string& dir, const ClipRecord& clip);
/// Loads every clip subdirectory of `root`, sorted by name.
std::vector<ClipRecord> load_clip_set(const std::string& root, int expected_frames = 0);

}  // namespace spikeseg
