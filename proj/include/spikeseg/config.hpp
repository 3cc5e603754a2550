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

#include "spikeseg/encoder.hpp"
#include "spikeseg/pretrain.hpp"
#include "spikeseg/seghead.hpp"
#include "spikeseg/synth.hpp"

// Run configuration file: INI-style sections of `key = value` lines,
// `;` or `#` comments. Unknown sections or keys are rejected.
//
//   [run]       seed
//   [model]     variant, head_channels, classes, z_levels, memory_capacity, focal_gamma, init_gain
//   [data]      source (synth|dir), dir, height, width, frames, train_clips, test_clips, unlabeled_clips,
//               blobs, radius_min, radius_max, speed_max, deform, occluders, noise, area_fraction
//   [pretrain]  steps, batch, lr, weight_decay, mask_ratio, lambda_kd, kd_unmasked_only,
//               teacher (random|zero|fixture), teacher_channels, teacher_dir
//   [finetune]  steps, batch, lr, weight_decay, freeze_encoder

namespace spikeseg {

struct StageSchedule {
  int steps = 200;
  int batch = 2;
  double lr = 1e-3;
  double weight_decay = 0.0;
};

struct RunConfig {
  std::uint64_t seed = 0;

  std::string variant = "tiny";
  HeadConfig head;
  double init_gain = 2.0;

  std::string data_source = "synth";
  std::string data_dir;
  SynthConfig synth;
  int train_clips = 16;
  int test_clips = 8;
  /// Label-free pretraining pool; 0 pretrains on the train split.
  int unlabeled_clips = 0;

  StageSchedule pretrain;
  PretrainConfig pretrain_loss;
  std::string teacher = "random";
  int teacher_channels = 32;
  std::string teacher_dir;

  StageSchedule finetune;
  bool freeze_encoder = false;

  EncoderConfig encoder_config() const;
  void validate() const;
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);
/// Round-trippable text form (every key written).
std::string format_config(const RunConfig& cfg);

}  // namespace spikeseg
