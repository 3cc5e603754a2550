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
#include <deque>
#include <string>
#include <vector>

#include "spikeseg/encoder.hpp"
#include "spikeseg/train.hpp"

namespace spikeseg {

struct HeadConfig {
  /// Width every pyramid level is projected to (128 small, 256 base).
  int head_channels = 32;
  int classes = 2;
  /// IntIF alphabet size inside the head.
  int z_levels = 4;
  /// Previous frames visible to the memory read (T-1 for 4-frame clips).
  int memory_capacity = 3;
  int mlp_ratio = 4;
  double focal_gamma = 2.0;

  void validate() const;
};

/// FIFO of previous-frame u4 maps [H,W,D] with their frame indices.
class MemoryBank {
 public:
  explicit MemoryBank(int capacity = 3);
  /// Appends, evicting the oldest entry when full.
  void push(PotentialTensor u4_frame, int frame_index);
  void clear();
  int capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<PotentialTensor>& entries() const { return entries_; }
  const std::deque<int>& frame_indices() const { return indices_; }

 private:
  int capacity_;
  std::deque<PotentialTensor> entries_;
  std::deque<int> indices_;
};

/// Memory fusion, SpikeFPN and per-level logits.
class SegHead {
 public:
  SegHead() = default;
  SegHead(const HeadConfig& cfg, const std::array<int, 5>& enc_channels, SpikeConsts sc, const InitSpec& init,
          std::uint64_t seed);

  /// Each frame of u4 [T,h,w,D] attends to the previous memory_capacity frames;
  /// frames with no memory pass through unchanged. Result is residual-added.
  Var fuse(Tape& tp, Var u4, const std::string& name = "head.fuse");
  /// O_4 = Lat(SN(U_4)); O_l = Lat(SN(U_l)) + Up(O_{l+1}). IntIF spiking.
  std::array<Var, 4> pyramid(Tape& tp, const Encoder::Taps& feats, const std::string& name = "head.fpn");
  /// sum_l Up(Conv(SN(O_l))) to full resolution [T,H,W,K].
  Var logits(Tape& tp, const std::array<Var, 4>& pyr, int full_h, int full_w, const std::string& name = "head.out");

  const HeadConfig& config() const { return cfg_; }
  void collect(ParamList& out);
  std::size_t param_count();

 private:
  HeadConfig cfg_;
  SpikeConsts sc_;
  TransformerBlock fusion_;
  std::array<Neuron, 4> lat_sn_;
  std::array<Conv, 4> lat_;
  std::array<Neuron, 4> out_sn_;
  std::array<Conv, 4> out_;
};

/// Standalone streaming memory read: fuses the frame `u4_now` [h,w,D] (or
/// [1,h,w,D]) with the bank contents and returns the fused frame [1,h,w,D].
PotentialTensor memory_read_fuse(SegHead& head, const PotentialTensor& u4_now, const MemoryBank& bank);

class SegModel {
 public:
  SegModel() = default;
  SegModel(const EncoderConfig& enc_cfg, const HeadConfig& head_cfg, std::uint64_t seed);

  /// Logits [T,H,W,K] for clip [T,H,W,3].
  Var forward(Tape& tp, Var clip);
  Encoder& encoder() { return encoder_; }
  SegHead& head() { return head_; }
  ParamList params();
  ParamList encoder_params() { return encoder_.params(); }
  ParamList head_params();
  std::size_t param_count() { return count_params(params()); }

 private:
  Encoder encoder_;
  SegHead head_;
};

struct LabeledClip {
  std::string id;
  PotentialTensor clip;     // [T,H,W,3] in [0,1]
  std::vector<int> labels;  // [T*H*W]
};

struct FinetuneMetrics {
  double ce = 0.0;
  double focal = 0.0;
  double total = 0.0;
  double miou_batch = 0.0;
};

/// One update on CE + focal (unit weights), gradients averaged over the batch.
/// With freeze_encoder the encoder receives no gradient and is left untouched.
FinetuneMetrics finetune_step(SegModel& model, const std::vector<const LabeledClip*>& batch, AdamW& opt, double lr,
                              bool freeze_encoder = false);

/// Per-pixel argmax of logits [T,H,W,K] -> [T*H*W] class indices.
std::vector<int> predict_labels(SegModel& model, const PotentialTensor& clip);
std::vector<int> argmax_last(const PotentialTensor& x);

}  // namespace spikeseg
