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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "spikeseg/encoder.hpp"
#include "spikeseg/seghead.hpp"
#include "spikeseg/train.hpp"

namespace spikeseg {

/// Plain pre-LN transformer over the T*h*w stage-4 tokens of a clip.
struct DecoderConfig {
  int depth = 8;
  int dim = 96;
  int heads = 4;
  int mlp_ratio = 4;
  int patch = 16;
  int frames = 4;
  /// Token grid per frame (H/16, W/16).
  int grid_h = 4;
  int grid_w = 4;

  int token_count() const { return frames * grid_h * grid_w; }
  void validate() const;
  /// dim = stage-4 width; 8 heads for the large variants, 4 otherwise.
  static DecoderConfig for_encoder(const EncoderConfig& enc, const Shape4& clip);
};

struct MaskEmbedding {
  Param m;  // [D]

  MaskEmbedding() = default;
  MaskEmbedding(int dim, Rng& rng);
  void collect(ParamList& out) { out.push_back(&m); }
};

/// out = keep*u4 + (1-keep)*m per site. u4 [T,h,w,D], keep [T,h,w,1], m [D].
PotentialTensor fill_masked(const PotentialTensor& u4, const PotentialTensor& keep, const PotentialTensor& m);

namespace ops {
Var fill_masked(Var u4, const PotentialTensor& keep, Var m);
/// tokens [T*h*w, p*p*3] -> pixels [T, p*h, p*w, 3]; token layout (py, px, rgb).
Var unpatchify(Var tokens, int frames, int grid_h, int grid_w, int patch);
}  // namespace ops

class VitDecoder {
 public:
  VitDecoder() = default;
  VitDecoder(const DecoderConfig& cfg, std::uint64_t seed);

  /// tokens [T,h,w,D] -> reconstruction [T,16h,16w,3]. Counted as auxiliary.
  Var forward(Tape& tp, Var tokens, const std::string& name = "dec");
  const DecoderConfig& config() const { return cfg_; }
  void collect(ParamList& out);

 private:
  struct Block {
    Param ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  DecoderConfig cfg_;
  Param pos_;  // [M, D]
  std::vector<Block> blocks_;
  Param ln_g_, ln_b_, out_w_, out_b_;
};

PotentialTensor vit_decode(VitDecoder& dec, const PotentialTensor& tokens);

/// Frozen provider of per-clip features at H/16 resolution, [T,h,w,Ct].
class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual int channels() const = 0;
  virtual PotentialTensor features(const std::string& clip_id, const PotentialTensor& clip) = 0;
};

/// Per-frame 16x16 patch projection followed by tanh; weights fixed by the seed.
class RandomConvTeacher : public Teacher {
 public:
  RandomConvTeacher(int channels, std::uint64_t seed);
  int channels() const override { return channels_; }
  PotentialTensor features(const std::string& clip_id, const PotentialTensor& clip) override;
  const PotentialTensor& weights() const { return w_; }

 private:
  int channels_;
  PotentialTensor w_;  // [16*16*3, Ct]
};

/// All-zero features.
class ZeroTeacher : public Teacher {
 public:
  explicit ZeroTeacher(int channels) : channels_(channels) {}
  int channels() const override { return channels_; }
  PotentialTensor features(const std::string& clip_id, const PotentialTensor& clip) override;

 private:
  int channels_;
};

/// Precomputed features: <dir>/manifest.json = {"channels": Ct, "clips": {"<id>": "<file>.spkt", ...}}.
class FixtureTeacher : public Teacher {
 public:
  explicit FixtureTeacher(const std::string& dir);
  int channels() const override { return channels_; }
  PotentialTensor features(const std::string& clip_id, const PotentialTensor& clip) override;

 private:
  std::string dir_;
  int channels_ = 0;
  std::map<std::string, std::string> files_;
  std::map<std::string, PotentialTensor> cache_;
};

/// 3x3 conv from teacher width to the stage-4 width. Dropped after pretraining.
struct TeacherAdapter {
  Param w;  // [3,3,Ct,D]
  Param b;  // [D]

  TeacherAdapter() = default;
  TeacherAdapter(int teacher_channels, int dim, Rng& rng);
  Var forward(Tape& tp, Var feats, const std::string& name = "adapter");
  void collect(ParamList& out);
};

/// Mean squared error between u4 and the adapted teacher features. With
/// `keep`, only kept positions count (mean over kept positions x D).
Var kd_loss(Tape& tp, Var u4, const PotentialTensor& teacher_feats, TeacherAdapter& adapter,
            const PotentialTensor* keep = nullptr);
double kd_loss(const PotentialTensor& u4, const PotentialTensor& adapted);

struct PretrainConfig {
  double mask_ratio = 0.5;
  double lambda_kd = 0.1;
  bool kd_unmasked_only = false;
};

class PretrainModel {
 public:
  PretrainModel(const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg, int teacher_channels, std::uint64_t seed);

  Encoder& encoder() { return encoder_; }
  MaskEmbedding& mask_embedding() { return emb_; }
  VitDecoder& decoder() { return decoder_; }
  TeacherAdapter& adapter() { return adapter_; }
  ParamList params();

 private:
  Encoder encoder_;
  MaskEmbedding emb_;
  VitDecoder decoder_;
  TeacherAdapter adapter_;
};

struct PretrainMetrics {
  double recon = 0.0;
  double kd = 0.0;
  double total = 0.0;
};

/// Loss of one clip under a given mask set: recon + lambda_kd*kd. `teacher` may be null (kd = 0).
struct PretrainLoss {
  Var recon, kd, total;
};
PretrainLoss pretrain_loss(Tape& tp, PretrainModel& model, const LabeledClip& clip, const TubeMaskSet& masks,
                           Teacher* teacher, const PretrainConfig& cfg);

/// One update. Masks are drawn fresh for every clip from (step_seed, index).
/// Labels in the batch are ignored.
PretrainMetrics pretrain_step(PretrainModel& model, const std::vector<const LabeledClip*>& batch, Teacher* teacher,
                              const PretrainConfig& cfg, AdamW& opt, double lr, std::uint64_t step_seed);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace spikeseg
