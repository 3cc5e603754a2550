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

#include "spikeseg/encoder.hpp"

namespace spikeseg {

EncoderConfig EncoderConfig::tiny() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::small16m() {
  EncoderConfig c;
  c.variant = "small-16M";
  c.base_channels = 32;
  c.stage4_channels = 512;
  c.stage1_pre_blocks = 1;
  c.stage1_blocks = 1;
  c.stage2_blocks = 2;
  c.stage3_blocks = 6;
  c.stage4_blocks = 2;
  return c;
}

EncoderConfig EncoderConfig::base56m() {
  EncoderConfig c = small16m();
  c.variant = "base-56M";
  c.base_channels = 64;
  c.stage4_channels = 12 * 64;
  return c;
}

EncoderConfig EncoderConfig::from_variant(const std::string& name) {
  if (name == "tiny") return tiny();
  if (name == "small-16M") return small16m();
  if (name == "base-56M") return base56m();
  throw ValueError("unknown encoder variant '" + name + "'");
}

std::array<int, 5> EncoderConfig::stage_channels() const {
  const int c = base_channels;
  return {c, 2 * c, 4 * c, 8 * c, stage4_channels};
}

void EncoderConfig::validate() const {
  if (base_channels < 1) throw ValueError("base channel count must be >= 1");
  if (stage4_channels < 1) throw ValueError("stage-4 width must be >= 1");
  if (stage1_pre_blocks < 0 || stage1_blocks < 0 || stage2_blocks < 0 || stage3_blocks < 0 || stage4_blocks < 0)
    throw ValueError("stage depths must be >= 0");
  if (sep_expansion < 1 || !(channel_ratio > 0.0) || mlp_ratio < 1) throw ValueError("hidden ratios must be positive");
  if (!(spikes.u_th > 0.0) || !(spikes.width > 0.0)) throw ValueError("invalid neuron constants");
}

Encoder::Encoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const auto ch = cfg_.stage_channels();
  const SpikeConsts sc = cfg_.spikes;
  const InitSpec& in = cfg_.init;
  auto cnn = [&](const std::string& n, int c) {
    return CnnBlock(n, c, cfg_.sep_expansion, cfg_.channel_ratio, sc, in, rng);
  };
  auto tr = [&](const std::string& n, int c) { return TransformerBlock(n, c, cfg_.mlp_ratio, sc, in, rng); };

  stem_ = Downsample("enc.stem", {7, 7, 2, 3, ch[0], ConvKind::kStandard}, true, sc, in, rng);
  for (int i = 0; i < cfg_.stage1_pre_blocks; ++i) stage1_pre_.push_back(cnn("enc.s1pre." + std::to_string(i), ch[0]));
  down1_ = Downsample("enc.down1", {3, 3, 2, ch[0], ch[1], ConvKind::kStandard}, false, sc, in, rng);
  for (int i = 0; i < cfg_.stage1_blocks; ++i) stage1_.push_back(cnn("enc.s1." + std::to_string(i), ch[1]));
  down2_ = Downsample("enc.down2", {3, 3, 2, ch[1], ch[2], ConvKind::kStandard}, false, sc, in, rng);
  for (int i = 0; i < cfg_.stage2_blocks; ++i) stage2_.push_back(cnn("enc.s2." + std::to_string(i), ch[2]));
  down3_ = Downsample("enc.down3", {3, 3, 2, ch[2], ch[3], ConvKind::kStandard}, false, sc, in, rng);
  for (int i = 0; i < cfg_.stage3_blocks; ++i) stage3_.push_back(tr("enc.s3." + std::to_string(i), ch[3]));
  down4_ = Downsample("enc.down4", {3, 3, 1, ch[3], ch[4], ConvKind::kStandard}, false, sc, in, rng);
  for (int i = 0; i < cfg_.stage4_blocks; ++i) stage4_.push_back(tr("enc.s4." + std::to_string(i), ch[4]));
}

Encoder::Taps Encoder::forward(Tape& tp, Var clip, const TubeMaskSet* masks, const std::string& prefix) {
  const Shape4 shape = Shape4::from_dims(clip.dims());
  shape.validate_encoder_input();
  if (shape.c != 3) throw ShapeError("encoder input must have 3 channels, got " + dims_to_string(clip.dims()));
  if (masks) masks->check_conforms(shape);
  auto m = [&](int l) { return masks ? &masks->level(l) : nullptr; };
  auto name = [&](const std::string& leaf) { return prefix.empty() ? std::string() : prefix + "." + leaf; };
  const auto causal = scope_ranges(shape.t, TemporalScope::kCausal);

  Var u = stem_.forward(tp, clip, m(0), m(1), name("stem"));
  for (std::size_t i = 0; i < stage1_pre_.size(); ++i)
    u = stage1_pre_[i].forward(tp, u, m(1), name("s1pre." + std::to_string(i)));
  u = down1_.forward(tp, u, m(1), m(2), name("down1"));
  for (std::size_t i = 0; i < stage1_.size(); ++i) u = stage1_[i].forward(tp, u, m(2), name("s1." + std::to_string(i)));
  Taps out;
  out.u1 = u;
  u = down2_.forward(tp, u, m(2), m(3), name("down2"));
  for (std::size_t i = 0; i < stage2_.size(); ++i) u = stage2_[i].forward(tp, u, m(3), name("s2." + std::to_string(i)));
  out.u2 = u;
  u = down3_.forward(tp, u, m(3), m(4), name("down3"));
  for (std::size_t i = 0; i < stage3_.size(); ++i)
    u = stage3_[i].forward(tp, u, m(4), causal, name("s3." + std::to_string(i)));
  out.u3 = u;
  u = down4_.forward(tp, u, m(4), m(4), name("down4"));
  for (std::size_t i = 0; i < stage4_.size(); ++i)
    u = stage4_[i].forward(tp, u, m(4), causal, name("s4." + std::to_string(i)));
  out.u4 = u;
  return out;
}

void Encoder::collect(ParamList& out) {
  stem_.collect(out);
  for (auto& b : stage1_pre_) b.collect(out);
  down1_.collect(out);
  for (auto& b : stage1_) b.collect(out);
  down2_.collect(out);
  for (auto& b : stage2_) b.collect(out);
  down3_.collect(out);
  for (auto& b : stage3_) b.collect(out);
  down4_.collect(out);
  for (auto& b : stage4_) b.collect(out);
}

ParamList Encoder::params() {
  ParamList p;
  collect(p);
  return p;
}

std::size_t Encoder::param_count() { return count_params(params()); }

Encoder build_encoder(const EncoderConfig& cfg, std::uint64_t seed) { return Encoder(cfg, seed); }

MultiScaleFeatures encode(Encoder& enc, const PotentialTensor& clip, const TubeMaskSet* masks,
                          const SpikeObserver& observer) {
  TapeOptions o;
  o.record = false;
  o.observer = observer;
  Tape tp(o);
  Encoder::Taps t = enc.forward(tp, tp.constant(clip), masks);
  return {t.u1.value(), t.u2.value(), t.u3.value(), t.u4.value()};
}

}  // namespace spikeseg
