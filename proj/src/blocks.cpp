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

#include "spikeseg/blocks.hpp"

#include <cmath>

namespace spikeseg {

namespace {

double fan_in_std(const InitSpec& init, int fan_in) { return init.gain / std::sqrt(static_cast<double>(fan_in)); }

std::string sub(const std::string& name, const char* leaf) { return name.empty() ? std::string() : name + "." + leaf; }

Var masked(Var x, const PotentialTensor* mask) { return mask ? ops::mask_mul(x, *mask) : x; }

void check_channels(Var u, int channels, const char* what) {
  const Dims& d = u.dims();
  if (d.size() != 4 || d[3] != channels)
    throw ShapeError(std::string(what) + " expects [T,H,W," + std::to_string(channels) + "], got " + dims_to_string(d));
}

}  // namespace

SepConvUnit::SepConvUnit(const std::string& name, int c, int expansion, SpikeConsts sc, const InitSpec& init,
                         Rng& rng)
    : channels(c),
      hidden(expansion * c),
      sn1(name + ".sn1", 1, sc),
      sn2(name + ".sn2", 1, sc),
      pw1(name + ".pw1", {1, 1, 1, c, expansion * c, ConvKind::kPointwise}, true, fan_in_std(init, c), rng),
      dw(name + ".dw", trunc_normal({7, 7, 1, expansion * c}, fan_in_std(init, 49), rng)),
      pw2(name + ".pw2", {1, 1, 1, expansion * c, c, ConvKind::kPointwise}, true, fan_in_std(init, expansion * c),
          rng) {}

Var SepConvUnit::forward(Tape& tp, Var u, const PotentialTensor* mask, const std::string& name) {
  check_channels(u, channels, "SepConv");
  Var s1 = sn1.fire(tp, u, mask, sub(name, "sn1"));
  Var h = pw1.forward(tp, s1, sub(name, "pw1"));
  Var s2 = sn2.fire(tp, h, mask, sub(name, "sn2"));
  Var y;
  if (tp.options().fold_reparam) {
    ops::ConvArgs a;
    a.name = sub(name, "dwpw");
    y = ops::conv2d(s2, tp.constant(folded_kernel()), tp.param(pw2.b), a);
  } else {
    ops::ConvArgs d;
    d.depthwise = true;
    y = pw2.forward(tp, ops::conv2d(s2, tp.param(dw), Var{}, d), {});
  }
  return masked(ops::add(u, y, sub(name, "res")), mask);
}

PotentialTensor SepConvUnit::folded_kernel() const {
  PotentialTensor k({7, 7, hidden, channels});
  for (int tap = 0; tap < 49; ++tap)
    for (int ci = 0; ci < hidden; ++ci) {
      const double d = dw.value[static_cast<std::size_t>(tap) * hidden + ci];
      for (int co = 0; co < channels; ++co)
        k[(static_cast<std::size_t>(tap) * hidden + ci) * channels + co] =
            d * pw2.w.value[static_cast<std::size_t>(ci) * channels + co];
    }
  return k;
}

void SepConvUnit::collect(ParamList& out) {
  sn1.collect(out);
  sn2.collect(out);
  pw1.collect(out);
  out.push_back(&dw);
  pw2.collect(out);
}

ChannelConvUnit::ChannelConvUnit(const std::string& name, int c, double ratio, SpikeConsts sc, const InitSpec& init,
                                 Rng& rng)
    : channels(c),
      hidden(static_cast<int>(std::lround(ratio * c))),
      sn1(name + ".sn1", 1, sc),
      sn2(name + ".sn2", 1, sc),
      c1(name + ".c1", {3, 3, 1, c, hidden, ConvKind::kStandard}, true, fan_in_std(init, 9 * c), rng),
      c2(name + ".c2", {3, 3, 1, hidden, c, ConvKind::kStandard}, true, fan_in_std(init, 9 * hidden), rng) {}

Var ChannelConvUnit::forward(Tape& tp, Var u, const PotentialTensor* mask, const std::string& name) {
  check_channels(u, channels, "ChannelConv");
  Var s1 = sn1.fire(tp, u, mask, sub(name, "sn1"));
  Var h = c1.forward(tp, s1, sub(name, "c1"));
  Var s2 = sn2.fire(tp, h, mask, sub(name, "sn2"));
  Var y = c2.forward(tp, s2, sub(name, "c2"));
  return masked(ops::add(u, y, sub(name, "res")), mask);
}

void ChannelConvUnit::collect(ParamList& out) {
  sn1.collect(out);
  sn2.collect(out);
  c1.collect(out);
  c2.collect(out);
}

CnnBlock::CnnBlock(const std::string& name, int channels, int expansion, double ratio, SpikeConsts sc,
                   const InitSpec& init, Rng& rng)
    : sep(name + ".sep", channels, expansion, sc, init, rng), chan(name + ".chan", channels, ratio, sc, init, rng) {}

Var CnnBlock::forward(Tape& tp, Var u, const PotentialTensor* mask, const std::string& name) {
  return chan.forward(tp, sep.forward(tp, u, mask, sub(name, "sep")), mask, sub(name, "chan"));
}

void CnnBlock::collect(ParamList& out) {
  sep.collect(out);
  chan.collect(out);
}

Downsample::Downsample(const std::string& name, const ConvSpec& spec, bool is_stem, SpikeConsts sc,
                       const InitSpec& init, Rng& rng)
    : stem(is_stem),
      sn(name + ".sn", 1, sc),
      conv(name + ".conv", spec, true, fan_in_std(init, spec.kh * spec.kw * spec.in_ch), rng) {}

Var Downsample::forward(Tape& tp, Var u, const PotentialTensor* in_mask, const PotentialTensor* out_mask,
                        const std::string& name) {
  check_channels(u, conv.spec.in_ch, "Downsample");
  const Dims& d = u.dims();
  if (conv.spec.stride == 2 && (d[1] % 2 != 0 || d[2] % 2 != 0))
    throw ShapeError("stride-2 downsample needs even spatial dims, got " + dims_to_string(d));
  Var x = stem ? masked(u, in_mask) : sn.fire(tp, u, in_mask, sub(name, "sn"));
  return masked(conv.forward(tp, x, sub(name, "conv"), stem), out_mask);
}

void Downsample::collect(ParamList& out) {
  if (!stem) sn.collect(out);
  conv.collect(out);
}

ChannelMlp::ChannelMlp(const std::string& name, int c, int r, SpikeConsts sc, const InitSpec& init, Rng& rng)
    : channels(c),
      ratio(r),
      sn1(name + ".sn1", 1, sc),
      sn2(name + ".sn2", 1, sc),
      fc1(name + ".fc1", {1, 1, 1, c, r * c, ConvKind::kPointwise}, true, fan_in_std(init, c), rng),
      fc2(name + ".fc2", {1, 1, 1, r * c, c, ConvKind::kPointwise}, true, fan_in_std(init, r * c), rng) {}

Var ChannelMlp::branch(Tape& tp, Var u, const PotentialTensor* mask, const std::string& name) {
  check_channels(u, channels, "ChannelMLP");
  Var s1 = sn1.fire(tp, u, mask, sub(name, "sn1"));
  Var h = fc1.forward(tp, s1, sub(name, "fc1"));
  Var s2 = sn2.fire(tp, h, mask, sub(name, "sn2"));
  return fc2.forward(tp, s2, sub(name, "fc2"));
}

Var ChannelMlp::forward(Tape& tp, Var u, const PotentialTensor* mask, const std::string& name) {
  return masked(ops::add(u, branch(tp, u, mask, name), sub(name, "res")), mask);
}

void ChannelMlp::collect(ParamList& out) {
  sn1.collect(out);
  sn2.collect(out);
  fc1.collect(out);
  fc2.collect(out);
}

TransformerBlock::TransformerBlock(const std::string& name, int c, int mlp_ratio, SpikeConsts sc,
                                   const InitSpec& init, Rng& rng)
    : channels(c),
      sn_in(name + ".sn_in", 1, sc),
      sn_q(name + ".sn_q", 1, sc),
      sn_k(name + ".sn_k", 1, sc),
      sn_v(name + ".sn_v", 1, sc),
      sn_attn(name + ".sn_attn", 1, sc),
      q(name + ".q", c, c, init, rng),
      k(name + ".k", c, c, init, rng),
      v(name + ".v", c, c, init, rng),
      proj(name + ".proj", c, c, init, rng),
      mlp(name + ".mlp", c, mlp_ratio, sc, init, rng) {}

Var TransformerBlock::forward(Tape& tp, Var u, const PotentialTensor* mask, const std::vector<FrameRange>& ranges,
                              const std::string& name, const PotentialTensor* gate) {
  check_channels(u, channels, "Transformer");
  Var s = sn_in.fire(tp, u, mask, sub(name, "sn_in"));
  Var qs = sn_q.fire(tp, q.forward(tp, s, sub(name, "q")), mask, sub(name, "sn_q"));
  Var ks = sn_k.fire(tp, k.forward(tp, s, sub(name, "k")), mask, sub(name, "sn_k"));
  Var vs = sn_v.fire(tp, v.forward(tp, s, sub(name, "v")), mask, sub(name, "sn_v"));
  Var charge = ops::sdha_charge(qs, ks, vs, ranges, sub(name, "sdha"));
  Var a = sn_attn.fire(tp, charge, mask, sub(name, "sn_attn"), 2.0 * channels);
  Var y = proj.forward(tp, a, sub(name, "proj"));
  if (gate) y = ops::mask_mul(y, *gate);
  Var u1 = masked(ops::add(u, y, sub(name, "res1")), mask);
  Var m = mlp.branch(tp, u1, mask, sub(name, "mlp"));
  if (gate) m = ops::mask_mul(m, *gate);
  return masked(ops::add(u1, m, sub(name, "res2")), mask);
}

void TransformerBlock::collect(ParamList& out) {
  sn_in.collect(out);
  sn_q.collect(out);
  sn_k.collect(out);
  sn_v.collect(out);
  sn_attn.collect(out);
  q.collect(out);
  k.collect(out);
  v.collect(out);
  proj.collect(out);
  mlp.collect(out);
}

}  // namespace spikeseg
