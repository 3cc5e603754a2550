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

#include "spikeseg/layers.hpp"

#include <cmath>

namespace spikeseg {

PotentialTensor trunc_normal(const Dims& dims, double std, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  PotentialTensor t(dims);
  for (double& v : t.mutable_data()) {
    double z = nd(rng);
    while (std::abs(z) > 2.0) z = nd(rng);
    v = z * std;
  }
  return t;
}

void ConvSpec::validate() const {
  if (stride != 1 && stride != 2) throw ValueError("conv stride must be 1 or 2");
  if (kh < 1 || kw < 1 || in_ch < 1 || out_ch < 1) throw ValueError("conv sizes must be >= 1");
  if (kind == ConvKind::kDepthwise && in_ch != out_ch) throw ValueError("depthwise conv needs in_ch == out_ch");
  if (kind == ConvKind::kPointwise && (kh != 1 || kw != 1)) throw ValueError("pointwise conv is 1x1");
}

Neuron::Neuron(const std::string& name, int lv, SpikeConsts c)
    : beta_logit(name + ".beta", PotentialTensor({1})), levels(lv), consts(c) {}

double Neuron::beta() const { return 1.0 / (1.0 + std::exp(-beta_logit.value[0])); }

Var Neuron::fire(Tape& tp, Var x, const PotentialTensor* mask, const std::string& name, double scale) {
  ops::SpikeArgs a;
  a.u_th = consts.u_th;
  a.width = consts.width;
  a.levels = levels;
  a.scale = scale;
  a.mask = mask;
  a.name = name;
  return ops::spike(x, tp.param(beta_logit), a);
}

Conv::Conv(const std::string& name, const ConvSpec& s, bool bias, double std, Rng& rng) : spec(s), has_bias(bias) {
  spec.validate();
  const int cin = spec.kind == ConvKind::kDepthwise ? 1 : spec.in_ch;
  w = Param(name + ".w", trunc_normal({spec.kh, spec.kw, cin, spec.out_ch}, std, rng));
  if (has_bias) b = Param(name + ".b", PotentialTensor({spec.out_ch}));
}

Var Conv::forward(Tape& tp, Var x, const std::string& name, bool embedding) {
  ops::ConvArgs a;
  a.stride = spec.stride;
  a.depthwise = spec.kind == ConvKind::kDepthwise;
  a.name = name;
  a.embedding = embedding;
  return ops::conv2d(x, tp.param(w), has_bias ? tp.param(b) : Var{}, a);
}

void Conv::collect(ParamList& out) {
  out.push_back(&w);
  if (has_bias) out.push_back(&b);
}

RepConv::RepConv(const std::string& name, int in, int out, const InitSpec& init, Rng& rng)
    : in_ch(in),
      out_ch(out),
      pw(name + ".pw", trunc_normal({1, 1, in, out}, init.gain / std::sqrt(static_cast<double>(in)), rng)),
      dw3(name + ".dw3", trunc_normal({3, 3, 1, out}, 0.02, rng)),
      dw1(name + ".dw1", PotentialTensor({1, 1, 1, out})),
      b(name + ".b", PotentialTensor({out})) {}

Var RepConv::forward(Tape& tp, Var x, const std::string& name) {
  return tp.options().fold_reparam ? forward_folded(tp, x, name) : forward_branches(tp, x, name);
}

Var RepConv::forward_branches(Tape& tp, Var x, const std::string& name) {
  ops::ConvArgs a;
  a.name = name.empty() ? "" : name + ".pw";
  Var y = ops::conv2d(x, tp.param(pw), Var{}, a);
  ops::ConvArgs d;
  d.depthwise = true;
  Var z3 = ops::conv2d(y, tp.param(dw3), tp.param(b), d);
  Var z1 = ops::conv2d(y, tp.param(dw1), Var{}, d);
  return ops::add(ops::add(z3, z1), y);
}

Var RepConv::forward_folded(Tape& tp, Var x, const std::string& name) {
  ops::ConvArgs a;
  a.name = name;
  return ops::conv2d(x, tp.constant(folded_kernel()), tp.param(b), a);
}

PotentialTensor RepConv::folded_kernel() const {
  PotentialTensor k({3, 3, in_ch, out_ch});
  for (int tap = 0; tap < 9; ++tap)
    for (int co = 0; co < out_ch; ++co) {
      double dw = dw3.value[static_cast<std::size_t>(tap) * out_ch + co];
      if (tap == 4) dw += dw1.value[static_cast<std::size_t>(co)] + 1.0;
      for (int ci = 0; ci < in_ch; ++ci)
        k[(static_cast<std::size_t>(tap) * in_ch + ci) * out_ch + co] =
            pw.value[static_cast<std::size_t>(ci) * out_ch + co] * dw;
    }
  return k;
}

void RepConv::collect(ParamList& out) {
  out.push_back(&pw);
  out.push_back(&dw3);
  out.push_back(&dw1);
  out.push_back(&b);
}

}  // namespace spikeseg
