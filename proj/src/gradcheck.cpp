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

#include "spikeseg/gradcheck.hpp"

#include <random>

#include "spikeseg/losses.hpp"
#include "spikeseg/pretrain.hpp"
#include "spikeseg/seghead.hpp"

namespace spikeseg {

namespace {

constexpr std::size_t kPerParam = 6;

PotentialTensor uniform(const Dims& d, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  PotentialTensor t(d);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = u(rng);
  return t;
}

std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
  std::uniform_int_distribution<int> u(0, classes - 1);
  std::vector<int> out(n);
  for (int& v : out) v = u(rng);
  return out;
}

// sum(y * probe): a loss whose gradient reaches every output element.
Var probe_loss(Var y, const PotentialTensor& probe) { return ops::sum(ops::mask_mul(y, probe)); }

// Near-zero gradients drown in the rounding noise of the difference quotient
// (about 1e-15/eps absolute), so fragments whose default init leaves some
// branch almost silent get those weights widened.
void widen(const ParamList& params, const std::string& needle, double factor) {
  for (Param* p : params)
    if (p->name.find(needle) != std::string::npos)
      for (double& v : p->value.mutable_data()) v *= factor;
}

// Input x is itself a parameter so the check covers the input path too.
FragmentCheck check_block(const std::string& name, std::uint64_t seed, double eps) {
  Rng rng(seed);
  const int C = 4;
  const SpikeConsts sc;
  const InitSpec init;
  Param x("x", uniform({2, 4, 4, C}, -0.5, 2.5, rng));
  const PotentialTensor probe = uniform({2, 4, 4, C}, -1.0, 1.0, rng);
  ParamList params{&x};
  std::function<Var(Tape&)> loss;
  CnnBlock conv;
  ChannelMlp mlp;
  TransformerBlock tr;
  SegHead head;
  if (name == "conv_block") {
    conv = CnnBlock("cb", C, 2, 1.5, sc, init, rng);
    conv.collect(params);
    loss = [&](Tape& tp) { return probe_loss(conv.forward(tp, tp.param(x), nullptr, ""), probe); };
  } else if (name == "channel_mlp") {
    mlp = ChannelMlp("mlp", C, 2, sc, init, rng);
    mlp.collect(params);
    loss = [&](Tape& tp) { return probe_loss(mlp.forward(tp, tp.param(x), nullptr, ""), probe); };
  } else if (name == "memory_fuse") {
    HeadConfig hc;
    hc.memory_capacity = 1;
    head = SegHead(hc, {1, 1, 1, 1, C}, sc, init, seed);
    head.collect(params);
    loss = [&](Tape& tp) { return probe_loss(head.fuse(tp, tp.param(x), ""), probe); };
  } else {
    tr = TransformerBlock("tr", C, 2, sc, init, rng);
    tr.collect(params);
    const auto ranges = scope_ranges(2, TemporalScope::kCausal);
    loss = [&, ranges](Tape& tp) { return probe_loss(tr.forward(tp, tp.param(x), nullptr, ranges, ""), probe); };
  }
  return {name, finite_diff_check(loss, params, eps, kPerParam, seed)};
}

FragmentCheck check_fpn(std::uint64_t seed, double eps) {
  Rng rng(seed);
  HeadConfig hc;
  hc.head_channels = 4;
  hc.classes = 3;
  hc.memory_capacity = 1;
  const std::array<int, 5> ch = {2, 3, 4, 5, 6};
  SegHead head(hc, ch, SpikeConsts{}, InitSpec{}, seed);
  // 32x32 clip: taps at 8x8, 4x4, 2x2, 2x2.
  Param u1("u1", uniform({2, 8, 8, 3}, -0.5, 2.5, rng));
  Param u2("u2", uniform({2, 4, 4, 4}, -0.5, 2.5, rng));
  Param u3("u3", uniform({2, 2, 2, 5}, -0.5, 2.5, rng));
  Param u4("u4", uniform({2, 2, 2, 6}, -0.5, 2.5, rng));
  ParamList params{&u1, &u2, &u3, &u4};
  head.collect(params);
  const PotentialTensor y = one_hot(random_labels(2 * 32 * 32, 3, rng), {2, 32, 32}, 3);
  auto loss = [&](Tape& tp) {
    Encoder::Taps t{tp.param(u1), tp.param(u2), tp.param(u3), tp.param(u4)};
    Var logits = head.logits(tp, head.pyramid(tp, t, ""), 32, 32, "");
    return ops::ce_loss(ops::softmax_last(logits), y);
  };
  return {"fpn", finite_diff_check(loss, params, eps, kPerParam, seed)};
}

FragmentCheck check_seg_loss(const std::string& name, std::uint64_t seed, double eps) {
  Rng rng(seed);
  Param logits("logits", uniform({2, 3, 3, 4}, -2.0, 2.0, rng));
  const PotentialTensor y = one_hot(random_labels(18, 4, rng), {2, 3, 3}, 4);
  const bool focal = name == "focal";
  auto loss = [&](Tape& tp) {
    Var p = ops::softmax_last(tp.param(logits));
    return focal ? ops::focal_loss(p, y, 2.0) : ops::ce_loss(p, y);
  };
  return {name, finite_diff_check(loss, {&logits}, eps, 72, seed)};
}

FragmentCheck check_recon(std::uint64_t seed, double eps) {
  Rng rng(seed);
  DecoderConfig dc;
  dc.depth = 2;
  dc.dim = 8;
  dc.heads = 2;
  dc.frames = 2;
  dc.grid_h = 1;
  dc.grid_w = 2;
  VitDecoder dec(dc, seed);
  MaskEmbedding emb(8, rng);
  Param u4("u4", uniform({2, 1, 2, 8}, -1.0, 2.0, rng));
  const PotentialTensor clip = uniform({2, 16, 32, 3}, 0.0, 1.0, rng);
  BaseMask base{1, 2, {1, 0}};
  const TubeMaskSet masks = TubeMaskSet::from_base(base, 2);
  ParamList params{&u4, &emb.m};
  dec.collect(params);
  for (const char* w : {".qkv.w", ".proj.w", ".fc1.w", ".fc2.w"}) widen(params, w, 15.0);
  auto loss = [&](Tape& tp) {
    Var filled = ops::fill_masked(tp.param(u4), masks.level(4), tp.param(emb.m));
    return ops::recon_loss(dec.forward(tp, filled, ""), clip, masks.level(0));
  };
  return {"recon", finite_diff_check(loss, params, eps, kPerParam, seed)};
}

FragmentCheck check_kd(std::uint64_t seed, double eps) {
  Rng rng(seed);
  TeacherAdapter adapter(3, 5, rng);
  Param u4("u4", uniform({2, 3, 3, 5}, -1.0, 1.0, rng));
  const PotentialTensor teacher = uniform({2, 3, 3, 3}, -1.0, 1.0, rng);
  ParamList params{&u4};
  adapter.collect(params);
  auto loss = [&](Tape& tp) { return kd_loss(tp, tp.param(u4), teacher, adapter); };
  return {"kd", finite_diff_check(loss, params, eps, 16, seed)};
}

FragmentCheck check_lif_chain(std::uint64_t seed, double eps) {
  Rng rng(seed);
  Param x("x", uniform({2, 5}, -0.5, 2.5, rng));
  Neuron sn("lif.beta", 1, SpikeConsts{});
  sn.beta_logit.value[0] = 0.3;
  const PotentialTensor probe = uniform({2, 5}, -1.0, 1.0, rng);
  auto loss = [&](Tape& tp) { return probe_loss(sn.fire(tp, tp.param(x), nullptr, ""), probe); };
  return {"lif_chain", finite_diff_check(loss, {&x, &sn.beta_logit}, eps, 10, seed)};
}

}  // namespace

std::vector<std::string> gradcheck_fragment_names() {
  return {"conv_block", "channel_mlp", "sdha_path", "memory_fuse", "fpn", "ce", "focal", "recon", "kd", "lif_chain"};
}

FragmentCheck gradcheck_fragment(const std::string& name, std::uint64_t seed, double eps) {
  if (name == "conv_block" || name == "channel_mlp" || name == "sdha_path" || name == "memory_fuse") return check_block(name, seed, eps);
  if (name == "fpn") return check_fpn(seed, eps);
  if (name == "ce" || name == "focal") return check_seg_loss(name, seed, eps);
  if (name == "recon") return check_recon(seed, eps);
  if (name == "kd") return check_kd(seed, eps);
  if (name == "lif_chain") return check_lif_chain(seed, eps);
  throw ValueError("unknown gradient-check fragment '" + name + "'");
}

std::vector<FragmentCheck> gradcheck_all(std::uint64_t seed, double eps) {
  std::vector<FragmentCheck> out;
  for (const auto& n : gradcheck_fragment_names()) out.push_back(gradcheck_fragment(n, seed, eps));
  return out;
}

}  // namespace spikeseg
