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

#include "spikeseg/seghead.hpp"

#include <cmath>

#include "spikeseg/losses.hpp"
#include "spikeseg/metrics.hpp"

namespace spikeseg {

namespace {

double fan_in_std(const InitSpec& init, int fan_in) { return init.gain / std::sqrt(static_cast<double>(fan_in)); }

// Classifier convs start near zero so the initial prediction is close to uniform.
constexpr double kLogitInitStd = 0.01;

std::string sub(const std::string& name, const std::string& leaf) {
  return name.empty() ? std::string() : name + "." + leaf;
}

// Restores trainable flags on scope exit.
class FreezeGuard {
 public:
  FreezeGuard(const ParamList& params, bool active) {
    if (!active) return;
    for (Param* p : params) {
      saved_.emplace_back(p, p->trainable);
      p->trainable = false;
    }
  }
  ~FreezeGuard() {
    for (auto& [p, t] : saved_) p->trainable = t;
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<std::pair<Param*, bool>> saved_;
};

}  // namespace

void HeadConfig::validate() const {
  if (head_channels < 1) throw ValueError("head width must be >= 1");
  if (classes < 2) throw ValueError("need at least 2 classes");
  if (z_levels < 2) throw ValueError("IntIF alphabet size must be >= 2");
  if (memory_capacity < 0) throw ValueError("memory capacity must be >= 0");
  if (mlp_ratio < 1) throw ValueError("MLP ratio must be >= 1");
  if (!(focal_gamma >= 0.0)) throw ValueError("focal gamma must be >= 0");
}

MemoryBank::MemoryBank(int capacity) : capacity_(capacity) {
  if (capacity < 0) throw ValueError("memory capacity must be >= 0");
}

void MemoryBank::push(PotentialTensor u4_frame, int frame_index) {
  if (capacity_ == 0) return;
  if (!entries_.empty() && entries_.front().dims() != u4_frame.dims())
    throw ShapeError("memory entry shape " + dims_to_string(u4_frame.dims()) + " differs from bank shape " +
                     dims_to_string(entries_.front().dims()));
  if (static_cast<int>(entries_.size()) == capacity_) {
    entries_.pop_front();
    indices_.pop_front();
  }
  entries_.push_back(std::move(u4_frame));
  indices_.push_back(frame_index);
}

void MemoryBank::clear() {
  entries_.clear();
  indices_.clear();
}

SegHead::SegHead(const HeadConfig& cfg, const std::array<int, 5>& enc_channels, SpikeConsts sc, const InitSpec& init,
                 std::uint64_t seed)
    : cfg_(cfg), sc_(sc) {
  cfg_.validate();
  Rng rng(seed);
  const int F = cfg_.head_channels, L = cfg_.z_levels - 1;
  fusion_ = TransformerBlock("head.fuse", enc_channels[4], cfg_.mlp_ratio, sc, init, rng);
  for (int l = 0; l < 4; ++l) {
    const int cin = enc_channels[static_cast<std::size_t>(l) + 1];
    const std::string lat = "head.fpn.lat" + std::to_string(l + 1);
    const std::string out = "head.out." + std::to_string(l + 1);
    lat_sn_[l] = Neuron(lat + ".sn", L, sc);
    lat_[l] = Conv(lat, {3, 3, 1, cin, F, ConvKind::kStandard}, true, fan_in_std(init, 9 * cin), rng);
    out_sn_[l] = Neuron(out + ".sn", L, sc);
    out_[l] = Conv(out, {3, 3, 1, F, cfg_.classes, ConvKind::kStandard}, true, kLogitInitStd, rng);
  }
}

Var SegHead::fuse(Tape& tp, Var u4, const std::string& name) {
  const int T = u4.dims()[0];
  const auto ranges = memory_ranges(T, cfg_.memory_capacity);
  PotentialTensor gate({T});
  for (int t = 0; t < T; ++t) gate[static_cast<std::size_t>(t)] = ranges[static_cast<std::size_t>(t)].empty() ? 0.0 : 1.0;
  return fusion_.forward(tp, u4, nullptr, ranges, name, &gate);
}

std::array<Var, 4> SegHead::pyramid(Tape& tp, const Encoder::Taps& feats, const std::string& name) {
  const std::array<Var, 4> u = {feats.u1, feats.u2, feats.u3, feats.u4};
  std::array<Var, 4> o;
  for (int l = 3; l >= 0; --l) {
    const std::string lat = sub(name, "lat" + std::to_string(l + 1));
    Var s = lat_sn_[l].fire(tp, u[l], nullptr, sub(lat, "sn"));
    Var y = lat_[l].forward(tp, s, lat);
    if (l < 3) {
      // u3 and u4 share a resolution.
      const int f = y.dims()[1] / o[l + 1].dims()[1];
      y = ops::add(y, ops::upsample_nearest(o[l + 1], f), sub(lat, "add_up"));
    }
    o[l] = y;
  }
  return o;
}

Var SegHead::logits(Tape& tp, const std::array<Var, 4>& pyr, int full_h, int full_w, const std::string& name) {
  Var acc;
  for (int l = 0; l < 4; ++l) {
    const std::string out = sub(name, std::to_string(l + 1));
    Var s = out_sn_[l].fire(tp, pyr[l], nullptr, sub(out, "sn"));
    Var y = out_[l].forward(tp, s, out);
    const int h = y.dims()[1], w = y.dims()[2];
    if (full_h % h != 0 || full_w % w != 0 || full_h / h != full_w / w)
      throw ShapeError("pyramid level " + std::to_string(l + 1) + " does not tile the output size");
    y = ops::upsample_nearest(y, full_h / h);
    acc = acc.valid() ? ops::add(acc, y, sub(out, "sum")) : y;
  }
  return acc;
}

void SegHead::collect(ParamList& out) {
  fusion_.collect(out);
  for (int l = 0; l < 4; ++l) {
    lat_sn_[l].collect(out);
    lat_[l].collect(out);
    out_sn_[l].collect(out);
    out_[l].collect(out);
  }
}

std::size_t SegHead::param_count() {
  ParamList p;
  collect(p);
  return count_params(p);
}

PotentialTensor memory_read_fuse(SegHead& head, const PotentialTensor& u4_now, const MemoryBank& bank) {
  Dims d = u4_now.dims();
  if (d.size() == 4) {
    if (d[0] != 1) throw ShapeError("memory read takes a single frame, got " + dims_to_string(d));
    d.erase(d.begin());
  }
  if (d.size() != 3) throw ShapeError("memory read expects [h,w,D], got " + dims_to_string(u4_now.dims()));
  const std::size_t frame = numel(d);
  const int n = static_cast<int>(bank.size());
  if (n > head.config().memory_capacity) throw ValueError("bank holds more frames than the head can attend to");
  std::vector<double> data;
  data.reserve(frame * static_cast<std::size_t>(n + 1));
  for (const auto& e : bank.entries()) {
    if (numel(e.dims()) != frame) throw ShapeError("memory entry does not match the current frame");
    data.insert(data.end(), e.data().begin(), e.data().end());
  }
  data.insert(data.end(), u4_now.data().begin(), u4_now.data().end());
  TapeOptions o;
  o.record = false;
  Tape tp(o);
  Var fused = head.fuse(tp, tp.constant(PotentialTensor({n + 1, d[0], d[1], d[2]}, std::move(data))), {});
  return ops::slice0(fused, n, n + 1).value();
}

SegModel::SegModel(const EncoderConfig& enc_cfg, const HeadConfig& head_cfg, std::uint64_t seed)
    : encoder_(enc_cfg, seed), head_(head_cfg, enc_cfg.stage_channels(), enc_cfg.spikes, enc_cfg.init, seed + 1) {}

Var SegModel::forward(Tape& tp, Var clip) {
  Encoder::Taps t = encoder_.forward(tp, clip, nullptr);
  t.u4 = head_.fuse(tp, t.u4);
  const auto pyr = head_.pyramid(tp, t);
  return head_.logits(tp, pyr, clip.dims()[1], clip.dims()[2]);
}

ParamList SegModel::params() {
  ParamList p = encoder_.params();
  head_.collect(p);
  return p;
}

ParamList SegModel::head_params() {
  ParamList p;
  head_.collect(p);
  return p;
}

FinetuneMetrics finetune_step(SegModel& model, const std::vector<const LabeledClip*>& batch, AdamW& opt, double lr,
                              bool freeze_encoder) {
  if (batch.empty()) throw ValueError("empty fine-tuning batch");
  const ParamList all = model.params();
  FreezeGuard guard(model.encoder_params(), freeze_encoder);
  zero_grads(all);
  const int K = model.head().config().classes;
  const double gamma = model.head().config().focal_gamma;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  FinetuneMetrics m;
  std::vector<std::vector<int>> preds, gts;
  for (const LabeledClip* c : batch) {
    const Dims& cd = c->clip.dims();
    Tape tp;
    Var probs = ops::softmax_last(model.forward(tp, tp.constant(c->clip)));
    const PotentialTensor y = one_hot(c->labels, {cd[0], cd[1], cd[2]}, K);
    Var ce = ops::ce_loss(probs, y);
    Var fl = ops::focal_loss(probs, y, gamma);
    Var loss = ops::scale(ops::add(ce, fl), inv_b);
    m.ce += ce.value()[0] * inv_b;
    m.focal += fl.value()[0] * inv_b;
    preds.push_back(argmax_last(probs.value()));
    gts.push_back(c->labels);
    tp.backward(loss);
  }
  opt.step(all, lr);
  m.total = m.ce + m.focal;
  m.miou_batch = miou(preds, gts, K).miou;
  return m;
}

std::vector<int> argmax_last(const PotentialTensor& x) {
  if (x.rank() < 1) throw ShapeError("argmax needs rank >= 1");
  const int K = x.dims().back();
  const std::size_t n = x.numel() / static_cast<std::size_t>(K);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (x[i * K + k] > x[i * K + best]) best = k;
    out[i] = best;
  }
  return out;
}

std::vector<int> predict_labels(SegModel& model, const PotentialTensor& clip) {
  TapeOptions o;
  o.record = false;
  Tape tp(o);
  return argmax_last(model.forward(tp, tp.constant(clip)).value());
}

}  // namespace spikeseg
