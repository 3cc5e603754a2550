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

#include "spikeseg/attention.hpp"

#include <algorithm>
#include <memory>

#include "spikeseg/simd/kernels.hpp"

namespace spikeseg {

void AttentionOperands::validate() const {
  if (q.rank() != 2 || q.dims() != k.dims() || q.dims() != v.dims())
    throw ShapeError("attention operands must share one [(T*N), D] shape");
  if (frames < 1 || q.dim(0) % frames != 0) throw ShapeError("token count is not a multiple of the frame count");
  if (q.dim(1) < 1 || q.dim(0) < 1) throw ShapeError("attention operands are empty");
  for (const SpikeTensor* s : {&q, &k, &v})
    for (std::uint8_t x : s->data())
      if (x > 1) throw ValueError("attention operands must be binary");
}

std::vector<FrameRange> scope_ranges(int frames, TemporalScope scope) {
  std::vector<FrameRange> r(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) r[static_cast<std::size_t>(t)] = {0, scope == TemporalScope::kJoint ? frames : t + 1};
  return r;
}

std::vector<FrameRange> memory_ranges(int frames, int capacity) {
  if (capacity < 0) throw ValueError("memory capacity must be >= 0");
  std::vector<FrameRange> r(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) r[static_cast<std::size_t>(t)] = {std::max(0, t - capacity), t};
  return r;
}

namespace {

void check_ranges(const std::vector<FrameRange>& ranges, int frames) {
  if (static_cast<int>(ranges.size()) != frames) throw ShapeError("need one frame range per query frame");
  for (const FrameRange& r : ranges)
    if (r.lo < 0 || r.hi > frames || r.lo > r.hi) throw ValueError("frame range out of bounds");
}

const std::uint8_t* row(const SpikeTensor& s, std::size_t r, int d) { return s.data().data() + r * d; }

}  // namespace

int signed_dot(std::span<const std::uint8_t> q, std::span<const std::uint8_t> k) {
  if (q.size() != k.size()) throw ShapeError("signed_dot length mismatch");
  int s = 0;
  for (std::size_t i = 0; i < q.size(); ++i) s += (q[i] == k[i]) ? 1 : -1;
  return s;
}

int hamming(std::span<const std::uint8_t> q, std::span<const std::uint8_t> k) {
  if (q.size() != k.size()) throw ShapeError("hamming length mismatch");
  int s = 0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q[i] != k[i];
  return s;
}

std::vector<std::int32_t> key_value_matrix(const AttentionOperands& a, int lo, int hi) {
  a.validate();
  const int D = a.width(), N = a.tokens_per_frame();
  const std::size_t d = static_cast<std::size_t>(D);
  const auto& k = simd::kernels();
  std::vector<std::int32_t> w(d * d, 0), vrow(d);
  for (int m = lo * N; m < hi * N; ++m) {
    const std::uint8_t* kr = row(a.k, static_cast<std::size_t>(m), D);
    const std::uint8_t* vr = row(a.v, static_cast<std::size_t>(m), D);
    std::copy(vr, vr + D, vrow.begin());
    for (int i = 0; i < D; ++i) (kr[i] ? k.add_i32 : k.sub_i32)(vrow.data(), w.data() + i * d, d);
  }
  return w;
}

std::vector<std::int32_t> sdha_charge(const AttentionOperands& a, const std::vector<FrameRange>& ranges,
                                      OpCounter* counter, const std::string& name) {
  a.validate();
  const int T = a.frames, N = a.tokens_per_frame(), D = a.width();
  check_ranges(ranges, T);
  const std::size_t d = static_cast<std::size_t>(D);
  const auto& k = simd::kernels();
  std::vector<std::int32_t> out(static_cast<std::size_t>(a.tokens()) * d, 0);
  std::vector<std::int32_t> w(d * d, 0), vrow(d);
  std::uint64_t ac = 0, dense = 0;
  bool have = false;
  int clo = 0, chi = 0;
  for (int t = 0; t < T; ++t) {
    const FrameRange r = ranges[static_cast<std::size_t>(t)];
    // Extend the running key-value matrix when the window only grows at its end.
    if (!(have && r.lo == clo && r.hi >= chi)) {
      std::fill(w.begin(), w.end(), 0);
      clo = chi = r.lo;
      have = true;
    }
    for (int m = chi * N; m < r.hi * N; ++m) {
      const std::uint8_t* kr = row(a.k, static_cast<std::size_t>(m), D);
      const std::uint8_t* vr = row(a.v, static_cast<std::size_t>(m), D);
      std::copy(vr, vr + D, vrow.begin());
      const auto active = static_cast<std::uint64_t>(std::count(vr, vr + D, 1));
      for (int i = 0; i < D; ++i) (kr[i] ? k.add_i32 : k.sub_i32)(vrow.data(), w.data() + i * d, d);
      ac += d * active;
      dense += d * d;
    }
    chi = r.hi;
    if (r.empty()) continue;
    for (int n = t * N; n < (t + 1) * N; ++n) {
      const std::uint8_t* qr = row(a.q, static_cast<std::size_t>(n), D);
      std::int32_t* o = out.data() + static_cast<std::size_t>(n) * d;
      for (int i = 0; i < D; ++i) (qr[i] ? k.add_i32 : k.sub_i32)(w.data() + i * d, o, d);
      ac += d * d;
      dense += d * d;
    }
  }
  if (counter) counter->add_synaptic(name, dense, ac);
  return out;
}

std::vector<std::int32_t> sdha_charge_naive(const AttentionOperands& a, const std::vector<FrameRange>& ranges,
                                            OpCounter* counter, const std::string& name) {
  a.validate();
  const int T = a.frames, N = a.tokens_per_frame(), D = a.width();
  check_ranges(ranges, T);
  std::vector<std::int32_t> out(static_cast<std::size_t>(a.tokens()) * D, 0);
  std::uint64_t ac = 0, dense = 0;
  for (int t = 0; t < T; ++t) {
    const FrameRange r = ranges[static_cast<std::size_t>(t)];
    for (int n = t * N; n < (t + 1) * N; ++n) {
      std::span<const std::uint8_t> qr(row(a.q, static_cast<std::size_t>(n), D), static_cast<std::size_t>(D));
      std::int32_t* o = out.data() + static_cast<std::size_t>(n) * D;
      for (int m = r.lo * N; m < r.hi * N; ++m) {
        std::span<const std::uint8_t> kr(row(a.k, static_cast<std::size_t>(m), D), static_cast<std::size_t>(D));
        const int score = signed_dot(qr, kr);
        const std::uint8_t* vr = row(a.v, static_cast<std::size_t>(m), D);
        for (int e = 0; e < D; ++e)
          if (vr[e]) {
            o[e] += score;
            ++ac;
          }
        ac += static_cast<std::uint64_t>(D);
        dense += 2 * static_cast<std::uint64_t>(D);
      }
    }
  }
  if (counter) counter->add_synaptic(name, dense, ac);
  return out;
}

PotentialTensor charge_to_potential(const std::vector<std::int32_t>& charge, int frames, int width) {
  const std::size_t per = static_cast<std::size_t>(frames) * width;
  if (frames < 1 || width < 1 || charge.size() % per != 0) throw ShapeError("charge size does not match frames*width");
  const int n = static_cast<int>(charge.size() / per);
  return PotentialTensor({frames, n, width}, std::vector<double>(charge.begin(), charge.end()));
}

namespace {

SpikeTensor spike_charge(const std::vector<std::int32_t>& charge, const AttentionOperands& a, const SdhaOptions& opt) {
  NeuronParams p = opt.neuron;
  p.scale = 2.0 * a.width();
  SpikeTensor s = temporal_spike(charge_to_potential(charge, a.frames, a.width()), p);
  return s.reshaped({a.tokens(), a.width()});
}

}  // namespace

SpikeTensor sdha(const AttentionOperands& a, const SdhaOptions& opt, OpCounter* counter) {
  return spike_charge(sdha_charge(a, scope_ranges(a.frames, opt.scope), counter), a, opt);
}

SpikeTensor sdha_naive(const AttentionOperands& a, const SdhaOptions& opt, OpCounter* counter) {
  return spike_charge(sdha_charge_naive(a, scope_ranges(a.frames, opt.scope), counter), a, opt);
}

namespace ops {

Var sdha_charge(Var q, Var k, Var v, const std::vector<FrameRange>& ranges, const std::string& name) {
  if (!q.valid() || q.tape != k.tape || q.tape != v.tape) throw std::logic_error("sdha operands on different tapes");
  Tape& tp = *q.tape;
  const PotentialTensor& Q = q.value();
  const PotentialTensor& K = k.value();
  const PotentialTensor& V = v.value();
  if (Q.dims() != K.dims() || Q.dims() != V.dims() || Q.rank() < 2)
    throw ShapeError("sdha operands must share one [T, ..., D] shape");
  const int T = Q.dim(0), D = Q.dims().back();
  check_ranges(ranges, T);
  const std::size_t d = static_cast<std::size_t>(D);
  const std::size_t N = Q.numel() / (static_cast<std::size_t>(T) * d);
  const auto& kt = simd::kernels();

  // Per-frame W_f = sum over the frame's tokens of (2k-1)^T v.
  std::vector<double> wf(static_cast<std::size_t>(T) * d * d, 0.0), sgn(d);
  for (int f = 0; f < T; ++f)
    for (std::size_t m = 0; m < N; ++m) {
      const std::size_t r = (static_cast<std::size_t>(f) * N + m) * d;
      for (std::size_t i = 0; i < d; ++i) sgn[i] = 2.0 * K[r + i] - 1.0;
      kt.outer_acc(sgn.data(), V.data().data() + r, wf.data() + static_cast<std::size_t>(f) * d * d, d, d);
    }
  // W(t) summed over the visible frames.
  auto wt = std::make_shared<std::vector<double>>(static_cast<std::size_t>(T) * d * d, 0.0);
  for (int t = 0; t < T; ++t) {
    const FrameRange r = ranges[static_cast<std::size_t>(t)];
    for (int f = r.lo; f < r.hi; ++f)
      kt.add(wf.data() + static_cast<std::size_t>(f) * d * d, wt->data() + static_cast<std::size_t>(t) * d * d, d * d);
  }
  PotentialTensor out(Q.dims());
  for (int t = 0; t < T; ++t) {
    if (ranges[static_cast<std::size_t>(t)].empty()) continue;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t r = (static_cast<std::size_t>(t) * N + n) * d;
      for (std::size_t i = 0; i < d; ++i) sgn[i] = 2.0 * Q[r + i] - 1.0;
      kt.rows_axpy(sgn.data(), wt->data() + static_cast<std::size_t>(t) * d * d, out.mutable_data().data() + r, d, d);
    }
  }

  if (tp.counter() && !name.empty() && tp.spike_mode() == SpikeMode::kSurrogate) {
    // Ops of the running-accumulation schedule used by the integer kernel.
    std::uint64_t ac = 0, dense = 0;
    bool have = false;
    int clo = 0, chi = 0;
    for (int t = 0; t < T; ++t) {
      const FrameRange r = ranges[static_cast<std::size_t>(t)];
      if (!(have && r.lo == clo && r.hi >= chi)) {
        clo = chi = r.lo;
        have = true;
      }
      for (std::size_t m = static_cast<std::size_t>(chi) * N; m < static_cast<std::size_t>(r.hi) * N; ++m) {
        std::uint64_t active = 0;
        for (std::size_t e = 0; e < d; ++e) active += V[m * d + e] != 0.0;
        ac += d * active;
        dense += d * d;
      }
      chi = r.hi;
      if (!r.empty()) {
        ac += N * d * d;
        dense += N * d * d;
      }
    }
    tp.counter()->add_synaptic(name, dense, ac);
  }

  auto backward = [q, k, v, ranges, wt, T, N, d](Tape& t, std::span<const double> dy, const PotentialTensor&) {
    const auto& kt = simd::kernels();
    const PotentialTensor& Q = t.value(q);
    const PotentialTensor& K = t.value(k);
    const PotentialTensor& V = t.value(v);
    double* dq = t.requires_grad(q) ? t.grad(q).data() : nullptr;
    double* dk = t.requires_grad(k) ? t.grad(k).data() : nullptr;
    double* dv = t.requires_grad(v) ? t.grad(v).data() : nullptr;
    std::vector<double> sgn(d), dwt(static_cast<std::size_t>(T) * d * d, 0.0);
    for (int f = 0; f < T; ++f) {
      if (ranges[static_cast<std::size_t>(f)].empty()) continue;
      double* dw = dwt.data() + static_cast<std::size_t>(f) * d * d;
      const double* w = wt->data() + static_cast<std::size_t>(f) * d * d;
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t r = (static_cast<std::size_t>(f) * N + n) * d;
        for (std::size_t i = 0; i < d; ++i) sgn[i] = 2.0 * Q[r + i] - 1.0;
        kt.outer_acc(sgn.data(), dy.data() + r, dw, d, d);
        if (dq) {
          std::vector<double> tmp(d, 0.0);
          kt.rows_dot(w, dy.data() + r, tmp.data(), d, d);
          kt.axpy(2.0, tmp.data(), dq + r, d);
        }
      }
    }
    if (!dk && !dv) return;
    std::vector<double> g(d * d), tmp(d);
    for (int f = 0; f < T; ++f) {
      std::fill(g.begin(), g.end(), 0.0);
      bool any = false;
      for (int tq = 0; tq < T; ++tq) {
        const FrameRange r = ranges[static_cast<std::size_t>(tq)];
        if (f >= r.lo && f < r.hi) {
          kt.add(dwt.data() + static_cast<std::size_t>(tq) * d * d, g.data(), d * d);
          any = true;
        }
      }
      if (!any) continue;
      for (std::size_t m = 0; m < N; ++m) {
        const std::size_t r = (static_cast<std::size_t>(f) * N + m) * d;
        if (dk) {
          std::fill(tmp.begin(), tmp.end(), 0.0);
          kt.rows_dot(g.data(), V.data().data() + r, tmp.data(), d, d);
          kt.axpy(2.0, tmp.data(), dk + r, d);
        }
        if (dv) {
          for (std::size_t i = 0; i < d; ++i) sgn[i] = 2.0 * K[r + i] - 1.0;
          kt.rows_axpy(sgn.data(), g.data(), dv + r, d, d);
        }
      }
    }
  };
  return tp.emit(std::move(out), {q, k, v}, backward);
}

}  // namespace ops

}  // namespace spikeseg
