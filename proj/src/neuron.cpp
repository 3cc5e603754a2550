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

#include "spikeseg/neuron.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spikeseg {

void NeuronParams::validate() const {
  if (!(u_th > 0.0)) throw ValueError("u_th must be > 0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValueError("beta must lie in [0,1]");
  if (!(scale >= 1.0)) throw ValueError("threshold scale must be >= 1");
  if (z_levels < 1) throw ValueError("z_levels must be >= 1");
  if (!(surrogate_width > 0.0)) throw ValueError("surrogate width must be > 0");
}

SpikeTensor heaviside(const PotentialTensor& h, double threshold) {
  if (!(threshold > 0.0)) throw ValueError("heaviside threshold must be > 0");
  SpikeTensor out(h.dims(), 2);
  for (std::size_t i = 0; i < h.numel(); ++i)
    if (h[i] >= threshold) out.set(i, 1);
  return out;
}

namespace {

void check_same(const Dims& a, const Dims& b) {
  if (a != b) throw ShapeError("neuron state " + dims_to_string(a) + " vs input " + dims_to_string(b));
}

PotentialTensor charge(const NeuronState& state, const PotentialTensor& x, double beta) {
  check_same(state.u.dims(), x.dims());
  PotentialTensor h(x.dims());
  auto hd = h.mutable_data();
  for (std::size_t i = 0; i < x.numel(); ++i) hd[i] = beta * state.u[i] + x[i];
  return h;
}

PotentialTensor frame(const PotentialTensor& seq, int t) {
  Dims d(seq.dims().begin() + 1, seq.dims().end());
  const std::size_t n = numel(d);
  std::vector<double> data(seq.data().begin() + static_cast<std::ptrdiff_t>(t * n),
                           seq.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
  PotentialTensor out(d);
  std::copy(data.begin(), data.end(), out.mutable_data().begin());
  return out;
}

template <typename Step>
SpikeTensor fold_time(const PotentialTensor& u_seq, const NeuronParams& p, std::uint8_t alphabet,
                      Step step) {
  if (u_seq.rank() < 1 || u_seq.dim(0) < 1) throw ShapeError("temporal input needs T >= 1");
  const int steps = u_seq.dim(0);
  Dims site_dims(u_seq.dims().begin() + 1, u_seq.dims().end());
  const std::size_t n = numel(site_dims);
  NeuronState state = NeuronState::zeros(site_dims);
  std::vector<std::uint8_t> out(u_seq.numel());
  for (int t = 0; t < steps; ++t) {
    auto [s, next] = step(state, frame(u_seq, t), p);
    std::copy(s.data().begin(), s.data().end(), out.begin() + static_cast<std::ptrdiff_t>(t * n));
    state = std::move(next);
  }
  return SpikeTensor(u_seq.dims(), std::move(out), alphabet);
}

}  // namespace

std::pair<SpikeTensor, NeuronState> lif_step(const NeuronState& state, const PotentialTensor& x,
                                             const NeuronParams& p) {
  p.validate();
  const double th = p.threshold();
  PotentialTensor h = charge(state, x, p.beta);
  SpikeTensor s = heaviside(h, th);
  auto hd = h.mutable_data();
  for (std::size_t i = 0; i < h.numel(); ++i) hd[i] -= th * s[i];
  return {std::move(s), NeuronState{std::move(h)}};
}

SpikeTensor temporal_spike(const PotentialTensor& u_seq, const NeuronParams& p) {
  return fold_time(u_seq, p, 2, lif_step);
}

std::pair<SpikeTensor, NeuronState> intif_step(const NeuronState& state, const PotentialTensor& x,
                                               const NeuronParams& p) {
  p.validate();
  if (p.z_levels < 2) throw ValueError("IntIF needs z_levels >= 2");
  const double th = p.threshold();
  PotentialTensor h = charge(state, x, p.beta);
  SpikeTensor s(h.dims(), static_cast<std::uint8_t>(p.z_levels));
  auto hd = h.mutable_data();
  for (std::size_t i = 0; i < h.numel(); ++i) {
    const double level = std::clamp(std::floor(hd[i] / th), 0.0, static_cast<double>(p.z_levels - 1));
    s.set(i, static_cast<std::uint8_t>(level));
    hd[i] -= th * level;
  }
  return {std::move(s), NeuronState{std::move(h)}};
}

SpikeTensor temporal_intif(const PotentialTensor& u_seq, const NeuronParams& p) {
  if (p.z_levels < 2) throw ValueError("IntIF needs z_levels >= 2");
  return fold_time(u_seq, p, static_cast<std::uint8_t>(p.z_levels), intif_step);
}

SpikeTensor unfold_intif(const SpikeTensor& s, int z) {
  if (z < 2 || z > 255) throw ValueError("unfold_intif needs 2 <= z <= 255");
  Dims dims = s.dims();
  dims.insert(dims.begin(), z);
  SpikeTensor out(dims, 2);
  const std::size_t n = s.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const int v = s[i];
    if (v >= z) throw ValueError("spike value " + std::to_string(v) + " >= Z=" + std::to_string(z));
    for (int k = 0; k < v; ++k) out.set(static_cast<std::size_t>(k) * n + i, 1);
  }
  return out;
}

SpikeTensor fold_substeps(const SpikeTensor& unfolded, int z) {
  if (unfolded.rank() < 1 || unfolded.dim(0) != z) throw ShapeError("leading axis must equal z");
  Dims dims(unfolded.dims().begin() + 1, unfolded.dims().end());
  const std::size_t n = numel(dims);
  SpikeTensor out(dims, static_cast<std::uint8_t>(z));
  for (std::size_t i = 0; i < n; ++i) {
    int v = 0;
    for (int k = 0; k < z; ++k) v += unfolded[static_cast<std::size_t>(k) * n + i];
    out.set(i, static_cast<std::uint8_t>(v));
  }
  return out;
}

double atan_primitive(double x, double width) {
  return std::atan(std::numbers::pi * width * x / 2.0) / std::numbers::pi + 0.5;
}

double atan_surrogate(double x, double width) {
  const double a = std::numbers::pi * width * x / 2.0;
  return width / (2.0 * (1.0 + a * a));
}

}  // namespace spikeseg
