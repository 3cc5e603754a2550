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

#include "spikeseg/losses.hpp"

#include <cmath>
#include <memory>

namespace spikeseg {

PotentialTensor one_hot(const std::vector<int>& labels, const Dims& thw, int classes) {
  if (classes < 2) throw ValueError("need at least 2 classes");
  if (labels.size() != numel(thw)) throw ShapeError("label count does not match " + dims_to_string(thw));
  Dims d = thw;
  d.push_back(classes);
  PotentialTensor y(d);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw ValueError("label " + std::to_string(labels[i]) + " out of range");
    y[i * static_cast<std::size_t>(classes) + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return y;
}

namespace {

void check_probs(const PotentialTensor& y, const PotentialTensor& p) {
  if (y.dims() != p.dims() || p.rank() < 2) throw ShapeError("labels and probabilities must share [..., K] dims");
  const int K = p.dims().back();
  const std::size_t rows = p.numel() / static_cast<std::size_t>(K);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) {
      const double v = p[r * K + k];
      if (!(v >= 0.0 && v <= 1.0)) throw ValueError("probability outside [0,1]");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) throw ValueError("probability row does not sum to 1");
  }
}

double pixels(const PotentialTensor& p) { return static_cast<double>(p.numel() / static_cast<std::size_t>(p.dims().back())); }

// Per-element focal term and its derivative in p.
double focal_term(double p, double gamma) {
  return -std::pow(1.0 - p, gamma) * std::log(std::max(p, kLogEps));
}

double focal_grad(double p, double gamma) {
  const double lg = std::log(std::max(p, kLogEps));
  double d = gamma > 0.0 && p < 1.0 ? gamma * std::pow(1.0 - p, gamma - 1.0) * lg : 0.0;
  if (p >= kLogEps) d -= std::pow(1.0 - p, gamma) / p;
  return d;
}

void check_recon(const PotentialTensor& clip, const PotentialTensor& recon, const PotentialTensor& keep) {
  if (clip.dims() != recon.dims() || clip.rank() != 4) throw ShapeError("reconstruction and clip dims differ");
  if (keep.rank() != 4 || keep.dim(3) != 1 || keep.dim(0) != clip.dim(0) || keep.dim(1) != clip.dim(1) ||
      keep.dim(2) != clip.dim(2))
    throw ShapeError("pixel mask " + dims_to_string(keep.dims()) + " does not fit clip " + dims_to_string(clip.dims()));
}

std::size_t masked_pixels(const PotentialTensor& keep) {
  std::size_t n = 0;
  for (double v : keep.data()) n += v == 0.0;
  if (n == 0) throw ValueError("reconstruction loss needs at least one masked pixel");
  return n;
}

}  // namespace

double ce_loss(const PotentialTensor& y, const PotentialTensor& p) {
  check_probs(y, p);
  double s = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i)
    if (y[i] != 0.0) s -= y[i] * std::log(std::max(p[i], kLogEps));
  return s / pixels(p);
}

double focal_loss(const PotentialTensor& y, const PotentialTensor& p, double gamma) {
  if (!(gamma >= 0.0)) throw ValueError("focal gamma must be >= 0");
  check_probs(y, p);
  double s = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i)
    if (y[i] != 0.0) s += y[i] * focal_term(p[i], gamma);
  return s / pixels(p);
}

double recon_loss(const PotentialTensor& clip, const PotentialTensor& recon, const PotentialTensor& keep) {
  check_recon(clip, recon, keep);
  const std::size_t n = masked_pixels(keep);
  const std::size_t c = static_cast<std::size_t>(clip.dim(3));
  double s = 0.0;
  for (std::size_t i = 0; i < clip.numel(); ++i)
    if (keep[i / c] == 0.0) s += (recon[i] - clip[i]) * (recon[i] - clip[i]);
  return s / static_cast<double>(n);
}

namespace ops {

Var ce_loss(Var probs, const PotentialTensor& y) {
  const double v = spikeseg::ce_loss(y, probs.value());
  auto yc = std::make_shared<const PotentialTensor>(y);
  const double n = pixels(probs.value());
  return probs.tape->emit(PotentialTensor({1}, {v}), {probs},
                          [probs, yc, n](Tape& t, std::span<const double> dy, const PotentialTensor&) {
                            const auto& P = t.value(probs);
                            auto& g = t.grad(probs);
                            for (std::size_t i = 0; i < P.numel(); ++i)
                              if ((*yc)[i] != 0.0 && P[i] >= kLogEps) g[i] -= dy[0] * (*yc)[i] / (P[i] * n);
                          });
}

Var focal_loss(Var probs, const PotentialTensor& y, double gamma) {
  const double v = spikeseg::focal_loss(y, probs.value(), gamma);
  auto yc = std::make_shared<const PotentialTensor>(y);
  const double n = pixels(probs.value());
  return probs.tape->emit(PotentialTensor({1}, {v}), {probs},
                          [probs, yc, n, gamma](Tape& t, std::span<const double> dy, const PotentialTensor&) {
                            const auto& P = t.value(probs);
                            auto& g = t.grad(probs);
                            for (std::size_t i = 0; i < P.numel(); ++i)
                              if ((*yc)[i] != 0.0) g[i] += dy[0] * (*yc)[i] * focal_grad(P[i], gamma) / n;
                          });
}

Var recon_loss(Var recon, const PotentialTensor& clip, const PotentialTensor& keep) {
  const double v = spikeseg::recon_loss(clip, recon.value(), keep);
  const double n = static_cast<double>(masked_pixels(keep));
  auto cc = std::make_shared<const PotentialTensor>(clip);
  auto kc = std::make_shared<const PotentialTensor>(keep);
  return recon.tape->emit(PotentialTensor({1}, {v}), {recon},
                          [recon, cc, kc, n](Tape& t, std::span<const double> dy, const PotentialTensor&) {
                            const auto& R = t.value(recon);
                            auto& g = t.grad(recon);
                            const std::size_t c = static_cast<std::size_t>(R.dim(3));
                            for (std::size_t i = 0; i < R.numel(); ++i)
                              if ((*kc)[i / c] == 0.0) g[i] += dy[0] * 2.0 * (R[i] - (*cc)[i]) / n;
                          });
}

}  // namespace ops

}  // namespace spikeseg
