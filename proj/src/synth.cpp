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

#include "spikeseg/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace spikeseg {

namespace {

constexpr double kPi = std::numbers::pi;

// Foreground class colours; class k uses entry (k-1) mod size.
constexpr std::array<std::array<double, 3>, 4> kInk = {{
    {0.42, 0.04, 0.05},
    {0.15, 0.55, 0.25},
    {0.20, 0.25, 0.65},
    {0.75, 0.65, 0.10},
}};

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng_()); }
  double normal() {
    // Box-Muller; 1-u keeps the log argument in (0,1].
    const double u1 = 1.0 - unit_uniform(rng_()), u2 = unit_uniform(rng_());
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
  bool coin() { return (rng_() >> 63) != 0; }

 private:
  std::mt19937_64 rng_;
};

struct Blob {
  int cls = 1;
  double x = 0, y = 0, vx = 0, vy = 0;
  double r0 = 0, growth = 0;
  double ph2 = 0, ph3 = 0, w2 = 0, w3 = 0;

  double radius(double theta, int t, double deform) const {
    const double r = r0 * (1.0 + growth * t);
    return r * (1.0 + deform * (0.6 * std::cos(2.0 * theta + ph2 + w2 * t) + 0.4 * std::cos(3.0 * theta + ph3 + w3 * t)));
  }
};

std::uint64_t clip_seed(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void reflect(double& p, double& v, double lo, double hi) {
  for (int guard = 0; guard < 8 && (p < lo || p > hi); ++guard) {
    if (p < lo) p = 2.0 * lo - p;
    if (p > hi) p = 2.0 * hi - p;
    v = -v;
  }
  p = std::clamp(p, lo, hi);
}

constexpr double kMaxGrowth = 0.08;

}  // namespace

double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

void SynthConfig::validate() const {
  if (height < 1 || width < 1 || frames < 1) throw ValueError("synthetic canvas must be non-empty");
  if (classes < 2) throw ValueError("synthetic data needs at least 2 classes");
  if (blobs < 1) throw ValueError("at least one blob per class");
  if (!(area_fraction >= 0.0 && area_fraction < 1.0)) throw ValueError("area_fraction must be in [0,1)");
  if (!(radius_min > 0.0) || radius_max < radius_min) throw ValueError("need 0 < radius_min <= radius_max");
  if (!(deform >= 0.0 && deform < 1.0)) throw ValueError("deform must be in [0,1)");
  if (!(speed_max >= 0.0) || !(noise >= 0.0)) throw ValueError("speed and noise must be >= 0");
  const double r = area_fraction > 0.0 ? std::sqrt(area_fraction * height * width / kPi) : radius_max;
  const double reach = r * (1.0 + kMaxGrowth * (frames - 1)) * (1.0 + deform);
  if (2.0 * reach >= std::min(height, width))
    throw ValueError("blobs of radius " + std::to_string(r) + " cannot fit a " + std::to_string(height) + "x" +
                     std::to_string(width) + " canvas");
}

std::vector<ClipRecord> synth_dataset(const SynthConfig& cfg, int n_clips, std::uint64_t seed) {
  cfg.validate();
  if (n_clips < 0) throw ValueError("clip count must be >= 0");
  const int H = cfg.height, W = cfg.width, T = cfg.frames;
  std::vector<ClipRecord> out;
  out.reserve(static_cast<std::size_t>(n_clips));
  for (int n = 0; n < n_clips; ++n) {
    Draw d(clip_seed(seed, static_cast<std::uint64_t>(n)));
    ClipRecord rec;
    rec.id = "synth" + std::to_string(seed) + "_" + std::to_string(n);

    const std::array<double, 3> tissue = {d.uniform(0.55, 0.75), d.uniform(0.22, 0.35), d.uniform(0.20, 0.30)};
    struct Wave {
      double fx, fy, ph, amp;
    };
    std::array<Wave, 3> waves;
    for (auto& w : waves) w = {d.uniform(-0.4, 0.4), d.uniform(-0.4, 0.4), d.uniform(0, 2 * kPi), d.uniform(0.03, 0.08)};
    const double pan_x = d.uniform(-1.0, 1.0), pan_y = d.uniform(-1.0, 1.0);

    std::vector<Blob> blobs;
    for (int k = 1; k < cfg.classes; ++k)
      for (int b = 0; b < cfg.blobs; ++b) {
        Blob bl;
        bl.cls = k;
        bl.r0 = cfg.area_fraction > 0.0 ? std::sqrt(cfg.area_fraction * H * W / kPi)
                                        : d.uniform(cfg.radius_min, cfg.radius_max);
        bl.growth = d.uniform(-0.04, kMaxGrowth);
        const double m = bl.r0 * (1.0 + kMaxGrowth * (T - 1)) * (1.0 + cfg.deform);
        bl.x = d.uniform(m, W - m);
        bl.y = d.uniform(m, H - m);
        const double ang = d.uniform(0, 2 * kPi), sp = d.uniform(0, cfg.speed_max);
        bl.vx = sp * std::cos(ang);
        bl.vy = sp * std::sin(ang);
        bl.ph2 = d.uniform(0, 2 * kPi);
        bl.ph3 = d.uniform(0, 2 * kPi);
        bl.w2 = d.uniform(-0.6, 0.6);
        bl.w3 = d.uniform(-0.6, 0.6);
        blobs.push_back(bl);
      }

    const bool occluded = cfg.occluders && d.coin();
    const double bar_ang = d.uniform(0, kPi), bar_off = d.uniform(-0.25, 0.25) * std::min(H, W),
                 bar_v = d.uniform(-1.5, 1.5), bar_half = d.uniform(2.0, 3.5);

    std::vector<std::vector<std::uint8_t>> labels;
    for (int t = 0; t < T; ++t) {
      RgbImage img{H, W, std::vector<std::uint8_t>(static_cast<std::size_t>(H) * W * 3)};
      std::vector<std::uint8_t> lab(static_cast<std::size_t>(H) * W, 0);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double sx = x + pan_x * t, sy = y + pan_y * t;
          double tex = 0.0;
          for (const auto& w : waves) tex += w.amp * std::sin(w.fx * sx + w.fy * sy + w.ph);
          std::array<double, 3> c = {tissue[0] + tex, tissue[1] + 0.6 * tex, tissue[2] + 0.5 * tex};
          int cls = 0;
          for (const Blob& bl : blobs) {
            const double dx = x + 0.5 - bl.x, dy = y + 0.5 - bl.y;
            const double dist = std::hypot(dx, dy);
            const double r = bl.radius(std::atan2(dy, dx), t, cfg.deform);
            if (dist < r) {
              cls = bl.cls;
              const auto& ink = kInk[static_cast<std::size_t>(bl.cls - 1) % kInk.size()];
              const double shade = 0.85 + 0.15 * (1.0 - dist / r);
              c = {ink[0] * shade, ink[1] * shade, ink[2] * shade};
            }
          }
          if (occluded) {
            const double cx = W / 2.0, cy = H / 2.0;
            const double dist = (x + 0.5 - cx) * std::sin(bar_ang) - (y + 0.5 - cy) * std::cos(bar_ang) -
                                (bar_off + bar_v * t);
            if (std::abs(dist) < bar_half) {
              cls = 0;
              c = {0.72, 0.74, 0.78};
            }
          }
          const std::size_t p = static_cast<std::size_t>(y) * W + x;
          lab[p] = static_cast<std::uint8_t>(cls);
          for (int ch = 0; ch < 3; ++ch) {
            const double v = std::clamp(c[static_cast<std::size_t>(ch)] + cfg.noise * d.normal(), 0.0, 1.0);
            img.rgb[p * 3 + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
          }
        }
      rec.frames.push_back(std::move(img));
      labels.push_back(std::move(lab));
      for (Blob& bl : blobs) {
        const double m = bl.r0 * (1.0 + kMaxGrowth * (T - 1)) * (1.0 + cfg.deform);
        bl.x += bl.vx;
        bl.y += bl.vy;
        reflect(bl.x, bl.vx, m, W - m);
        reflect(bl.y, bl.vy, m, H - m);
      }
    }
    rec.labels = std::move(labels);
    out.push_back(std::move(rec));
  }
  return out;
}

void ClipRecord::validate() const {
  if (frames.empty()) throw ValueError("clip '" + id + "' has no frames");
  const int h = frames[0].h, w = frames[0].w;
  if (h < 1 || w < 1) throw ShapeError("clip '" + id + "' has empty frames");
  for (const auto& f : frames)
    if (f.h != h || f.w != w || f.rgb.size() != static_cast<std::size_t>(h) * w * 3)
      throw ShapeError("clip '" + id + "' has frames of different sizes");
  if (labels) {
    if (labels->size() != frames.size()) throw ShapeError("clip '" + id + "' label count differs from frame count");
    for (const auto& l : *labels)
      if (l.size() != static_cast<std::size_t>(h) * w) throw ShapeError("clip '" + id + "' label map size mismatch");
  }
}

PotentialTensor ClipRecord::to_tensor() const {
  validate();
  const int T = frames_count(), H = frames[0].h, W = frames[0].w;
  PotentialTensor x({T, H, W, 3});
  std::size_t i = 0;
  for (const auto& f : frames)
    for (std::uint8_t v : f.rgb) x[i++] = v / 255.0;
  return x;
}

std::vector<int> ClipRecord::label_vector() const {
  if (!labels) throw ValueError("clip '" + id + "' has no labels");
  std::vector<int> out;
  for (const auto& l : *labels) out.insert(out.end(), l.begin(), l.end());
  return out;
}

LabeledClip ClipRecord::to_labeled() const {
  LabeledClip c;
  c.id = id;
  c.clip = to_tensor();
  if (labels) c.labels = label_vector();
  return c;
}

}  // namespace spikeseg
