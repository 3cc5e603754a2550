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

#include "spikeseg/train.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <random>

namespace spikeseg {

namespace {

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

}  // namespace

double cosine_lr(int step, int total, double base_lr) {
  if (total <= 0 || step < 0 || step > total) throw ValueError("cosine_lr needs 0 <= step <= total, total > 0");
  return base_lr * (1.0 + std::cos(std::numbers::pi * step / total)) / 2.0;
}

void AdamW::step(const ParamList& params, double lr) {
  for (const Param* p : params) {
    if (!p->trainable || p->grad.empty()) continue;
    for (std::size_t i = 0; i < p->grad.size(); ++i)
      if (!std::isfinite(p->grad[i]))
        throw NonFiniteGradient("non-finite gradient in " + p->name + " at index " + std::to_string(i));
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (Param* p : params) {
    if (!p->trainable) continue;
    const std::size_t n = p->numel();
    if (p->m.size() != n) p->m.assign(n, 0.0);
    if (p->v.size() != n) p->v.assign(n, 0.0);
    const bool decay = cfg_.weight_decay > 0.0 && p->value.rank() >= 2;
    auto w = p->value.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = p->grad.empty() ? 0.0 : p->grad[i];
      p->m[i] = cfg_.beta1 * p->m[i] + (1.0 - cfg_.beta1) * g;
      p->v[i] = cfg_.beta2 * p->v[i] + (1.0 - cfg_.beta2) * g * g;
      if (decay) w[i] -= lr * cfg_.weight_decay * w[i];
      w[i] -= lr * (p->m[i] / bc1) / (std::sqrt(p->v[i] / bc2) + cfg_.eps);
    }
  }
}

GradCheckResult finite_diff_check(const std::function<Var(Tape&)>& loss_fn, const ParamList& params, double eps,
                                  std::size_t per_param, std::uint64_t seed) {
  TapeOptions relaxed;
  relaxed.spike_mode = SpikeMode::kRelaxed;
  auto eval = [&] {
    TapeOptions o = relaxed;
    o.record = false;
    Tape tp(o);
    return loss_fn(tp).value()[0];
  };
  zero_grads(params);
  {
    Tape tp(relaxed);
    tp.backward(loss_fn(tp));
  }
  std::mt19937_64 rng(seed);
  GradCheckResult r;
  for (Param* p : params) {
    if (!p->trainable) continue;
    const std::size_t n = p->numel();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(n, per_param));
    for (std::size_t i : idx) {
      const double orig = p->value[i];
      auto at = [&](double dx) {
        p->value[i] = orig + dx;
        return eval();
      };
      // O(eps^4) truncation; plain central differences are off by ~1e-4 on the
      // widened decoder fragments.
      const double d1 = at(eps) - at(-eps);
      const double d2 = at(2.0 * eps) - at(-2.0 * eps);
      p->value[i] = orig;
      const double numeric = (8.0 * d1 - d2) / (12.0 * eps);
      const double analytic = p->grad.empty() ? 0.0 : p->grad[i];
      const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
      ++r.checked;
      if (err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst = p->name + "[" + std::to_string(i) + "] analytic=" + fmt_num(analytic) +
                  " numeric=" + fmt_num(numeric);
      }
    }
  }
  return r;
}

}  // namespace spikeseg
