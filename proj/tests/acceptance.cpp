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

// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset of criteria by number; no arguments runs all ten.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <string>

#include "spikeseg/attention.hpp"
#include "spikeseg/gradcheck.hpp"
#include "spikeseg/losses.hpp"
#include "spikeseg/neuron.hpp"
#include "spikeseg/pipeline.hpp"

using namespace spikeseg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

PotentialTensor random_clip(const Shape4& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  PotentialTensor x(s.dims());
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = u(rng);
  return x;
}

SpikeTensor random_bits(int rows, int cols, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  SpikeTensor s({rows, cols}, 2);
  for (std::size_t i = 0; i < s.numel(); ++i) s.set(i, b(rng) ? 1 : 0);
  return s;
}

Outcome energy_latency() {
  // Back-derive integer op counts from the energy column, then reproduce both columns.
  const std::pair<double, double> ac_only[] = {{40.8, 8.2}, {178.8, 35.9}, {30.6, 6.1}, {134.1, 26.9}};
  const std::pair<double, double> mac_only[] = {{588.8, 185.2}, {524.4, 164.9}, {1527.2, 480.3},
                                                {400.0, 125.8}, {293.3, 92.2},  {308.1, 96.9}};
  const CostModel m;
  double worst_mj = 0, worst_ms = 0;
  for (const auto& [mj, ms] : ac_only) {
    const auto ops = static_cast<std::uint64_t>(std::llround(mj * 1e9 / m.e_ac_pj));
    worst_mj = std::max(worst_mj, std::abs(energy_mj(ops, 0) - mj));
    worst_ms = std::max(worst_ms, std::abs(latency_ms(ops, 0) - ms));
  }
  for (const auto& [mj, ms] : mac_only) {
    const auto ops = static_cast<std::uint64_t>(std::llround(mj * 1e9 / m.e_mac_pj));
    worst_mj = std::max(worst_mj, std::abs(energy_mj(0, ops) - mj));
    worst_ms = std::max(worst_ms, std::abs(latency_ms(0, ops) - ms));
  }
  return {worst_mj <= 0.1 && worst_ms <= 0.1,
          "10 models, max |dE| " + fmt("%.3f mJ", worst_mj) + ", max |dt| " + fmt("%.3f ms", worst_ms)};
}

Outcome attention_equivalence() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> T(1, 4), N(1, 16), D(1, 32);
  std::uniform_real_distribution<double> rate(0.05, 0.95);
  int mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    const int t = T(rng), n = N(rng), d = D(rng);
    AttentionOperands a;
    a.frames = t;
    a.q = random_bits(t * n, d, rate(rng), rng);
    a.k = random_bits(t * n, d, rate(rng), rng);
    a.v = random_bits(t * n, d, rate(rng), rng);
    SdhaOptions o;
    o.scope = i % 2 ? TemporalScope::kCausal : TemporalScope::kJoint;
    if (!(sdha(a, o) == sdha_naive(a, o)) ||
        sdha_charge(a, scope_ranges(t, o.scope)) != sdha_charge_naive(a, scope_ranges(t, o.scope)))
      ++mismatches;
  }
  return {mismatches == 0, "200 instances, " + std::to_string(mismatches) + " mismatches"};
}

Outcome hamming_identity() {
  std::mt19937_64 rng(1002);
  std::uniform_int_distribution<int> D(1, 512);
  int bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const int d = D(rng);
    const SpikeTensor q = random_bits(1, d, 0.5, rng), k = random_bits(1, d, 0.5, rng);
    int direct = 0;
    for (int c = 0; c < d; ++c) direct += (2 * q[static_cast<std::size_t>(c)] - 1) * (2 * k[static_cast<std::size_t>(c)] - 1);
    if (direct != d - 2 * hamming(q.data(), k.data()) || signed_dot(q.data(), k.data()) != direct) ++bad;
  }
  return {bad == 0, "10000 pairs, " + std::to_string(bad) + " violations"};
}

Outcome spiking_path_macs() {
  SegModel model(EncoderConfig::tiny(), HeadConfig{}, 1003);
  std::mt19937_64 rng(1003);
  std::uint64_t worst = 0, ac = 0;
  for (int i = 0; i < 20; ++i) {
    const OpCounter c = count_pass(model, random_clip({4, 64, 64, 3}, rng));
    worst = std::max(worst, c.spiking_path_mac());
    ac += c.total_ac();
  }
  return {worst == 0 && ac > 0, "20 clips, max spiking-path MACs " + std::to_string(worst) + ", mean ACs " +
                                    std::to_string(ac / 20)};
}

Outcome anti_leakage() {
  Encoder enc(EncoderConfig::tiny(), 1004);
  std::mt19937_64 rng(1004);
  std::uniform_real_distribution<double> u(0, 1);
  const Shape4 shape{4, 64, 64, 3};
  int leaks = 0;
  for (int i = 0; i < 20; ++i) {
    const PotentialTensor a = random_clip(shape, rng);
    PotentialTensor b = a;
    const TubeMaskSet masks = TubeMaskSet::sample(shape, 0.5, 5000 + i);
    for (std::size_t p = 0; p < b.numel(); ++p)
      if (masks.level(0)[p / 3] == 0.0) b[p] = u(rng);
    const MultiScaleFeatures fa = encode(enc, a, &masks), fb = encode(enc, b, &masks);
    if (!(fa.u1 == fb.u1 && fa.u2 == fb.u2 && fa.u3 == fb.u3 && fa.u4 == fb.u4)) ++leaks;
  }
  return {leaks == 0, "20 masks at ratio 0.5, " + std::to_string(leaks) + " with differing stage outputs"};
}

Outcome gradient_check() {
  double worst = 0;
  std::string detail;
  for (const FragmentCheck& f : gradcheck_all(1005)) {
    detail += f.name + " " + fmt("%.1e", f.result.max_rel_error) + "; ";
    worst = std::max(worst, f.result.max_rel_error);
  }
  return {worst < 1e-4, "max rel error " + fmt("%.2e", worst) + " (" + detail.substr(0, detail.size() - 2) + ")"};
}

Outcome intif_consistency() {
  std::mt19937_64 rng(1007);
  bool ok = true;
  for (int z : {2, 4, 8}) {
    std::uniform_int_distribution<int> v(0, z - 1);
    SpikeTensor s({4, 64}, static_cast<std::uint8_t>(z));
    for (std::size_t i = 0; i < s.numel(); ++i) s.set(i, static_cast<std::uint8_t>(v(rng)));
    ok = ok && fold_substeps(unfold_intif(s, z), z) == s;
  }
  std::uniform_real_distribution<double> x(-1.0, 1.9);
  PotentialTensor seq({16, 256});
  for (std::size_t i = 0; i < seq.numel(); ++i) seq[i] = x(rng);
  NeuronParams p;
  p.z_levels = 2;
  const SpikeTensor a = temporal_intif(seq, p), b = temporal_spike(seq, p);
  bool same = a.dims() == b.dims();
  for (std::size_t i = 0; same && i < a.numel(); ++i) same = a[i] == b[i];
  return {ok && same, std::string("unfold/sum identity Z=2,4,8: ") + (ok ? "yes" : "no") +
                          "; IntIF(Z=2) == LIF on 4096 bounded sequences: " + (same ? "yes" : "no")};
}

Outcome parameter_counts() {
  auto rel = [](double got, double want) { return std::abs(got / want - 1.0); };
  const double e16 = static_cast<double>(Encoder(EncoderConfig::small16m(), 0).param_count());
  const double e56 = static_cast<double>(Encoder(EncoderConfig::base56m(), 0).param_count());
  HeadConfig h128, h256;
  h128.head_channels = 128;
  h256.head_channels = 256;
  const double m16 = static_cast<double>(SegModel(EncoderConfig::small16m(), h128, 0).param_count());
  const double m56 = static_cast<double>(SegModel(EncoderConfig::base56m(), h256, 0).param_count());
  const bool ok = rel(e16, 16.0e6) <= 0.05 && rel(e56, 56.3e6) <= 0.05 && rel(m16, 21.1e6) <= 0.10 &&
                  rel(m56, 62.1e6) <= 0.10;
  return {ok, "encoders " + fmt("%.2fM", e16 / 1e6) + " / " + fmt("%.2fM", e56 / 1e6) + ", full models " +
                  fmt("%.2fM", m16 / 1e6) + " / " + fmt("%.2fM", m56 / 1e6)};
}

Outcome pretraining_benefit_check() {
  const RunConfig cfg = load_config(std::string(SPIKESEG_SOURCE_DIR) + "/configs/benchmark.cfg");
  const auto t0 = std::chrono::steady_clock::now();
  int wins = 0;
  double min_pre = std::numeric_limits<double>::infinity();
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const BenefitRun r = pretraining_benefit(cfg, seed);
    wins += r.pretrained_miou > r.scratch_miou ? 1 : 0;
    min_pre = std::min(min_pre, r.pretrained_miou);
    detail += "seed " + std::to_string(seed) + " " + fmt("%.3f", r.pretrained_miou) + " vs " +
              fmt("%.3f", r.scratch_miou) + "; ";
  }
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  return {wins == 3 && min_pre >= 0.80 && minutes <= 15.0,
          "pretrained > scratch on " + std::to_string(wins) + "/3, min pretrained " + fmt("%.3f", min_pre) + ", " +
              fmt("%.1f min", minutes) + " (" + detail.substr(0, detail.size() - 2) + ")"};
}

Outcome loss_closed_forms() {
  std::mt19937_64 rng(1010);
  double worst_ce = 0, worst_focal = 0;
  for (int k : {2, 3, 7, 19}) {
    std::uniform_int_distribution<int> cls(0, k - 1);
    std::vector<int> labels(2 * 8 * 8);
    for (int& l : labels) l = cls(rng);
    const PotentialTensor y = one_hot(labels, {2, 8, 8}, k);
    worst_ce = std::max(worst_ce, std::abs(ce_loss(y, PotentialTensor::filled({2, 8, 8, k}, 1.0 / k)) - std::log(k)));
    std::uniform_real_distribution<double> u(0.01, 1.0);
    PotentialTensor p({2, 8, 8, k});
    for (std::size_t r = 0; r < p.numel() / static_cast<std::size_t>(k); ++r) {
      double s = 0;
      for (int c = 0; c < k; ++c) s += p[r * k + c] = u(rng);
      for (int c = 0; c < k; ++c) p[r * k + c] /= s;
    }
    worst_focal = std::max(worst_focal, std::abs(focal_loss(y, p, 0.0) - ce_loss(y, p)));
  }
  return {worst_ce < 1e-10 && worst_focal < 1e-10,
          "|CE(uniform) - ln K| " + fmt("%.1e", worst_ce) + ", |focal(gamma=0) - CE| " + fmt("%.1e", worst_focal)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"energy/latency regression", energy_latency},
      {"reordered attention equals naive attention", attention_equivalence},
      {"Hamming identity", hamming_identity},
      {"no MACs on the spiking path", spiking_path_macs},
      {"masked pixels do not leak", anti_leakage},
      {"finite-difference gradients", gradient_check},
      {"IntIF unfold and LIF equivalence", intif_consistency},
      {"parameter counts", parameter_counts},
      {"pretraining benefit", pretraining_benefit_check},
      {"loss closed forms", loss_closed_forms},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  int failed = 0;
  for (int i = 0; i < 10; ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
