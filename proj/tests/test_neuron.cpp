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

#include <cmath>

#include "doctest.h"
#include "spikeseg/neuron.hpp"
#include "test_util.hpp"

using namespace spikeseg;

namespace {

// Independent recurrence for one site sequence; returns the spike train.
std::vector<int> reference_lif(const std::vector<double>& x, double beta, double th) {
  std::vector<int> s;
  double u = 0.0;
  for (double xi : x) {
    const double h = beta * u + xi;
    const int fired = h >= th ? 1 : 0;
    u = h - th * fired;
    s.push_back(fired);
  }
  return s;
}

std::vector<int> reference_intif(const std::vector<double>& x, double beta, double th, int z) {
  std::vector<int> s;
  double u = 0.0;
  for (double xi : x) {
    const double h = beta * u + xi;
    int v = 0;
    while (v < z - 1 && h >= (v + 1) * th) ++v;
    u = h - th * v;
    s.push_back(v);
  }
  return s;
}

}  // namespace

TEST_CASE("LIF matches the reference recurrence") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int t = 1 + trial % 7, n = 5;
    NeuronParams p;
    p.beta = 0.1 + 0.8 * (trial % 5) / 4.0;
    p.u_th = 0.5 + (trial % 3) * 0.5;
    const PotentialTensor x = testutil::uniform({t, n}, -1.0, 2.5, rng);
    const SpikeTensor s = temporal_spike(x, p);
    for (int i = 0; i < n; ++i) {
      std::vector<double> seq;
      for (int f = 0; f < t; ++f) seq.push_back(x[static_cast<std::size_t>(f * n + i)]);
      const auto ref = reference_lif(seq, p.beta, p.threshold());
      for (int f = 0; f < t; ++f) CHECK(s[static_cast<std::size_t>(f * n + i)] == ref[static_cast<std::size_t>(f)]);
    }
  }
}

TEST_CASE("LIF boundary fires and soft reset subtracts the threshold") {
  NeuronParams p;
  p.u_th = 1.0;
  auto [s, st] = lif_step(NeuronState::zeros({1}), PotentialTensor({1}, {1.0}), p);
  CHECK(s[0] == 1);
  CHECK(st.u[0] == 0.0);
  auto [s2, st2] = lif_step(NeuronState::zeros({1}), PotentialTensor({1}, {1.75}), p);
  CHECK(s2[0] == 1);
  CHECK(st2.u[0] == doctest::Approx(0.75));
  // Leak: 0.75 * 0.5 + 0.2 stays under threshold.
  auto [s3, st3] = lif_step(st2, PotentialTensor({1}, {0.2}), p);
  CHECK(s3[0] == 0);
  CHECK(st3.u[0] == doctest::Approx(0.575));
  CHECK(heaviside(PotentialTensor({3}, {0.999, 1.0, 1.001}), 1.0) == SpikeTensor({3}, std::vector<std::uint8_t>{0, 1, 1}));
}

TEST_CASE("IntIF matches the reference recurrence") {
  std::mt19937_64 rng(2);
  for (int z : {2, 4, 8}) {
    NeuronParams p;
    p.z_levels = z;
    p.beta = 0.7;
    const PotentialTensor x = testutil::uniform({6, 9}, -1.0, 3.0 * z, rng);
    const SpikeTensor s = temporal_intif(x, p);
    CHECK(s.alphabet() == z);
    for (int i = 0; i < 9; ++i) {
      std::vector<double> seq;
      for (int f = 0; f < 6; ++f) seq.push_back(x[static_cast<std::size_t>(f * 9 + i)]);
      const auto ref = reference_intif(seq, p.beta, p.threshold(), z);
      for (int f = 0; f < 6; ++f) CHECK(s[static_cast<std::size_t>(f * 9 + i)] == ref[static_cast<std::size_t>(f)]);
    }
  }
}

TEST_CASE("IntIF unfold then sum is the identity and unfold is a unary prefix code") {
  std::mt19937_64 rng(3);
  for (int z : {2, 4, 8}) {
    CAPTURE(z);
    const PotentialTensor v = testutil::spikes({3, 4, 5}, 0.6, z - 1, rng);
    const SpikeTensor s = SpikeTensor::from_potential(v, static_cast<std::uint8_t>(z));
    const SpikeTensor u = unfold_intif(s, z);
    CHECK(u.dims() == Dims{z, 3, 4, 5});
    CHECK(u.alphabet() == 2);
    for (std::size_t i = 0; i < s.numel(); ++i)
      for (int j = 0; j < z; ++j) CHECK(u[static_cast<std::size_t>(j) * s.numel() + i] == (j < s[i] ? 1 : 0));
    CHECK(fold_substeps(u, z) == s);
  }
}

TEST_CASE("IntIF with two levels reproduces LIF") {
  std::mt19937_64 rng(4);
  NeuronParams p;
  p.z_levels = 2;
  const PotentialTensor x = testutil::uniform({8, 32}, -1.0, 1.9, rng);
  const SpikeTensor a = temporal_intif(x, p);
  const SpikeTensor b = temporal_spike(x, p);
  CHECK(std::vector<std::uint8_t>(a.data().begin(), a.data().end()) ==
        std::vector<std::uint8_t>(b.data().begin(), b.data().end()));
}

TEST_CASE("surrogate is the derivative of the smooth step") {
  for (double w : {1.0, 2.0, 4.0})
    for (double x = -2.0; x <= 2.0; x += 0.25) {
      const double h = 1e-6;
      const double fd = (atan_primitive(x + h, w) - atan_primitive(x - h, w)) / (2 * h);
      CHECK(atan_surrogate(x, w) == doctest::Approx(fd).epsilon(1e-7));
    }
  CHECK(atan_surrogate(0.0, 2.0) == doctest::Approx(1.0));
  CHECK(atan_primitive(0.0, 2.0) == doctest::Approx(0.5));
  CHECK(atan_primitive(50.0, 2.0) > 0.99);
}

TEST_CASE("neuron parameters are validated") {
  NeuronParams p;
  p.beta = 1.5;
  CHECK_THROWS_AS(p.validate(), ValueError);
  p.beta = 0.5;
  p.z_levels = 0;
  CHECK_THROWS_AS(p.validate(), ValueError);
  p.z_levels = 2;
  p.u_th = 0.0;
  CHECK_THROWS_AS(p.validate(), ValueError);
  SpikeTensor three({2}, 4);
  three.set(0, 3);
  CHECK_THROWS_AS(unfold_intif(three, 2), ValueError);
}
