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

#include "doctest.h"
#include "spikeseg/ops.hpp"
#include "spikeseg/profiler.hpp"
#include "test_util.hpp"

using namespace spikeseg;

TEST_CASE("energy and latency closed forms") {
  CHECK(energy_mj(0, 0) == 0.0);
  CHECK(latency_ms(0, 0) == 0.0);
  CHECK(energy_mj(1'000'000'000, 0) == doctest::Approx(0.9));
  CHECK(energy_mj(0, 1'000'000'000) == doctest::Approx(4.6));
  CHECK(latency_ms(5'529'600'000, 0) == doctest::Approx(1.0));
  CHECK(latency_ms(0, 691'200'000) == doctest::Approx(1.0));
  // An accumulate costs 0.9/4.6 of a MAC in energy and 1/8 in time.
  CHECK(energy_mj(1000, 0) / energy_mj(0, 1000) == doctest::Approx(0.9 / 4.6));
  CHECK(latency_ms(1000, 0) / latency_ms(0, 1000) == doctest::Approx(0.125));
}

TEST_CASE("reference energy and latency pairs are mutually consistent") {
  // Op counts back-derived from the energy figure must reproduce the latency.
  const std::pair<double, double> ac_only[] = {{40.8, 8.2}, {178.8, 35.9}, {30.6, 6.1}, {134.1, 26.9}};
  for (const auto& [mj, ms] : ac_only) {
    const auto ops = static_cast<std::uint64_t>(mj / 0.9e-9);
    CHECK(std::abs(energy_mj(ops, 0) - mj) < 0.1);
    CHECK(std::abs(latency_ms(ops, 0) - ms) < 0.1);
  }
  const std::pair<double, double> mac_only[] = {{588.8, 185.2}, {524.4, 164.9}, {1527.2, 480.3},
                                                {400.0, 125.8}, {293.3, 92.2},  {308.1, 96.9}};
  for (const auto& [mj, ms] : mac_only) {
    const auto ops = static_cast<std::uint64_t>(mj / 4.6e-9);
    CHECK(std::abs(energy_mj(0, ops) - mj) < 0.1);
    CHECK(std::abs(latency_ms(0, ops) - ms) < 0.1);
  }
}

TEST_CASE("accumulate counts scale exactly with input spike density") {
  std::mt19937_64 rng(71);
  const PotentialTensor w = testutil::uniform({3, 3, 4, 5}, -1, 1, rng);
  PotentialTensor sparse({1, 8, 8, 4});
  for (std::size_t i = 0; i < sparse.numel(); i += 8) sparse[i] = 1;
  PotentialTensor dense = sparse;
  for (std::size_t i = 4; i < dense.numel(); i += 8) dense[i] = 1;
  auto ac = [&](const PotentialTensor& x) {
    OpCounter c;
    TapeOptions o;
    o.record = false;
    o.counter = &c;
    Tape tp(o);
    ops::ConvArgs a;
    a.name = "l";
    ops::conv2d(tp.constant(x, 1), tp.constant(w), Var{}, a);
    return c.find("l")->ac_ops;
  };
  // 1x1 sites away from the border see the full 3x3 fan-out; compare interior-only patterns.
  PotentialTensor one({1, 8, 8, 4}), two({1, 8, 8, 4});
  one[(3 * 8 + 3) * 4] = 1;
  two[(3 * 8 + 3) * 4] = 1;
  two[(4 * 8 + 4) * 4 + 1] = 1;
  CHECK(ac(two) == 2 * ac(one));
  CHECK(ac(one) == 9 * 5);
  CHECK(ac(dense) > ac(sparse));
}

TEST_CASE("report rows, totals and CSV") {
  OpCounter c;
  c.add_mac("stem", 1000, true);
  c.add_synaptic("a", 800, 200);
  c.add_spikes("a.sn", 10, 40);
  c.add_mac("dec", 5000, false, true);
  const ProfileReport r = make_report(c, 123);
  CHECK(r.params == 123);
  CHECK(r.ac_ops == 200);
  CHECK(r.spiking_mac_ops == 0);
  CHECK(r.embedding_mac_ops == 1000);
  for (const auto& row : r.rows) CHECK(row.layer != "dec");
  double prev = 0;
  for (const auto& row : r.rows) {
    CHECK(row.cumulative_mj >= prev);
    prev = row.cumulative_mj;
  }
  CHECK(r.mj_total == doctest::Approx(energy_mj(200, 1000)));
  CHECK(r.mj_spiking == doctest::Approx(energy_mj(200, 0)));
  CHECK(r.csv().rfind("layer,dense_ops,ac_ops,mac_ops,rho,cumulative_mJ,cumulative_ms\n", 0) == 0);
  CHECK(c.find("a")->rho() == doctest::Approx(0.25));
}
