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
#include "spikeseg/encoder.hpp"
#include "test_util.hpp"

using namespace spikeseg;

TEST_CASE("reparameterised conv folds into one kernel") {
  Rng rng(31);
  RepConv rc("rc", 5, 7, InitSpec{}, rng);
  std::mt19937_64 drng(1);
  const PotentialTensor x = testutil::spikes({2, 5, 6, 5}, 0.4, 1, drng);
  Tape tp(testutil::no_record());
  const Var a = rc.forward_branches(tp, tp.constant(x, 1), "");
  const Var b = rc.forward_folded(tp, tp.constant(x, 1), "");
  CHECK(testutil::max_abs_diff(a.value(), b.value()) < 1e-12);
  const PotentialTensor k = rc.folded_kernel();
  CHECK(k.dims() == Dims{3, 3, 5, 7});
}

TEST_CASE("separable conv folds into one dense kernel") {
  Rng rng(32);
  SepConvUnit unit("sep", 4, 2, SpikeConsts{}, InitSpec{}, rng);
  std::mt19937_64 drng(2);
  const PotentialTensor u = testutil::uniform({2, 8, 8, 4}, -1, 3, drng);
  TapeOptions plain = testutil::no_record(), folded = testutil::no_record();
  folded.fold_reparam = true;
  Tape t1(plain), t2(folded);
  const PotentialTensor a = unit.forward(t1, t1.constant(u), nullptr, "").value();
  const PotentialTensor b = unit.forward(t2, t2.constant(u), nullptr, "").value();
  CHECK(testutil::max_abs_diff(a, b) < 1e-10);
}

TEST_CASE("encoder taps have the documented geometry") {
  Encoder enc(EncoderConfig::tiny(), 5);
  std::mt19937_64 rng(3);
  const MultiScaleFeatures f = encode(enc, testutil::uniform({2, 64, 48, 3}, 0, 1, rng));
  CHECK(f.u1.dims() == Dims{2, 16, 12, 16});
  CHECK(f.u2.dims() == Dims{2, 8, 6, 32});
  CHECK(f.u3.dims() == Dims{2, 4, 3, 64});
  CHECK(f.u4.dims() == Dims{2, 4, 3, 96});
  CHECK(f.u4.all_finite());
  CHECK_THROWS_AS(encode(enc, PotentialTensor({1, 40, 48, 3})), ShapeError);
  CHECK_THROWS_AS(encode(enc, PotentialTensor({1, 32, 32, 1})), ShapeError);
}

TEST_CASE("encoder weights are a function of the seed") {
  Encoder a(EncoderConfig::tiny(), 9), b(EncoderConfig::tiny(), 9), c(EncoderConfig::tiny(), 10);
  const ParamList pa = a.params(), pb = b.params(), pc = c.params();
  REQUIRE(pa.size() == pb.size());
  bool same = true, differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    same = same && pa[i]->value == pb[i]->value && pa[i]->name == pb[i]->name;
    differs = differs || !(pa[i]->value == pc[i]->value);
  }
  CHECK(same);
  CHECK(differs);
  for (Param* p : pa) CHECK(p->name.rfind("enc.", 0) == 0);
}

TEST_CASE("masked pixels never reach any encoder stage") {
  Encoder enc(EncoderConfig::tiny(), 6);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    const PotentialTensor a = testutil::uniform({3, 64, 64, 3}, 0, 1, rng);
    PotentialTensor b = a;
    const TubeMaskSet masks = TubeMaskSet::sample({3, 64, 64, 3}, 0.5, 100 + trial);
    const PotentialTensor& m0 = masks.level(0);
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t i = 0; i < b.numel(); ++i)
      if (m0[i / 3] == 0.0) b[i] = u(rng);
    const MultiScaleFeatures fa = encode(enc, a, &masks), fb = encode(enc, b, &masks);
    CHECK(fa.u1 == fb.u1);
    CHECK(fa.u2 == fb.u2);
    CHECK(fa.u3 == fb.u3);
    CHECK(fa.u4 == fb.u4);
  }
}

TEST_CASE("encoder is causal over frames") {
  // A hotter init keeps u4 non-zero on this small input.
  EncoderConfig cfg = EncoderConfig::tiny();
  cfg.init.gain = 3.0;
  Encoder enc(cfg, 7);
  std::mt19937_64 rng(5);
  const PotentialTensor a = testutil::uniform({3, 32, 32, 3}, 0, 1, rng);
  PotentialTensor b = a;
  const std::size_t per_frame = 32 * 32 * 3;
  for (std::size_t i = 2 * per_frame; i < b.numel(); ++i) b[i] = 1.0 - b[i];
  const MultiScaleFeatures fa = encode(enc, a), fb = encode(enc, b);
  const std::size_t f4 = fa.u4.numel() / 3;
  CHECK(std::equal(fa.u4.vec().begin(), fa.u4.vec().begin() + 2 * f4, fb.u4.vec().begin()));
  CHECK(!(fa.u4 == fb.u4));
}

TEST_CASE("encoder sizes for the two reference widths") {
  const double small = static_cast<double>(Encoder(EncoderConfig::small16m(), 0).param_count());
  const double base = static_cast<double>(Encoder(EncoderConfig::base56m(), 0).param_count());
  CHECK(std::abs(small / 16.0e6 - 1.0) < 0.05);
  CHECK(std::abs(base / 56.3e6 - 1.0) < 0.05);
}
