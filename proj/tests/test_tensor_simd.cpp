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

#include <sstream>

#include "doctest.h"
#include "spikeseg/simd/kernels.hpp"
#include "spikeseg/tensor.hpp"
#include "test_util.hpp"

using namespace spikeseg;

TEST_CASE("tensor shapes, reshape and validation") {
  CHECK(numel({2, 3, 4}) == 24);
  PotentialTensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.reshaped({3, 2}).dims() == Dims{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK_THROWS_AS(PotentialTensor({2, 2}, std::vector<double>(3)), ShapeError);
  CHECK_THROWS_AS((Shape4{1, 20, 32, 3}.validate_encoder_input()), ShapeError);
  CHECK_NOTHROW((Shape4{1, 32, 48, 3}.validate_encoder_input()));
  SpikeTensor s({4}, 3);
  s.set(0, 2);
  CHECK_THROWS_AS(s.set(1, 3), ValueError);
  CHECK_THROWS_AS(SpikeTensor::from_potential(PotentialTensor({1}, {0.5}), 2), ValueError);
}

TEST_CASE("flatten/unflatten round trip and spike rate") {
  std::mt19937_64 rng(3);
  const PotentialTensor x = testutil::uniform({2, 3, 4, 5}, -1, 1, rng);
  const PotentialTensor tok = flatten_spacetime(x);
  CHECK(tok.dims() == Dims{24, 5});
  CHECK(unflatten_spacetime(tok, Shape4{2, 3, 4, 5}) == x);
  // Token (t=1,h=2,w=3) is row (1*3+2)*4+3.
  CHECK(tok[static_cast<std::size_t>((1 * 3 + 2) * 4 + 3) * 5 + 4] == x.at(1, 2, 3, 4));
  SpikeTensor s({4}, std::vector<std::uint8_t>{1, 0, 0, 1});
  CHECK(spike_rate(s) == doctest::Approx(0.5));
  CHECK_THROWS_AS(spike_rate(SpikeTensor()), ValueError);
}

TEST_CASE("SPKT dump round trip") {
  std::mt19937_64 rng(5);
  const PotentialTensor x = testutil::uniform({3, 2, 2}, -4, 4, rng);
  std::stringstream ss;
  write_tensor(ss, x, DType::kF64);
  const SpikeTensor s({2, 3}, std::vector<std::uint8_t>{0, 1, 2, 3, 0, 1}, 4);
  write_tensor(ss, s);
  CHECK(std::get<PotentialTensor>(read_tensor(ss)) == x);
  CHECK(std::get<SpikeTensor>(read_tensor(ss)) == s);
  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(read_tensor(bad), IoError);
}

TEST_CASE("vector kernels agree with the scalar reference") {
  const simd::KernelTable* v = simd::avx2_kernels();
  if (!v) {
    MESSAGE("AVX2 unavailable; equivalence not exercised");
    return;
  }
  const simd::KernelTable& s = simd::scalar_kernels();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  std::uniform_int_distribution<int> iu(-1000, 1000);
  auto vec = [&](std::size_t n) {
    std::vector<double> x(n);
    for (double& e : x) e = u(rng);
    return x;
  };
  auto close = [](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::abs(a[i] - b[i]) > 1e-12 * (1.0 + std::abs(a[i]))) return false;
    return true;
  };
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 13u, 16u, 31u, 64u, 97u}) {
    CAPTURE(n);
    const auto x = vec(n), a = vec(n), y0 = vec(n);
    auto y1 = y0, y2 = y0;
    s.axpy(0.7, x.data(), y1.data(), n);
    v->axpy(0.7, x.data(), y2.data(), n);
    CHECK(close(y1, y2));
    y1 = y2 = y0;
    s.add(x.data(), y1.data(), n);
    v->add(x.data(), y2.data(), n);
    CHECK(y1 == y2);
    CHECK(s.dot(x.data(), a.data(), n) == doctest::Approx(v->dot(x.data(), a.data(), n)).epsilon(1e-12));
    y1 = y2 = y0;
    s.vmadd(a.data(), x.data(), y1.data(), n);
    v->vmadd(a.data(), x.data(), y2.data(), n);
    CHECK(close(y1, y2));

    const std::size_t rows = 5;
    auto m = vec(rows * n);
    std::vector<double> coef = {0.0, 1.5, 0.0, -2.0, 3.0}, counts = {0, 1, 3, 0, 2};
    y1 = y2 = y0;
    s.rows_axpy(coef.data(), m.data(), y1.data(), rows, n);
    v->rows_axpy(coef.data(), m.data(), y2.data(), rows, n);
    CHECK(close(y1, y2));
    y1 = y2 = y0;
    s.rows_accumulate(counts.data(), m.data(), y1.data(), rows, n);
    v->rows_accumulate(counts.data(), m.data(), y2.data(), rows, n);
    CHECK(close(y1, y2));
    std::vector<double> r1(rows, 0.5), r2(rows, 0.5);
    s.rows_dot(m.data(), x.data(), r1.data(), rows, n);
    v->rows_dot(m.data(), x.data(), r2.data(), rows, n);
    CHECK(close(r1, r2));
    auto m1 = m, m2 = m;
    s.outer_acc(coef.data(), x.data(), m1.data(), rows, n);
    v->outer_acc(coef.data(), x.data(), m2.data(), rows, n);
    CHECK(close(m1, m2));

    std::vector<std::int32_t> xi(n), yi(n);
    for (auto& e : xi) e = iu(rng);
    for (auto& e : yi) e = iu(rng);
    auto yi1 = yi, yi2 = yi;
    s.add_i32(xi.data(), yi1.data(), n);
    v->add_i32(xi.data(), yi2.data(), n);
    CHECK(yi1 == yi2);
    s.sub_i32(xi.data(), yi1.data(), n);
    v->sub_i32(xi.data(), yi2.data(), n);
    CHECK(yi1 == yi2);
    CHECK(yi1 == yi);
  }
}

TEST_CASE("ISA override restores the previous table") {
  const simd::Isa before = simd::active_isa();
  {
    simd::ScopedIsa scoped(simd::Isa::kScalar);
    CHECK(simd::active_isa() == simd::Isa::kScalar);
  }
  CHECK(simd::active_isa() == before);
}
