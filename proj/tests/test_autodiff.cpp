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
#include "spikeseg/layers.hpp"
#include "spikeseg/neuron.hpp"
#include "spikeseg/ops.hpp"
#include "spikeseg/train.hpp"
#include "test_util.hpp"

using namespace spikeseg;

namespace {

// Direct nested-loop convolution with zero padding.
PotentialTensor reference_conv(const PotentialTensor& x, const PotentialTensor& w, const PotentialTensor* b,
                               int stride, bool depthwise) {
  const int T = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const int KH = w.dim(0), KW = w.dim(1), Co = depthwise ? Ci : w.dim(3);
  const int ph = KH / 2, pw = KW / 2;
  const int Ho = (H + 2 * ph - KH) / stride + 1, Wo = (W + 2 * pw - KW) / stride + 1;
  PotentialTensor y({T, Ho, Wo, Co});
  for (int t = 0; t < T; ++t)
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow)
        for (int co = 0; co < Co; ++co) {
          double acc = b ? (*b)[static_cast<std::size_t>(co)] : 0.0;
          for (int kh = 0; kh < KH; ++kh)
            for (int kw = 0; kw < KW; ++kw) {
              const int ih = oh * stride + kh - ph, iw = ow * stride + kw - pw;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              if (depthwise) {
                acc += x.at(t, ih, iw, co) * w[static_cast<std::size_t>((kh * KW + kw) * Co + co)];
              } else {
                for (int ci = 0; ci < Ci; ++ci)
                  acc += x.at(t, ih, iw, ci) * w[static_cast<std::size_t>(((kh * KW + kw) * Ci + ci) * Co + co)];
              }
            }
          y[((static_cast<std::size_t>(t) * Ho + oh) * Wo + ow) * Co + co] = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("conv2d matches the nested-loop oracle") {
  std::mt19937_64 rng(21);
  struct Case {
    int k, stride, ci, co;
    bool depthwise, spikes;
  };
  for (const Case c : {Case{3, 1, 3, 5, false, false}, Case{3, 2, 4, 6, false, true}, Case{7, 2, 3, 4, false, false},
                       Case{1, 1, 5, 7, false, true}, Case{7, 1, 6, 6, true, true}, Case{3, 1, 4, 4, true, false}}) {
    CAPTURE(c.k);
    CAPTURE(c.stride);
    const PotentialTensor x = c.spikes ? testutil::spikes({2, 6, 8, c.ci}, 0.3, 3, rng)
                                       : testutil::uniform({2, 6, 8, c.ci}, -1, 1, rng);
    const PotentialTensor w = testutil::uniform({c.k, c.k, c.depthwise ? 1 : c.ci, c.co}, -1, 1, rng);
    const PotentialTensor b = testutil::uniform({c.co}, -1, 1, rng);
    Tape tp(testutil::no_record());
    ops::ConvArgs a;
    a.stride = c.stride;
    a.depthwise = c.depthwise;
    const Var y = ops::conv2d(tp.constant(x, c.spikes ? 3 : 0), tp.constant(w), tp.constant(b), a);
    const PotentialTensor ref = reference_conv(x, w, &b, c.stride, c.depthwise);
    REQUIRE(y.dims() == ref.dims());
    CHECK(testutil::max_abs_diff(y.value(), ref) < 1e-12);
  }
}

TEST_CASE("spike-fed synapses count one accumulate per unit of spike per fan-out weight") {
  OpCounter counter;
  TapeOptions o;
  o.record = false;
  o.counter = &counter;
  Tape tp(o);
  PotentialTensor x({1, 1, 2, 4});
  x[0] = 1;
  x[5] = 3;  // integer spike counts three
  ops::ConvArgs a;
  a.name = "fc";
  ops::conv2d(tp.constant(x, 3), tp.constant(PotentialTensor::filled({1, 1, 4, 3}, 1.0)), Var{}, a);
  const LayerOps* l = counter.find("fc");
  REQUIRE(l);
  CHECK(l->ac_ops == 4 * 3);
  CHECK(l->mac_ops == 0);
  CHECK(l->dense_ops == 8 * 3 * 3);
  // Real-valued input is a MAC layer.
  a.name = "real";
  ops::conv2d(tp.constant(PotentialTensor::filled({1, 1, 2, 4}, 0.5)), tp.constant(PotentialTensor::filled({1, 1, 4, 3}, 1.0)),
              Var{}, a);
  CHECK(counter.find("real")->mac_ops == 8 * 3);
  CHECK(counter.find("real")->ac_ops == 0);
  // Silence costs nothing.
  a.name = "silent";
  ops::conv2d(tp.constant(PotentialTensor({1, 1, 2, 4}), 1), tp.constant(PotentialTensor::filled({1, 1, 4, 3}, 1.0)), Var{},
              a);
  CHECK(counter.find("silent")->ac_ops == 0);
}

TEST_CASE("backward visits nodes once and checks its input") {
  Param p("p", PotentialTensor({3}, {1, 2, 3}));
  {
    Tape tp;
    Var y = ops::sum(ops::scale(tp.param(p), 2.0));
    tp.backward(y);
    CHECK(p.grad == std::vector<double>{2, 2, 2});
    CHECK_THROWS(tp.backward(y));
  }
  {
    Tape tp;
    Var y = ops::scale(tp.param(p), 2.0);
    CHECK_THROWS_AS(tp.backward(y), ShapeError);
  }
  // Gradients accumulate across tapes until cleared.
  {
    Tape tp;
    tp.backward(ops::sum(tp.param(p)));
  }
  CHECK(p.grad == std::vector<double>{3, 3, 3});
  zero_grads({&p});
  CHECK(p.grad == std::vector<double>{0, 0, 0});
}

TEST_CASE("surrogate gradient of a single step") {
  for (double v : {0.2, 0.9, 1.0, 1.4, 3.0}) {
    Param x("x", PotentialTensor({1, 1}, {v}));
    Tape tp;
    ops::SpikeArgs a;
    Var s = ops::spike(tp.param(x), Var{}, a);
    CHECK(s.value()[0] == (v >= 1.0 ? 1.0 : 0.0));
    tp.backward(ops::sum(s));
    CHECK(x.grad[0] == doctest::Approx(atan_surrogate(v - 1.0, 2.0)));
  }
}

TEST_CASE("reset path is part of the temporal gradient unless cut") {
  const double x0 = 1.3, x1 = 0.6, beta = 0.5, th = 1.0, width = 2.0;
  const double h0 = x0, s0 = h0 >= th ? 1 : 0, h1 = beta * (h0 - th * s0) + x1;
  const double g0 = atan_surrogate(h0 - th, width), g1 = atan_surrogate(h1 - th, width);
  for (bool reset : {true, false}) {
    Param x("x", PotentialTensor({2, 1}, {x0, x1}));
    TapeOptions o;
    o.reset_path_grad = reset;
    Tape tp(o);
    Var s = ops::spike(tp.param(x), Var{}, ops::SpikeArgs{});
    tp.backward(ops::sum(ops::slice0(s, 1, 2)));
    const double expect = reset ? beta * (1.0 - th * g0) * g1 : beta * g1;
    CHECK(x.grad[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(x.grad[1] == doctest::Approx(g1).epsilon(1e-12));
  }
}

TEST_CASE("relaxed tape gradients agree with central differences") {
  std::mt19937_64 rng(22);
  Param w("w", testutil::uniform({4, 3}, -1, 1, rng));
  Param b("b", testutil::uniform({3}, -1, 1, rng));
  Param beta("beta", PotentialTensor({1}, {0.3}));
  const PotentialTensor x = testutil::uniform({5, 4}, -1, 2, rng);
  auto loss = [&](Tape& tp) {
    Var h = ops::linear(tp.constant(x), tp.param(w), tp.param(b));
    ops::SpikeArgs a;
    a.levels = 3;
    Var s = ops::spike(h, tp.param(beta), a);
    return ops::mean(ops::gelu(ops::add(s, ops::softmax_last(h))));
  };
  const GradCheckResult r = finite_diff_check(loss, {&w, &b, &beta}, 1e-4, 12, 1);
  CHECK(r.checked > 10);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("softmax and layer norm invariants") {
  std::mt19937_64 rng(23);
  Tape tp(testutil::no_record());
  const Var x = tp.constant(testutil::uniform({6, 5}, -30, 30, rng));
  const PotentialTensor p = ops::softmax_last(x).value();
  for (int r = 0; r < 6; ++r) {
    double s = 0;
    for (int c = 0; c < 5; ++c) s += p[static_cast<std::size_t>(r * 5 + c)];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
  const PotentialTensor n =
      ops::layer_norm(x, tp.constant(PotentialTensor::filled({5}, 1.0)), tp.constant(PotentialTensor({5})), 0.0).value();
  for (int r = 0; r < 6; ++r) {
    double m = 0, v = 0;
    for (int c = 0; c < 5; ++c) m += n[static_cast<std::size_t>(r * 5 + c)] / 5;
    for (int c = 0; c < 5; ++c) v += std::pow(n[static_cast<std::size_t>(r * 5 + c)] - m, 2) / 5;
    CHECK(m == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("upsample, slice and concat") {
  Tape tp(testutil::no_record());
  const Var x = tp.constant(PotentialTensor({2, 1, 2, 1}, {1, 2, 3, 4}));
  const PotentialTensor u = ops::upsample_nearest(x, 2).value();
  CHECK(u.dims() == Dims{2, 2, 4, 1});
  CHECK(u.vec() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
  const Var c = ops::concat0({ops::slice0(x, 1, 2), ops::slice0(x, 0, 1)});
  CHECK(c.value().vec() == std::vector<double>{3, 4, 1, 2});
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 100, 1e-3) == doctest::Approx(1e-3));
  CHECK(cosine_lr(50, 100, 1e-3) == doctest::Approx(5e-4));
  CHECK(cosine_lr(100, 100, 1e-3) == doctest::Approx(0.0));
  CHECK(cosine_lr(25, 100, 1.0) == doctest::Approx((1 + std::cos(M_PI / 4)) / 2));
}

TEST_CASE("AdamW first step, convergence, decay and non-finite guard") {
  Param p("p", PotentialTensor({1, 3}, {0.0, 5.0, -2.0}));
  AdamW opt;
  p.ensure_grad() = {4.0, -0.001, 0.0};
  opt.step({&p}, 0.1);
  // Bias-corrected first step moves every coordinate with nonzero grad by lr.
  CHECK(p.value[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(5.1).epsilon(1e-5));
  CHECK(p.value[2] == -2.0);

  AdamW opt2;
  for (int i = 0; i < 800; ++i) {
    for (std::size_t j = 0; j < 3; ++j) p.ensure_grad()[j] = 2.0 * (p.value[j] - 3.0);
    opt2.step({&p}, 0.05);
  }
  for (std::size_t j = 0; j < 3; ++j) CHECK(p.value[j] == doctest::Approx(3.0).epsilon(1e-3));

  AdamWConfig c;
  c.weight_decay = 0.5;
  AdamW decay(c);
  Param matrix("m", PotentialTensor({1, 2}, {2.0, -4.0}));
  Param vec("v", PotentialTensor({2}, {2.0, -4.0}));
  matrix.zero_grad();
  vec.zero_grad();
  decay.step({&matrix, &vec}, 0.1);
  CHECK(matrix.value[0] == doctest::Approx(2.0 * (1 - 0.05)));
  CHECK(vec.value[0] == 2.0);

  Param frozen("f", PotentialTensor({2}, {1.0, 1.0}));
  frozen.trainable = false;
  frozen.ensure_grad() = {1.0, 1.0};
  decay.step({&frozen}, 0.1);
  CHECK(frozen.value.vec() == std::vector<double>{1.0, 1.0});

  p.ensure_grad()[1] = std::nan("");
  CHECK_THROWS_AS(opt2.step({&p}, 0.1), NonFiniteGradient);
}
