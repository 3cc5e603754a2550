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

#include "spikeseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "spikeseg/neuron.hpp"
#include "spikeseg/simd/kernels.hpp"

namespace spikeseg::ops {

namespace {

bool needs(Tape& tp, Var v) { return v.valid() && tp.requires_grad(v); }

Tape& tape_of(Var v) {
  if (!v.valid()) throw std::logic_error("operation on an empty variable");
  return *v.tape;
}

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("operands live on different tapes");
}

void require_same_dims(const PotentialTensor& a, const PotentialTensor& b, const char* what) {
  if (a.dims() != b.dims())
    throw ShapeError(std::string(what) + ": " + dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
}

std::vector<Var> inputs_of(std::initializer_list<Var> vs) {
  std::vector<Var> out;
  for (Var v : vs)
    if (v.valid()) out.push_back(v);
  return out;
}

struct ConvGeom {
  int t, h, w, cin, kh, kw, cout, ho, wo, stride, pad_h, pad_w;
  bool depthwise;
  std::size_t w_cin() const { return depthwise ? 1 : static_cast<std::size_t>(cin); }
};

template <typename Fn>
void for_each_tap(const ConvGeom& g, Fn fn) {
  for (int t = 0; t < g.t; ++t)
    for (int oh = 0; oh < g.ho; ++oh)
      for (int ow = 0; ow < g.wo; ++ow) {
        const std::size_t out_pix = (static_cast<std::size_t>(t) * g.ho + oh) * g.wo + ow;
        for (int kh = 0; kh < g.kh; ++kh) {
          const int ih = oh * g.stride - g.pad_h + kh;
          if (ih < 0 || ih >= g.h) continue;
          for (int kw = 0; kw < g.kw; ++kw) {
            const int iw = ow * g.stride - g.pad_w + kw;
            if (iw < 0 || iw >= g.w) continue;
            const std::size_t in_pix = (static_cast<std::size_t>(t) * g.h + ih) * g.w + iw;
            fn(out_pix, in_pix, static_cast<std::size_t>(kh * g.kw + kw));
          }
        }
      }
}

void count_conv(OpCounter& counter, const ConvArgs& args, const ConvGeom& g, const PotentialTensor& x,
                int levels, bool has_bias) {
  const std::uint64_t fan_out = g.depthwise ? 1 : static_cast<std::uint64_t>(g.cout);
  if (levels > 0) {
    std::vector<double> pix_sum(static_cast<std::size_t>(g.t) * g.h * g.w, 0.0);
    for (std::size_t p = 0; p < pix_sum.size(); ++p)
      for (int c = 0; c < g.cin; ++c) pix_sum[p] += x[p * g.cin + c];
    std::uint64_t ac = 0, pairs = 0;
    for_each_tap(g, [&](std::size_t, std::size_t in_pix, std::size_t) {
      ac += static_cast<std::uint64_t>(std::llround(pix_sum[in_pix]));
      ++pairs;
    });
    counter.add_synaptic(args.name, pairs * g.cin * fan_out * static_cast<std::uint64_t>(levels), ac * fan_out);
  } else {
    std::uint64_t pairs = 0;
    for_each_tap(g, [&](std::size_t, std::size_t, std::size_t) { ++pairs; });
    counter.add_mac(args.name, pairs * g.cin * fan_out, args.embedding, args.auxiliary);
  }
  // Pretraining-only layers are never deployed; their bias adds are not tallied.
  if (has_bias && !args.auxiliary)
    counter.add_additions(args.name, static_cast<std::uint64_t>(g.t) * g.ho * g.wo * g.cout);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var conv2d(Var x, Var w, Var bias, const ConvArgs& args) {
  Tape& tp = tape_of(x);
  same_tape(x, w);
  const PotentialTensor& X = x.value();
  const PotentialTensor& Wt = w.value();
  if (X.rank() != 4 || Wt.rank() != 4) throw ShapeError("conv2d expects rank-4 input and weight");
  ConvGeom g{};
  g.t = X.dim(0), g.h = X.dim(1), g.w = X.dim(2), g.cin = X.dim(3);
  g.kh = Wt.dim(0), g.kw = Wt.dim(1);
  g.depthwise = args.depthwise;
  if (g.depthwise) {
    if (Wt.dim(2) != 1 || Wt.dim(3) != g.cin)
      throw ShapeError("depthwise weight " + dims_to_string(Wt.dims()) + " for " + std::to_string(g.cin) + " channels");
    g.cout = g.cin;
  } else {
    if (Wt.dim(2) != g.cin)
      throw ShapeError("conv weight " + dims_to_string(Wt.dims()) + " for input " + dims_to_string(X.dims()));
    g.cout = Wt.dim(3);
  }
  if (args.stride != 1 && args.stride != 2) throw ValueError("conv stride must be 1 or 2");
  g.stride = args.stride;
  g.pad_h = args.pad < 0 ? g.kh / 2 : args.pad;
  g.pad_w = args.pad < 0 ? g.kw / 2 : args.pad;
  g.ho = (g.h + 2 * g.pad_h - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad_w - g.kw) / g.stride + 1;
  if (g.ho < 1 || g.wo < 1) throw ShapeError("conv output would be empty");
  if (bias.valid()) {
    same_tape(x, bias);
    if (bias.value().numel() != static_cast<std::size_t>(g.cout)) throw ShapeError("conv bias size mismatch");
  }

  const int levels = tp.spike_levels(x);
  const auto& k = simd::kernels();
  PotentialTensor Y({g.t, g.ho, g.wo, g.cout});
  double* y = Y.mutable_data().data();
  const double* xd = X.data().data();
  const double* wd = Wt.data().data();
  const std::size_t cin = static_cast<std::size_t>(g.cin), cout = static_cast<std::size_t>(g.cout);
  const std::size_t tap_stride = g.w_cin() * cout;
  if (bias.valid()) {
    const double* b = bias.value().data().data();
    for (std::size_t p = 0; p < Y.numel() / cout; ++p) std::copy(b, b + cout, y + p * cout);
  }
  for_each_tap(g, [&](std::size_t op, std::size_t ip, std::size_t tap) {
    const double* xp = xd + ip * cin;
    const double* wp = wd + tap * tap_stride;
    double* yp = y + op * cout;
    if (g.depthwise)
      k.vmadd(xp, wp, yp, cin);
    else if (levels > 0)
      k.rows_accumulate(xp, wp, yp, cin, cout);
    else
      k.rows_axpy(xp, wp, yp, cin, cout);
  });
  if (tp.counter() && !args.name.empty()) count_conv(*tp.counter(), args, g, X, levels, bias.valid());

  auto backward = [x, w, bias, g, tap_stride](Tape& t, std::span<const double> dy, const PotentialTensor&) {
    const auto& kt = simd::kernels();
    const double* xd = t.value(x).data().data();
    const double* wd = t.value(w).data().data();
    double* dx = needs(t, x) ? t.grad(x).data() : nullptr;
    double* dw = needs(t, w) ? t.grad(w).data() : nullptr;
    const std::size_t cin = static_cast<std::size_t>(g.cin), cout = static_cast<std::size_t>(g.cout);
    if (bias.valid() && needs(t, bias)) {
      double* db = t.grad(bias).data();
      for (std::size_t p = 0; p < dy.size() / cout; ++p) kt.add(dy.data() + p * cout, db, cout);
    }
    for_each_tap(g, [&](std::size_t op, std::size_t ip, std::size_t tap) {
      const double* dyp = dy.data() + op * cout;
      const double* xp = xd + ip * cin;
      if (g.depthwise) {
        if (dw) kt.vmadd(xp, dyp, dw + tap * tap_stride, cin);
        if (dx) kt.vmadd(wd + tap * tap_stride, dyp, dx + ip * cin, cin);
      } else {
        if (dw) kt.outer_acc(xp, dyp, dw + tap * tap_stride, cin, cout);
        if (dx) kt.rows_dot(wd + tap * tap_stride, dyp, dx + ip * cin, cin, cout);
      }
    });
  };
  return tp.emit(std::move(Y), inputs_of({x, w, bias}), backward);
}

Var linear(Var x, Var w, Var bias, const ConvArgs& args) {
  const Dims& d = x.value().dims();
  if (d.size() != 2) throw ShapeError("linear expects [M,D] input");
  const Dims& wd = w.value().dims();
  if (wd.size() != 2 || wd[0] != d[1]) throw ShapeError("linear weight " + dims_to_string(wd));
  Var w4 = reshape(w, {1, 1, wd[0], wd[1]});
  Var y = conv2d(reshape(x, {1, 1, d[0], d[1]}), w4, bias, args);
  return reshape(y, {d[0], wd[1]});
}

Var spike(Var x, Var beta_logit, const SpikeArgs& args) {
  Tape& tp = tape_of(x);
  const PotentialTensor& X = x.value();
  if (X.rank() < 1 || X.dim(0) < 1) throw ShapeError("spike input needs a leading time axis");
  if (args.levels < 1) throw ValueError("spike levels must be >= 1");
  if (!(args.u_th > 0.0) || !(args.scale >= 1.0) || !(args.width > 0.0))
    throw ValueError("invalid spiking constants");
  const int steps = X.dim(0);
  const std::size_t n = X.numel() / static_cast<std::size_t>(steps);
  std::size_t group = 1;
  if (args.mask) {
    const std::size_t mn = args.mask->numel();
    if (mn == 0 || X.numel() % mn != 0) throw ShapeError("spike mask does not tile the input");
    group = X.numel() / mn;
  }
  double beta = args.fixed_beta;
  if (beta_logit.valid()) {
    same_tape(x, beta_logit);
    if (beta_logit.value().numel() != 1) throw ShapeError("beta logit must be a scalar");
    beta = sigmoid(beta_logit.value()[0]);
  }
  const double th = args.scale * args.u_th;
  const bool relaxed = tp.spike_mode() == SpikeMode::kRelaxed;
  const int levels = args.levels;
  const double sc = args.scale, width = args.width;

  auto fire = [=](double h) {
    if (relaxed) {
      double s = 0.0;
      for (int j = 1; j <= levels; ++j) s += atan_primitive((h - j * th) / sc, width);
      return s;
    }
    if (levels == 1) return h >= th ? 1.0 : 0.0;
    return std::clamp(std::floor(h / th), 0.0, static_cast<double>(levels));
  };

  auto h_store = std::make_shared<std::vector<double>>(tp.recording() ? X.numel() : 0);
  PotentialTensor S(X.dims());
  std::vector<double> u(n, 0.0);
  const double* m = args.mask ? args.mask->data().data() : nullptr;
  for (int t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = static_cast<std::size_t>(t) * n + i;
      const double xi = m ? X[idx] * m[idx / group] : X[idx];
      const double h = beta * u[i] + xi;
      const double s = fire(h);
      u[i] = h - th * s;
      S[idx] = s;
      if (!h_store->empty()) (*h_store)[idx] = h;
    }
  }
  if (!relaxed && !args.name.empty()) {
    if (tp.counter()) {
      std::uint64_t fired = 0;
      for (double s : S.data()) fired += static_cast<std::uint64_t>(s);
      tp.counter()->add_spikes(args.name, fired, S.numel() * static_cast<std::uint64_t>(levels));
    }
    if (tp.options().observer) tp.options().observer(args.name, S);
  }

  std::shared_ptr<const PotentialTensor> mask_copy;
  if (args.mask) mask_copy = std::make_shared<const PotentialTensor>(*args.mask);
  const bool reset_grad = tp.options().reset_path_grad;
  auto backward = [=](Tape& tp2, std::span<const double> dy, const PotentialTensor&) {
    const std::vector<double>& H = *h_store;
    double* dx = needs(tp2, x) ? tp2.grad(x).data() : nullptr;
    const double* mk = mask_copy ? mask_copy->data().data() : nullptr;
    std::vector<double> du(n, 0.0);
    double dbeta = 0.0;
    for (int t = steps - 1; t >= 0; --t) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = static_cast<std::size_t>(t) * n + i;
        const double h = H[idx];
        double g = 0.0;
        for (int j = 1; j <= levels; ++j) g += atan_surrogate((h - j * th) / sc, width);
        g /= sc;
        const double ds = dy[idx] - (reset_grad ? th * du[i] : 0.0);
        const double dh = du[i] + ds * g;
        if (dx) dx[idx] += mk ? dh * mk[idx / group] : dh;
        if (t > 0) {
          const double hp = H[idx - n];
          dbeta += dh * (hp - th * fire(hp));
        }
        du[i] = beta * dh;
      }
    }
    if (beta_logit.valid() && needs(tp2, beta_logit)) tp2.grad(beta_logit)[0] += dbeta * beta * (1.0 - beta);
  };
  return tp.emit(std::move(S), inputs_of({x, beta_logit}), backward, relaxed ? 0 : levels);
}

Var add(Var a, Var b, const std::string& count_name) {
  Tape& tp = tape_of(a);
  same_tape(a, b);
  const auto& A = a.value();
  const auto& B = b.value();
  require_same_dims(A, B, "add");
  PotentialTensor Y = A;
  simd::kernels().add(B.data().data(), Y.mutable_data().data(), Y.numel());
  if (tp.counter() && !count_name.empty()) tp.counter()->add_additions(count_name, Y.numel());
  return tp.emit(std::move(Y), {a, b}, [a, b](Tape& t, std::span<const double> dy, const PotentialTensor&) {
    t.accumulate(a, dy);
    t.accumulate(b, dy);
  });
}

Var sub(Var a, Var b) {
  Tape& tp = tape_of(a);
  same_tape(a, b);
  const auto& A = a.value();
  const auto& B = b.value();
  require_same_dims(A, B, "sub");
  PotentialTensor Y = A;
  for (std::size_t i = 0; i < Y.numel(); ++i) Y[i] -= B[i];
  return tp.emit(std::move(Y), {a, b}, [a, b](Tape& t, std::span<const double> dy, const PotentialTensor&) {
    t.accumulate(a, dy);
    if (needs(t, b)) {
      auto& gb = t.grad(b);
      for (std::size_t i = 0; i < dy.size(); ++i) gb[i] -= dy[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& tp = tape_of(a);
  PotentialTensor Y = a.value();
  for (double& v : Y.mutable_data()) v *= s;
  return tp.emit(std::move(Y), {a}, [a, s](Tape& t, std::span<const double> dy, const PotentialTensor&) {
    auto& ga = t.grad(a);
    simd::kernels().axpy(s, dy.data(), ga.data(), dy.size());
  });
}

Var mask_mul(Var x, const PotentialTensor& m) {
  Tape& tp = tape_of(x);
  const auto& X = x.value();
  if (m.numel() == 0 || X.numel() % m.numel() != 0) throw ShapeError("mask does not tile the input");
  const std::size_t group = X.numel() / m.numel();
  PotentialTensor Y = X;
  for (std::size_t i = 0; i < Y.numel(); ++i) Y[i] *= m[i / group];
  auto mc = std::make_shared<const PotentialTensor>(m);
  return tp.emit(std::move(Y), {x}, [x, mc, group](Tape& t, std::span<const double> dy, const PotentialTensor&) {
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) gx[i] += dy[i] * (*mc)[i / group];
  }, tp.spike_levels(x));
}

Var reshape(Var x, Dims dims) {
  Tape& tp = tape_of(x);
  PotentialTensor Y = x.value().reshaped(std::move(dims));
  return tp.emit(std::move(Y), {x}, [x](Tape& t, std::span<const double> dy, const PotentialTensor&) {
    t.accumulate(x, dy);
  }, tp.spike_levels(x));
}

Var slice0(Var x, int begin, int end) {
  Tape& tp = tape_of(x);
  const auto& X = x.value();
  if (X.rank() < 1 || begin < 0 || end > X.dim(0) || begin >= end) throw ShapeError("slice0 range out of bounds");
  Dims d = X.dims();
  const std::size_t row = X.numel() / static_cast<std::size_t>(d[0]);
  d[0] = end - begin;
  std::vector<double> data(X.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                           X.data().begin() + static_cast<std::ptrdiff_t>(end * row));
  const std::size_t off = static_cast<std::size_t>(begin) * row;
  return tp.emit(PotentialTensor(d, std::move(data)), {x},
                 [x, off](Tape& t, std::span<const double> dy, const PotentialTensor&) {
                   auto& gx = t.grad(x);
                   for (std::size_t i = 0; i < dy.size(); ++i) gx[off + i] += dy[i];
                 },
                 tp.spike_levels(x));
}

Var concat0(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat0 of nothing");
  Tape& tp = tape_of(xs[0]);
  Dims d = xs[0].value().dims();
  if (d.empty()) throw ShapeError("concat0 needs rank >= 1");
  Dims tail(d.begin() + 1, d.end());
  int lead = 0;
  int levels = tp.spike_levels(xs[0]);
  std::vector<double> data;
  for (Var v : xs) {
    same_tape(xs[0], v);
    const auto& V = v.value();
    if (Dims(V.dims().begin() + 1, V.dims().end()) != tail) throw ShapeError("concat0 trailing dims differ");
    lead += V.dim(0);
    data.insert(data.end(), V.data().begin(), V.data().end());
    if (tp.spike_levels(v) != levels) levels = 0;
  }
  d[0] = lead;
  return tp.emit(PotentialTensor(d, std::move(data)), xs,
                 [xs](Tape& t, std::span<const double> dy, const PotentialTensor&) {
                   std::size_t off = 0;
                   for (Var v : xs) {
                     const std::size_t len = t.value(v).numel();
                     t.accumulate(v, dy.subspan(off, len));
                     off += len;
                   }
                 },
                 levels);
}

Var upsample_nearest(Var x, int factor) {
  Tape& tp = tape_of(x);
  const auto& X = x.value();
  if (X.rank() != 4) throw ShapeError("upsample expects [T,H,W,C]");
  if (factor < 1) throw ValueError("upsample factor must be >= 1");
  if (factor == 1) return x;
  const int T = X.dim(0), H = X.dim(1), W = X.dim(2), C = X.dim(3);
  const int Ho = H * factor, Wo = W * factor;
  PotentialTensor Y({T, Ho, Wo, C});
  auto src = [=](int t, int oh, int ow) {
    return ((static_cast<std::size_t>(t) * H + oh / factor) * W + ow / factor) * C;
  };
  for (int t = 0; t < T; ++t)
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow) {
        const std::size_t o = ((static_cast<std::size_t>(t) * Ho + oh) * Wo + ow) * C;
        std::copy_n(X.data().begin() + static_cast<std::ptrdiff_t>(src(t, oh, ow)), C,
                    Y.mutable_data().begin() + static_cast<std::ptrdiff_t>(o));
      }
  return tp.emit(std::move(Y), {x},
                 [x, T, Ho, Wo, C, src](Tape& t, std::span<const double> dy, const PotentialTensor&) {
                   auto& gx = t.grad(x);
                   const auto& k = simd::kernels();
                   for (int f = 0; f < T; ++f)
                     for (int oh = 0; oh < Ho; ++oh)
                       for (int ow = 0; ow < Wo; ++ow) {
                         const std::size_t o = ((static_cast<std::size_t>(f) * Ho + oh) * Wo + ow) * C;
                         k.add(dy.data() + o, gx.data() + src(f, oh, ow), static_cast<std::size_t>(C));
                       }
                 },
                 tp.spike_levels(x));
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& tp = tape_of(x);
  const auto& X = x.value();
  const int D = X.dims().back();
  if (gamma.value().numel() != static_cast<std::size_t>(D) || beta.value().numel() != static_cast<std::size_t>(D))
    throw ShapeError("layer_norm affine size mismatch");
  const std::size_t rows = X.numel() / static_cast<std::size_t>(D);
  PotentialTensor Y(X.dims());
  auto xhat = std::make_shared<std::vector<double>>(X.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  const auto& G = gamma.value();
  const auto& B = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data().data() + r * D;
    double mu = 0.0;
    for (int i = 0; i < D; ++i) mu += xr[i];
    mu /= D;
    double var = 0.0;
    for (int i = 0; i < D; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= D;
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (int i = 0; i < D; ++i) {
      const double xh = (xr[i] - mu) * rs;
      (*xhat)[r * D + i] = xh;
      Y[r * D + i] = G[i] * xh + B[i];
    }
  }
  return tp.emit(std::move(Y), {x, gamma, beta},
                 [x, gamma, beta, xhat, rstd, rows, D](Tape& t, std::span<const double> dy, const PotentialTensor&) {
                   const auto& G = t.value(gamma);
                   double* dg = needs(t, gamma) ? t.grad(gamma).data() : nullptr;
                   double* db = needs(t, beta) ? t.grad(beta).data() : nullptr;
                   double* dx = needs(t, x) ? t.grad(x).data() : nullptr;
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* xh = xhat->data() + r * D;
                     const double* g = dy.data() + r * D;
                     double m1 = 0.0, m2 = 0.0;
                     for (int i = 0; i < D; ++i) {
                       if (dg) dg[i] += g[i] * xh[i];
                       if (db) db[i] += g[i];
                       const double dxh = g[i] * G[i];
                       m1 += dxh;
                       m2 += dxh * xh[i];
                     }
                     if (!dx) continue;
                     m1 /= D;
                     m2 /= D;
                     for (int i = 0; i < D; ++i) dx[r * D + i] += (*rstd)[r] * (g[i] * G[i] - m1 - xh[i] * m2);
                   }
                 });
}

Var gelu(Var x) {
  Tape& tp = tape_of(x);
  PotentialTensor Y = x.value();
  for (double& v : Y.mutable_data()) v = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  return tp.emit(std::move(Y), {x}, [x](Tape& t, std::span<const double> dy, const PotentialTensor&) {
    const auto& X = t.value(x);
    auto& gx = t.grad(x);
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const double v = X[i];
      const double d = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += dy[i] * d;
    }
  });
}

Var softmax_last(Var x) {
  Tape& tp = tape_of(x);
  const auto& X = x.value();
  const int K = X.dims().back();
  const std::size_t rows = X.numel() / static_cast<std::size_t>(K);
  PotentialTensor Y(X.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data().data() + r * K;
    const double mx = *std::max_element(xr, xr + K);
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += (Y[r * K + k] = std::exp(xr[k] - mx));
    for (int k = 0; k < K; ++k) Y[r * K + k] /= z;
  }
  return tp.emit(std::move(Y), {x}, [x, rows, K](Tape& t, std::span<const double> dy, const PotentialTensor& y) {
    auto& gx = t.grad(x);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int k = 0; k < K; ++k) dot += dy[r * K + k] * y[r * K + k];
      for (int k = 0; k < K; ++k) gx[r * K + k] += y[r * K + k] * (dy[r * K + k] - dot);
    }
  });
}

Var mh_attention(Var qkv, int heads) {
  Tape& tp = tape_of(qkv);
  const auto& X = qkv.value();
  if (X.rank() != 2 || X.dim(1) % 3 != 0) throw ShapeError("attention expects [M,3D]");
  const int M = X.dim(0), D = X.dim(1) / 3;
  if (heads < 1 || D % heads != 0) throw ValueError("head count must divide the width");
  const int dh = D / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t stride = static_cast<std::size_t>(3 * D);
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(heads) * M * M);
  PotentialTensor Y({M, D});
  const double* x = X.data().data();
  for (int hd = 0; hd < heads; ++hd) {
    double* P = probs->data() + static_cast<std::size_t>(hd) * M * M;
    for (int i = 0; i < M; ++i) {
      const double* q = x + i * stride + hd * dh;
      double mx = -INFINITY;
      for (int j = 0; j < M; ++j) {
        const double* k = x + j * stride + D + hd * dh;
        double s = 0.0;
        for (int e = 0; e < dh; ++e) s += q[e] * k[e];
        P[i * M + j] = s * sc;
        mx = std::max(mx, P[i * M + j]);
      }
      double z = 0.0;
      for (int j = 0; j < M; ++j) z += (P[i * M + j] = std::exp(P[i * M + j] - mx));
      for (int j = 0; j < M; ++j) P[i * M + j] /= z;
      double* y = Y.mutable_data().data() + static_cast<std::size_t>(i) * D + hd * dh;
      for (int j = 0; j < M; ++j) {
        const double* v = x + j * stride + 2 * D + hd * dh;
        for (int e = 0; e < dh; ++e) y[e] += P[i * M + j] * v[e];
      }
    }
  }
  return tp.emit(std::move(Y), {qkv},
                 [qkv, probs, M, D, dh, heads, sc, stride](Tape& t, std::span<const double> dy, const PotentialTensor&) {
                   const double* x = t.value(qkv).data().data();
                   double* gx = t.grad(qkv).data();
                   std::vector<double> dp(static_cast<std::size_t>(M));
                   for (int hd = 0; hd < heads; ++hd) {
                     const double* P = probs->data() + static_cast<std::size_t>(hd) * M * M;
                     for (int i = 0; i < M; ++i) {
                       const double* g = dy.data() + static_cast<std::size_t>(i) * D + hd * dh;
                       double dot = 0.0;
                       for (int j = 0; j < M; ++j) {
                         const double* v = x + j * stride + 2 * D + hd * dh;
                         double* gv = gx + j * stride + 2 * D + hd * dh;
                         double s = 0.0;
                         for (int e = 0; e < dh; ++e) {
                           s += g[e] * v[e];
                           gv[e] += P[i * M + j] * g[e];
                         }
                         dp[j] = s;
                         dot += s * P[i * M + j];
                       }
                       const double* q = x + i * stride + hd * dh;
                       double* gq = gx + i * stride + hd * dh;
                       for (int j = 0; j < M; ++j) {
                         const double ds = P[i * M + j] * (dp[j] - dot) * sc;
                         if (ds == 0.0) continue;
                         const double* k = x + j * stride + D + hd * dh;
                         double* gk = gx + j * stride + D + hd * dh;
                         for (int e = 0; e < dh; ++e) {
                           gq[e] += ds * k[e];
                           gk[e] += ds * q[e];
                         }
                       }
                     }
                   }
                 });
}

Var sum(Var x) {
  Tape& tp = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tp.emit(PotentialTensor({1}, {s}), {x}, [x](Tape& t, std::span<const double> dy, const PotentialTensor&) {
    auto& gx = t.grad(x);
    for (double& g : gx) g += dy[0];
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().numel());
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var mse(Var a, Var b) {
  Tape& tp = tape_of(a);
  same_tape(a, b);
  const auto& A = a.value();
  const auto& B = b.value();
  require_same_dims(A, B, "mse");
  if (A.numel() == 0) throw ShapeError("mse of empty tensors");
  const double n = static_cast<double>(A.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < A.numel(); ++i) s += (A[i] - B[i]) * (A[i] - B[i]);
  return tp.emit(PotentialTensor({1}, {s / n}), {a, b},
                 [a, b, n](Tape& t, std::span<const double> dy, const PotentialTensor&) {
                   const auto& A = t.value(a);
                   const auto& B = t.value(b);
                   const double c = 2.0 * dy[0] / n;
                   double* ga = needs(t, a) ? t.grad(a).data() : nullptr;
                   double* gb = needs(t, b) ? t.grad(b).data() : nullptr;
                   for (std::size_t i = 0; i < A.numel(); ++i) {
                     const double d = c * (A[i] - B[i]);
                     if (ga) ga[i] += d;
                     if (gb) gb[i] -= d;
                   }
                 });
}

}  // namespace spikeseg::ops
