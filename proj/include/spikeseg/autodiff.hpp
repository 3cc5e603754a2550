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

#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spikeseg/op_counter.hpp"
#include "spikeseg/tensor.hpp"

namespace spikeseg {

/// A learnable tensor with its gradient slot and optimizer moments.
/// grad, m and v stay empty until first used so large models can be built
/// just to count them.
struct Param {
  std::string name;
  PotentialTensor value;
  std::vector<double> grad;
  std::vector<double> m;
  std::vector<double> v;
  bool trainable = true;

  Param() = default;
  Param(std::string n, PotentialTensor init);

  void zero_grad();
  std::vector<double>& ensure_grad();
  std::size_t numel() const { return value.numel(); }
};

using ParamList = std::vector<Param*>;

/// How spiking nonlinearities behave on the tape.
///  - kSurrogate: hard Heaviside forward, ATan surrogate for dS/dH (training).
///  - kRelaxed: ATan primitive forward, exact derivative (gradient checks only).
enum class SpikeMode { kSurrogate, kRelaxed };

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const PotentialTensor& value() const;
  const Dims& dims() const { return value().dims(); }
};

/// Called for every spiking layer output when set (instrumentation).
using SpikeObserver = std::function<void(const std::string& layer, const PotentialTensor& spikes)>;

struct TapeOptions {
  bool record = true;
  SpikeMode spike_mode = SpikeMode::kSurrogate;
  /// When false the -u_th*S reset term is cut from the backward pass.
  bool reset_path_grad = true;
  OpCounter* counter = nullptr;
  SpikeObserver observer;
  /// Run reparameterisable layers through their folded single kernels.
  bool fold_reparam = false;
};

/// Reverse-mode tape. Nodes are appended in execution order; backward()
/// visits them in exactly the reverse order. One tape per forward pass.
class Tape {
 public:
  /// Receives the gradient of the node's output and the output value itself.
  using BackwardFn =
      std::function<void(Tape&, std::span<const double> grad_out, const PotentialTensor& out)>;

  explicit Tape(TapeOptions options = {});
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const TapeOptions& options() const { return options_; }
  bool recording() const { return options_.record; }
  SpikeMode spike_mode() const { return options_.spike_mode; }
  OpCounter* counter() const { return options_.counter; }

  /// Non-differentiable input. `spike_levels` > 0 marks integer spikes in [0, spike_levels].
  Var constant(PotentialTensor value, int spike_levels = 0);
  /// Leaf bound to a parameter; backward adds into p.grad.
  Var param(Param& p);

  /// Appends a computed node. `fn` is kept only when recording and some input needs grad.
  Var emit(PotentialTensor value, std::initializer_list<Var> inputs, BackwardFn fn, int spike_levels = 0);
  Var emit(PotentialTensor value, const std::vector<Var>& inputs, BackwardFn fn, int spike_levels = 0);

  const PotentialTensor& value(Var v) const;
  int spike_levels(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient buffer of a node, zero-initialised on first access.
  std::vector<double>& grad(Var v);
  /// Accumulates into the gradient of `v` if it needs one.
  void accumulate(Var v, std::span<const double> g);

  /// Seeds d(loss)/d(loss) = 1 and runs the recorded backward functions.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    PotentialTensor own;
    const PotentialTensor* external = nullptr;
    std::vector<double> grad;
    BackwardFn backward;
    Param* param = nullptr;
    bool requires_grad = false;
    int spike_levels = 0;

    const PotentialTensor& value() const { return external ? *external : own; }
  };

  void check(Var v) const;

  TapeOptions options_;
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

/// Collects parameters from modules exposing `collect(ParamList&)`.
template <typename... Modules>
ParamList collect_params(Modules&... modules) {
  ParamList out;
  (modules.collect(out), ...);
  return out;
}

std::size_t count_params(const ParamList& params);
void zero_grads(const ParamList& params);

}  // namespace spikeseg
