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

#include "spikeseg/autodiff.hpp"

#include <algorithm>

namespace spikeseg {

Param::Param(std::string n, PotentialTensor init)
    : name(std::move(n)), value(std::move(init)) {}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

std::vector<double>& Param::ensure_grad() {
  if (grad.size() != value.numel()) grad.assign(value.numel(), 0.0);
  return grad;
}

std::size_t count_params(const ParamList& params) {
  std::size_t n = 0;
  for (const Param* p : params) n += p->numel();
  return n;
}

void zero_grads(const ParamList& params) {
  for (Param* p : params) p->zero_grad();
}

const PotentialTensor& Var::value() const { return tape->value(*this); }

Tape::Tape(TapeOptions options) : options_(std::move(options)) {}

void Tape::check(Var v) const {
  if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::logic_error("variable does not belong to this tape");
}

Var Tape::constant(PotentialTensor value, int spike_levels) {
  Node n;
  n.own = std::move(value);
  n.spike_levels = spike_levels;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Param& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = options_.record && p.trainable;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::emit(PotentialTensor value, std::initializer_list<Var> inputs, BackwardFn fn, int spike_levels) {
  return emit(std::move(value), std::vector<Var>(inputs), std::move(fn), spike_levels);
}

Var Tape::emit(PotentialTensor value, const std::vector<Var>& inputs, BackwardFn fn, int spike_levels) {
  bool needs = false;
  for (Var v : inputs) {
    check(v);
    needs = needs || nodes_[static_cast<std::size_t>(v.id)].requires_grad;
  }
  Node n;
  n.own = std::move(value);
  n.spike_levels = spike_levels;
  n.requires_grad = options_.record && needs;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const PotentialTensor& Tape::value(Var v) const {
  check(v);
  return nodes_[static_cast<std::size_t>(v.id)].value();
}

int Tape::spike_levels(Var v) const {
  check(v);
  return nodes_[static_cast<std::size_t>(v.id)].spike_levels;
}

bool Tape::requires_grad(Var v) const {
  check(v);
  return nodes_[static_cast<std::size_t>(v.id)].requires_grad;
}

std::vector<double>& Tape::grad(Var v) {
  check(v);
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.empty()) n.grad.assign(n.value().numel(), 0.0);
  return n.grad;
}

void Tape::accumulate(Var v, std::span<const double> g) {
  check(v);
  if (!nodes_[static_cast<std::size_t>(v.id)].requires_grad) return;
  auto& buf = grad(v);
  if (buf.size() != g.size()) throw std::logic_error("gradient size mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void Tape::backward(Var loss) {
  check(loss);
  if (!options_.record) throw std::logic_error("backward on a non-recording tape");
  if (backward_done_) throw std::logic_error("backward already ran on this tape");
  Node& root = nodes_[static_cast<std::size_t>(loss.id)];
  if (root.value().numel() != 1) throw ShapeError("backward needs a scalar loss");
  if (!root.requires_grad) throw std::logic_error("loss is detached from every parameter");
  backward_done_ = true;
  grad(loss)[0] += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.empty()) continue;
    if (n.param) {
      auto& pg = n.param->ensure_grad();
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    } else if (n.backward) {
      n.backward(*this, n.grad, n.value());
    }
    // Intermediate gradients are not needed once propagated.
    if (!n.param) std::vector<double>().swap(n.grad);
  }
}

}  // namespace spikeseg
