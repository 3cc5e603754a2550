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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spikeseg/autodiff.hpp"
#include "spikeseg/neuron.hpp"
#include "spikeseg/op_counter.hpp"
#include "spikeseg/tensor.hpp"

// Spike-driven Hamming attention.
//
// For binary q, k the +-1 remap turns q.k into D - 2*hamming(q,k), so the
// charge (2Q-1)(2K-1)^T V needs only additions and subtractions. Grouping
// it as (2Q-1)[(2K-1)^T V] costs O(TN*D^2) instead of O((TN)^2*D).

namespace spikeseg {

/// Binary query/key/value token matrices [(T*N), D], frames first.
struct AttentionOperands {
  SpikeTensor q;
  SpikeTensor k;
  SpikeTensor v;
  int frames = 1;

  /// Throws ShapeError on mismatched shapes, ValueError on non-binary values.
  void validate() const;
  int tokens() const { return q.dim(0); }
  int tokens_per_frame() const { return tokens() / frames; }
  int width() const { return q.dim(1); }
};

/// Key frames [lo, hi) visible to one query frame.
struct FrameRange {
  int lo = 0;
  int hi = 0;
  bool empty() const { return hi <= lo; }
  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

enum class TemporalScope {
  kJoint,   // every frame sees all T frames
  kCausal,  // frame t sees frames 0..t
};

std::vector<FrameRange> scope_ranges(int frames, TemporalScope scope);
/// Frame t sees the `capacity` frames before it (never itself).
std::vector<FrameRange> memory_ranges(int frames, int capacity);

/// Integer charge (2Q-1)[(2K-1)^T V], flattened like q. Reordered form.
std::vector<std::int32_t> sdha_charge(const AttentionOperands& a, const std::vector<FrameRange>& ranges,
                                      OpCounter* counter = nullptr, const std::string& name = "sdha");
/// Same charge from the full score matrix; test oracle.
std::vector<std::int32_t> sdha_charge_naive(const AttentionOperands& a, const std::vector<FrameRange>& ranges,
                                            OpCounter* counter = nullptr, const std::string& name = "sdha_naive");

/// W = (2K-1)^T V over the tokens of frames [lo, hi), row-major D x D.
std::vector<std::int32_t> key_value_matrix(const AttentionOperands& a, int lo, int hi);

/// (2q-1).(2k-1) for equal-length binary rows.
int signed_dot(std::span<const std::uint8_t> q, std::span<const std::uint8_t> k);
int hamming(std::span<const std::uint8_t> q, std::span<const std::uint8_t> k);

struct SdhaOptions {
  TemporalScope scope = TemporalScope::kJoint;
  /// scale is overridden with 2D.
  NeuronParams neuron{};
};

/// Charge, then temporal LIF spiking at threshold 2D*u_th over the frame axis.
SpikeTensor sdha(const AttentionOperands& a, const SdhaOptions& opt = {}, OpCounter* counter = nullptr);
SpikeTensor sdha_naive(const AttentionOperands& a, const SdhaOptions& opt = {}, OpCounter* counter = nullptr);

/// Converts a flat charge into [T, N, D] potentials.
PotentialTensor charge_to_potential(const std::vector<std::int32_t>& charge, int frames, int width);

namespace ops {

/// Differentiable Hamming-attention charge on [T, ..., D] operands.
/// Output has q's dims; frames whose range is empty get zero charge.
Var sdha_charge(Var q, Var k, Var v, const std::vector<FrameRange>& ranges, const std::string& name = {});

}  // namespace ops

}  // namespace spikeseg
