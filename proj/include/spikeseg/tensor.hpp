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

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace spikeseg {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Dims = std::vector<int>;

std::size_t numel(const Dims& dims);
std::string dims_to_string(const Dims& dims);

/// Clip / feature-map geometry, frames first.
struct Shape4 {
  int t = 1;
  int h = 1;
  int w = 1;
  int c = 1;

  Dims dims() const { return {t, h, w, c}; }
  std::size_t numel() const;
  /// Throws ShapeError unless every dim is >= 1.
  void validate() const;
  /// Additionally requires h and w divisible by 16 (encoder input).
  void validate_encoder_input() const;
  static Shape4 from_dims(const Dims& dims);

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Real-valued tensor, row-major, double storage.
class PotentialTensor {
 public:
  PotentialTensor() = default;
  explicit PotentialTensor(Dims dims);  // zero-filled
  PotentialTensor(Dims dims, std::vector<double> data);

  static PotentialTensor filled(Dims dims, double value);

  const Dims& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double at(int t, int h, int w, int c) const;

  /// Same storage viewed under new dims; element count must match.
  PotentialTensor reshaped(Dims dims) const;
  bool all_finite() const;

  friend bool operator==(const PotentialTensor&, const PotentialTensor&) = default;

 private:
  Dims dims_;
  std::vector<double> data_;
};

/// Binary or small-integer activations. Every value is < alphabet().
class SpikeTensor {
 public:
  SpikeTensor() = default;
  SpikeTensor(Dims dims, std::uint8_t alphabet);  // zero-filled
  SpikeTensor(Dims dims, std::vector<std::uint8_t> data, std::uint8_t alphabet = 2);

  const Dims& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return data_.size(); }
  std::uint8_t alphabet() const { return alphabet_; }

  std::span<const std::uint8_t> data() const { return data_; }
  std::uint8_t operator[](std::size_t i) const { return data_[i]; }
  /// Checked write; rejects values outside the alphabet.
  void set(std::size_t i, std::uint8_t v);

  SpikeTensor reshaped(Dims dims) const;
  PotentialTensor to_potential() const;
  /// Converts integer-valued doubles; throws ValueError on anything else.
  static SpikeTensor from_potential(const PotentialTensor& p, std::uint8_t alphabet);

  friend bool operator==(const SpikeTensor&, const SpikeTensor&) = default;

 private:
  Dims dims_;
  std::vector<std::uint8_t> data_;
  std::uint8_t alphabet_ = 2;
};

/// [T,H,W,C] -> [(T*H*W), C] in t-major, then h, then w order.
PotentialTensor flatten_spacetime(const PotentialTensor& x);
SpikeTensor flatten_spacetime(const SpikeTensor& x);
PotentialTensor unflatten_spacetime(const PotentialTensor& tokens, const Shape4& shape);
SpikeTensor unflatten_spacetime(const SpikeTensor& tokens, const Shape4& shape);

/// Fraction of nonzero entries. Throws ValueError on an empty tensor.
double spike_rate(const SpikeTensor& s);

// Dump format: "SPKT", u8 dtype, u8 rank, u32 dims[rank], payload (all LE).
enum class DType : std::uint8_t { kU8 = 0, kF32 = 1, kF64 = 2 };

using AnyTensor = std::variant<PotentialTensor, SpikeTensor>;

void write_tensor(std::ostream& os, const PotentialTensor& t, DType dtype = DType::kF64);
void write_tensor(std::ostream& os, const SpikeTensor& t);
AnyTensor read_tensor(std::istream& is);
void save_tensor(const std::string& path, const AnyTensor& t);
AnyTensor load_tensor(const std::string& path);

}  // namespace spikeseg
