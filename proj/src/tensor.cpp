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

#include "spikeseg/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace spikeseg {

std::size_t numel(const Dims& dims) {
  std::size_t n = 1;
  for (int d : dims) {
    if (d < 0) throw ShapeError("negative dimension in " + dims_to_string(dims));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string dims_to_string(const Dims& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << ')';
  return os.str();
}

std::size_t Shape4::numel() const {
  return static_cast<std::size_t>(t) * h * w * c;
}

void Shape4::validate() const {
  if (t < 1 || h < 1 || w < 1 || c < 1)
    throw ShapeError("Shape4 dims must be >= 1, got " + dims_to_string(dims()));
}

void Shape4::validate_encoder_input() const {
  validate();
  if (h % 16 != 0 || w % 16 != 0)
    throw ShapeError("encoder input h and w must be divisible by 16, got " +
                     dims_to_string(dims()));
}

Shape4 Shape4::from_dims(const Dims& dims) {
  if (dims.size() != 4) throw ShapeError("expected rank-4 dims, got " + dims_to_string(dims));
  return {dims[0], dims[1], dims[2], dims[3]};
}

// ---------------------------------------------------------------------------

PotentialTensor::PotentialTensor(Dims dims) : dims_(std::move(dims)), data_(spikeseg::numel(dims_), 0.0) {}

PotentialTensor::PotentialTensor(Dims dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (data_.size() != spikeseg::numel(dims_))
    throw ShapeError("data size " + std::to_string(data_.size()) + " does not match dims " +
                     dims_to_string(dims_));
  if (!all_finite()) throw ValueError("PotentialTensor requires finite values");
}

PotentialTensor PotentialTensor::filled(Dims dims, double value) {
  PotentialTensor t(std::move(dims));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

double PotentialTensor::at(int t, int h, int w, int c) const {
  if (rank() != 4) throw ShapeError("at(t,h,w,c) requires rank 4");
  const std::size_t idx = ((static_cast<std::size_t>(t) * dims_[1] + h) * dims_[2] + w) * dims_[3] + c;
  return data_.at(idx);
}

PotentialTensor PotentialTensor::reshaped(Dims dims) const {
  if (spikeseg::numel(dims) != data_.size())
    throw ShapeError("cannot reshape " + dims_to_string(dims_) + " to " + dims_to_string(dims));
  PotentialTensor out;
  out.dims_ = std::move(dims);
  out.data_ = data_;
  return out;
}

bool PotentialTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

SpikeTensor::SpikeTensor(Dims dims, std::uint8_t alphabet)
    : dims_(std::move(dims)), data_(spikeseg::numel(dims_), 0), alphabet_(alphabet) {
  if (alphabet_ < 2) throw ValueError("spike alphabet must be >= 2");
}

SpikeTensor::SpikeTensor(Dims dims, std::vector<std::uint8_t> data, std::uint8_t alphabet)
    : dims_(std::move(dims)), data_(std::move(data)), alphabet_(alphabet) {
  if (alphabet_ < 2) throw ValueError("spike alphabet must be >= 2");
  if (data_.size() != spikeseg::numel(dims_))
    throw ShapeError("data size " + std::to_string(data_.size()) + " does not match dims " +
                     dims_to_string(dims_));
  for (std::uint8_t v : data_)
    if (v >= alphabet_)
      throw ValueError("spike value " + std::to_string(v) + " outside alphabet {0.." +
                       std::to_string(alphabet_ - 1) + "}");
}

void SpikeTensor::set(std::size_t i, std::uint8_t v) {
  if (v >= alphabet_) throw ValueError("spike value outside alphabet");
  data_.at(i) = v;
}

SpikeTensor SpikeTensor::reshaped(Dims dims) const {
  if (spikeseg::numel(dims) != data_.size())
    throw ShapeError("cannot reshape " + dims_to_string(dims_) + " to " + dims_to_string(dims));
  SpikeTensor out = *this;
  out.dims_ = std::move(dims);
  return out;
}

PotentialTensor SpikeTensor::to_potential() const {
  std::vector<double> d(data_.begin(), data_.end());
  return PotentialTensor(dims_, std::move(d));
}

SpikeTensor SpikeTensor::from_potential(const PotentialTensor& p, std::uint8_t alphabet) {
  std::vector<std::uint8_t> d(p.numel());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double v = p[i];
    if (v < 0.0 || v != std::floor(v) || v >= alphabet)
      throw ValueError("value " + std::to_string(v) + " is not a spike in the alphabet");
    d[i] = static_cast<std::uint8_t>(v);
  }
  return SpikeTensor(p.dims(), std::move(d), alphabet);
}

// ---------------------------------------------------------------------------

namespace {

Dims token_dims(const Dims& d) {
  if (d.size() != 4) throw ShapeError("flatten_spacetime expects rank 4, got " + dims_to_string(d));
  return {d[0] * d[1] * d[2], d[3]};
}

void check_tokens(const Dims& d, const Shape4& shape) {
  shape.validate();
  if (d.size() != 2 || d[0] != shape.t * shape.h * shape.w || d[1] != shape.c)
    throw ShapeError("token dims " + dims_to_string(d) + " do not match " +
                     dims_to_string(shape.dims()));
}

}  // namespace

// Row-major t-major storage already is token order, so these are relabellings.
PotentialTensor flatten_spacetime(const PotentialTensor& x) { return x.reshaped(token_dims(x.dims())); }
SpikeTensor flatten_spacetime(const SpikeTensor& x) { return x.reshaped(token_dims(x.dims())); }

PotentialTensor unflatten_spacetime(const PotentialTensor& tokens, const Shape4& shape) {
  check_tokens(tokens.dims(), shape);
  return tokens.reshaped(shape.dims());
}

SpikeTensor unflatten_spacetime(const SpikeTensor& tokens, const Shape4& shape) {
  check_tokens(tokens.dims(), shape);
  return tokens.reshaped(shape.dims());
}

double spike_rate(const SpikeTensor& s) {
  if (s.numel() == 0) throw ValueError("spike_rate of an empty tensor");
  const auto d = s.data();
  const auto active = std::count_if(d.begin(), d.end(), [](std::uint8_t v) { return v != 0; });
  return static_cast<double>(active) / static_cast<double>(s.numel());
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'P', 'K', 'T'};

template <typename T>
void put_le(std::ostream& os, T v) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T)))
    throw IoError("truncated tensor stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

void write_header(std::ostream& os, DType dtype, const Dims& dims) {
  if (dims.size() > 255) throw ShapeError("rank too large for dump");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(dims.size()));
  for (int d : dims) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
}

}  // namespace

void write_tensor(std::ostream& os, const PotentialTensor& t, DType dtype) {
  write_header(os, dtype, t.dims());
  switch (dtype) {
    case DType::kF64:
      for (double v : t.data()) put_le<double>(os, v);
      break;
    case DType::kF32:
      for (double v : t.data()) put_le<float>(os, static_cast<float>(v));
      break;
    case DType::kU8:
      throw ValueError("write a SpikeTensor for u8 payloads");
  }
  if (!os) throw IoError("failed writing tensor");
}

void write_tensor(std::ostream& os, const SpikeTensor& t) {
  write_header(os, DType::kU8, t.dims());
  os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel()));
  if (!os) throw IoError("failed writing tensor");
}

AnyTensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("bad tensor magic");
  const auto tag = get_le<std::uint8_t>(is);
  const auto rank = get_le<std::uint8_t>(is);
  Dims dims(rank);
  for (auto& d : dims) d = static_cast<int>(get_le<std::uint32_t>(is));
  const std::size_t n = numel(dims);
  switch (static_cast<DType>(tag)) {
    case DType::kF64: {
      std::vector<double> data(n);
      for (auto& v : data) v = get_le<double>(is);
      return PotentialTensor(std::move(dims), std::move(data));
    }
    case DType::kF32: {
      std::vector<double> data(n);
      for (auto& v : data) v = get_le<float>(is);
      return PotentialTensor(std::move(dims), std::move(data));
    }
    case DType::kU8: {
      std::vector<std::uint8_t> data(n);
      if (n && !is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n)))
        throw IoError("truncated tensor payload");
      std::uint8_t top = 1;
      for (auto v : data) top = std::max(top, v);
      const auto alphabet = static_cast<std::uint8_t>(std::min<int>(255, top + 1));
      if (top == 255) throw IoError("u8 payload value 255 not representable as a spike");
      return SpikeTensor(std::move(dims), std::move(data), alphabet);
    }
  }
  throw IoError("unknown dtype tag " + std::to_string(tag));
}

void save_tensor(const std::string& path, const AnyTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  std::visit([&](const auto& x) { write_tensor(os, x); }, t);
}

AnyTensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_tensor(is);
}

}  // namespace spikeseg
