// src/weights.cc
//
// Copyright 2026  streamkws authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "streamkws/weights.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace kws {

namespace {

static_assert(std::endian::native == std::endian::little,
              "SNW1 serialization assumes a little-endian host");

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> b) : bytes_(b) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) throw FormatError(std::string("truncated ") + what);
  }
  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::span<const uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename U>
void put(std::vector<uint8_t>& out, U v) {
  uint8_t buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.insert(out.end(), buf, buf + sizeof(U));
}

}  // namespace

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (uint32_t d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

bool WeightContainer::contains(const std::string& name) const {
  return tensors_.count(name) != 0;
}

const Tensor& WeightContainer::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("missing tensor: " + name);
  return it->second;
}

void WeightContainer::insert(const std::string& name, Tensor t) {
  if (name.empty() || name.size() > 0xFFFF) throw FormatError("bad tensor name length");
  if (t.dims.empty() || t.dims.size() > 0xFF) throw FormatError("bad tensor rank: " + name);
  if (t.numel() != t.values.size()) throw FormatError("shape/data mismatch: " + name);
  if (!all_finite(std::span<const float>(t.values)))
    throw FormatError("non-finite value in tensor: " + name);
  if (!tensors_.emplace(name, std::move(t)).second)
    throw FormatError("duplicate tensor: " + name);
}

void WeightContainer::insert(const std::string& name, const Matrix& m) {
  insert(name, Tensor{{static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())},
                      m.data()});
}

Matrix WeightContainer::matrix(const std::string& name) const {
  const Tensor& t = at(name);
  const std::size_t cols = t.dims.back();
  const std::size_t rows = t.dims.size() == 1 ? 1 : t.values.size() / cols;
  return Matrix(rows, cols, t.values);
}

std::size_t WeightContainer::total_parameters() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.values.size();
  return n;
}

std::vector<uint8_t> save_weights(const WeightContainer& w) {
  std::vector<uint8_t> out{'S', 'N', 'W', '1'};
  put<uint32_t>(out, static_cast<uint32_t>(w.size()));
  for (const auto& [name, t] : w.tensors()) {
    put<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<uint8_t>(out, static_cast<uint8_t>(t.dims.size()));
    for (uint32_t d : t.dims) put<uint32_t>(out, d);
    const auto* p = reinterpret_cast<const uint8_t*>(t.values.data());
    out.insert(out.end(), p, p + t.values.size() * sizeof(float));
  }
  return out;
}

WeightContainer load_weights(std::span<const uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "SNW1", 4) != 0)
    throw FormatError("bad magic");
  Reader r(bytes.subspan(4));
  const uint32_t count = r.get<uint32_t>("header");
  WeightContainer w;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.get<uint16_t>("tensor header");
    auto name_bytes = r.take(name_len, "tensor name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const uint8_t ndim = r.get<uint8_t>("tensor header");
    Tensor t;
    std::size_t numel = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      t.dims.push_back(r.get<uint32_t>("tensor dims"));
      numel *= t.dims.back();
    }
    if (ndim == 0) throw FormatError("bad tensor rank: " + name);
    if (numel > r.remaining() / sizeof(float)) throw FormatError("short tensor: " + name);
    auto payload = r.take(numel * sizeof(float), "tensor payload");
    t.values.resize(numel);
    std::memcpy(t.values.data(), payload.data(), payload.size());
    w.insert(name, std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last tensor");
  return w;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

void save_weights_file(const std::string& path, const WeightContainer& w) {
  write_file_bytes(path, save_weights(w));
}

WeightContainer load_weights_file(const std::string& path) {
  return load_weights(read_file_bytes(path));
}

}  // namespace kws
