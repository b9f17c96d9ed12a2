// include/streamkws/weights.h
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

#ifndef STREAMKWS_WEIGHTS_H_
#define STREAMKWS_WEIGHTS_H_

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamkws/numkit.h"

namespace kws {

// Thrown for every malformed SNW1/SNP1 payload. what() names the failure
// ("bad magic", "short tensor", "duplicate tensor", ...).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tensor {
  std::vector<uint32_t> dims;
  std::vector<float> values;

  std::size_t numel() const;
  bool operator==(const Tensor&) const = default;
};

// Named float tensors. The SNW1 file layout (little-endian):
//   "SNW1" | u32 count | count x { u16 name_len, name, u8 ndim,
//                                  ndim x u32 dims, prod(dims) x f32 }
class WeightContainer {
 public:
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;

  // Throws if the name exists, the shape does not match the data, or any
  // value is non-finite.
  void insert(const std::string& name, Tensor t);
  void insert(const std::string& name, const Matrix& m);

  // The tensor viewed as a matrix. 1-D tensors become one row; higher
  // ranks fold the leading dims into rows.
  Matrix matrix(const std::string& name) const;

  std::size_t size() const { return tensors_.size(); }
  std::size_t total_parameters() const;
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  bool operator==(const WeightContainer&) const = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

std::vector<uint8_t> save_weights(const WeightContainer& w);
WeightContainer load_weights(std::span<const uint8_t> bytes);

void save_weights_file(const std::string& path, const WeightContainer& w);
WeightContainer load_weights_file(const std::string& path);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes);

}  // namespace kws

#endif  // STREAMKWS_WEIGHTS_H_
