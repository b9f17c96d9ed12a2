// include/streamkws/numkit.h
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

#ifndef STREAMKWS_NUMKIT_H_
#define STREAMKWS_NUMKIT_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kws {

// Dense row-major matrix. float on the streaming path, double for training
// and gradient verification.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw std::invalid_argument("matrix data length does not match shape");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  // Appends one row; the first append fixes the column count of an empty
  // matrix.
  void append_row(std::span<const T> r) {
    if (rows_ == 0 && cols_ == 0) cols_ = r.size();
    if (r.size() != cols_) throw std::invalid_argument("append_row: width mismatch");
    data_.insert(data_.end(), r.begin(), r.end());
    ++rows_;
  }

  template <typename U>
  BasicMatrix<U> cast() const {
    BasicMatrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const BasicMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;
using Vector = std::vector<float>;
using VectorD = std::vector<double>;

// Norms at or below this are treated as zero vectors.
inline constexpr double kNormEpsilon = 1e-12;

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
T l2_norm(std::span<const T> v) {
  // Scaled accumulation so tiny inputs (1e-30) do not underflow to zero
  // before the epsilon test.
  T scale = 0;
  for (T x : v) scale = std::max(scale, std::abs(x));
  if (scale == T(0)) return T(0);
  T s = 0;
  for (T x : v) {
    T y = x / scale;
    s += y * y;
  }
  return scale * std::sqrt(s);
}

template <typename T>
std::vector<T> l2_normalize(std::span<const T> v) {
  std::vector<T> out(v.size(), T(0));
  T n = l2_norm(v);
  if (!(static_cast<double>(n) > kNormEpsilon)) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

template <typename T>
std::vector<T> l2_normalize(const std::vector<T>& v) {
  return l2_normalize(std::span<const T>(v));
}

// Cosine similarity clamped to [-1, 1]; 0 when either side is (near) zero.
template <typename T>
T cosine_sim(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_sim: dimension mismatch");
  T na = l2_norm(a), nb = l2_norm(b);
  if (!(static_cast<double>(na) > kNormEpsilon) ||
      !(static_cast<double>(nb) > kNormEpsilon))
    return T(0);
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] / na) * (b[i] / nb);
  return std::clamp(s, T(-1), T(1));
}

template <typename T>
T cosine_sim(const std::vector<T>& a, const std::vector<T>& b) {
  return cosine_sim(std::span<const T>(a), std::span<const T>(b));
}

// In-place stable softmax of one row.
template <typename T>
void softmax_inplace(std::span<T> r) {
  if (r.empty()) return;
  T mx = *std::max_element(r.begin(), r.end());
  T sum = 0;
  for (T& x : r) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (T& x : r) x /= sum;
}

template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m) {
  if (m.rows() == 0 || m.cols() == 0)
    throw std::invalid_argument("softmax_rows: empty matrix");
  BasicMatrix<T> out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
  return out;
}

// C = A * B
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  BasicMatrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* ci = c.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      T aik = a(i, k);
      if (aik == T(0)) continue;
      const T* bk = b.row(k).data();
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

// C = A * B^T
template <typename T>
BasicMatrix<T> matmul_bt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_bt: shape mismatch");
  BasicMatrix<T> c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ai = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const T* bj = b.row(j).data();
      T s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  return c;
}

// C = A^T * B
template <typename T>
BasicMatrix<T> matmul_at(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_at: shape mismatch");
  BasicMatrix<T> c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const T* ak = a.row(k).data();
    const T* bk = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      T aki = ak[i];
      if (aki == T(0)) continue;
      T* ci = c.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
  BasicMatrix<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// a += scale * b
template <typename T>
void axpy(BasicMatrix<T>& a, const BasicMatrix<T>& b, T scale = T(1)) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("axpy: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += scale * b.data()[i];
}

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

template <typename T>
bool all_finite(const BasicMatrix<T>& m) {
  return all_finite(std::span<const T>(m.data()));
}

template <typename T>
T max_abs_diff(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("max_abs_diff: shape mismatch");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

using ScalarFn = std::function<double(std::span<const double>)>;

// Central-difference gradient of f at x. Throws if f is non-finite at any
// probe point.
VectorD finite_diff_grad(const ScalarFn& f, std::span<const double> x,
                         double h = 1e-4);

// ||a - b||_2 / max(||a||_2, ||b||_2, floor).
double relative_error(std::span<const double> a, std::span<const double> b,
                      double floor = 1e-8);

}  // namespace kws

#endif  // STREAMKWS_NUMKIT_H_
