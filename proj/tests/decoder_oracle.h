// tests/decoder_oracle.h
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

// Brute-force decoder reference, 1-indexed like the textbook formulas.
// Test-only.

#ifndef STREAMKWS_TESTS_DECODER_ORACLE_H_
#define STREAMKWS_TESTS_DECODER_ORACLE_H_

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "streamkws/numkit.h"

namespace kws::testing {

// p'[i][j] for 1 <= j <= T, recomputing every window sum from scratch.
inline std::vector<std::vector<double>> brute_smooth(const MatrixD& p, int w_smooth) {
  const int n = static_cast<int>(p.rows()), t_len = static_cast<int>(p.cols());
  std::vector<std::vector<double>> out(n, std::vector<double>(t_len));
  for (int i = 0; i < n; ++i)
    for (int j = 1; j <= t_len; ++j) {
      const int h = std::max(1, j - w_smooth + 1);
      double s = 0;
      for (int k = h; k <= j; ++k) s += p(i, k - 1);
      out[i][j - 1] = s / (j - h + 1);
    }
  return out;
}

// Score_j over the first `units` rows: plain product then root.
inline std::vector<double> brute_scores(const MatrixD& p, int w_smooth, int w_scoring, int units) {
  const auto sm = brute_smooth(p, w_smooth);
  const int t_len = static_cast<int>(p.cols());
  std::vector<double> out(t_len);
  for (int j = 1; j <= t_len; ++j) {
    const int h = std::max(1, j - w_scoring + 1);
    double prod = 1;
    for (int i = 0; i < units; ++i) {
      double best = 0;
      for (int k = h; k <= j; ++k) best = std::max(best, sm[i][k - 1]);
      prod *= best;
    }
    out[j - 1] = std::pow(prod, 1.0 / units);
  }
  return out;
}

inline MatrixD random_similarities(std::mt19937_64& rng, std::size_t n, std::size_t t_len,
                                   double floor = 1e-6) {
  std::uniform_real_distribution<double> ud(-0.3, 1.0);
  MatrixD p(n, t_len);
  for (auto& v : p.data()) v = std::clamp(ud(rng), floor, 1.0);
  return p;
}

}  // namespace kws::testing

#endif  // STREAMKWS_TESTS_DECODER_ORACLE_H_
