// src/losses.cc
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

#include "streamkws/losses.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kws {

namespace {

// Row-wise L2 normalization that remembers the norms for the backward pass.
struct NormalizedRows {
  MatrixD unit;
  VectorD norm;
};

NormalizedRows normalize_rows(const MatrixD& m) {
  NormalizedRows out{MatrixD(m.rows(), m.cols()), VectorD(m.rows())};
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out.norm[r] = l2_norm(m.row(r));
    auto u = l2_normalize(m.row(r));
    std::copy(u.begin(), u.end(), out.unit.row(r).begin());
  }
  return out;
}

// d/dx of x/|x| applied to an upstream gradient g on the unit vector.
MatrixD normalize_backward(const NormalizedRows& n, const MatrixD& d_unit) {
  MatrixD d(d_unit.rows(), d_unit.cols());
  for (std::size_t r = 0; r < d.rows(); ++r) {
    if (!(n.norm[r] > kNormEpsilon)) continue;
    const double proj = dot(n.unit.row(r), d_unit.row(r));
    for (std::size_t c = 0; c < d.cols(); ++c)
      d(r, c) = (d_unit(r, c) - n.unit(r, c) * proj) / n.norm[r];
  }
  return d;
}

double log_sum_exp(std::span<const double> v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double s = 0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

void AamParams::validate() const {
  if (!(scale > 0)) throw std::invalid_argument("aam: scale must be > 0");
  if (!(margin >= 0 && margin < std::numbers::pi / 2))
    throw std::invalid_argument("aam: margin must be in [0, pi/2)");
}

void LossWeights::validate() const {
  for (double v : {alpha_audio, beta_audio, alpha_mixed, beta_mixed, gamma_mixed, grl_lambda})
    if (!(v >= 0)) throw std::invalid_argument("loss weights must be >= 0");
}

const MatrixD& LossResult::grad(const std::string& key) const {
  auto it = gradients.find(key);
  if (it == gradients.end()) throw std::out_of_range("no gradient for " + key);
  return it->second;
}

LossResult aam_loss(const MatrixD& embeddings, std::span<const int> labels,
                    const MatrixD& class_weights, const AamParams& p) {
  p.validate();
  const std::size_t n = embeddings.rows(), n_cls = class_weights.rows();
  if (n == 0) throw std::invalid_argument("aam_loss: no frames");
  if (labels.size() != n) throw std::invalid_argument("aam_loss: label count != frame count");
  if (class_weights.cols() != embeddings.cols())
    throw std::invalid_argument("aam_loss: class weight dim != embedding dim");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= n_cls)
      throw std::out_of_range("aam_loss: label " + std::to_string(y) + " out of range");

  const NormalizedRows x = normalize_rows(embeddings);
  const NormalizedRows w = normalize_rows(class_weights);
  const MatrixD cosines = matmul_bt(x.unit, w.unit);
  const double cos_m = std::cos(p.margin), sin_m = std::sin(p.margin);

  MatrixD d_cos(n, n_cls);
  VectorD logits(n_cls);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    const double c = std::clamp(cosines(i, y), -1.0, 1.0);
    const double sin_t = std::sqrt(std::max(0.0, 1.0 - c * c));
    for (std::size_t j = 0; j < n_cls; ++j) logits[j] = p.scale * cosines(i, j);
    logits[y] = p.scale * (c * cos_m - sin_t * sin_m);
    const double lse = log_sum_exp(logits);
    if (*std::max_element(logits.begin(), logits.end()) == logits[y]) {
      // log1p form keeps precision when the target already dominates.
      double rest = 0;
      for (std::size_t j = 0; j < n_cls; ++j)
        if (j != y) rest += std::exp(logits[j] - logits[y]);
      total += std::log1p(rest);
    } else {
      total += lse - logits[y];
    }
    for (std::size_t j = 0; j < n_cls; ++j) {
      const double prob = std::exp(logits[j] - lse);
      d_cos(i, j) = p.scale * (prob - (j == y ? 1.0 : 0.0)) / static_cast<double>(n);
    }
    // d cos(theta + m) / d cos(theta) = cos m + cos(theta) sin m / sin(theta)
    const double dphi = cos_m + (sin_t > 1e-12 ? c * sin_m / sin_t : 0.0);
    d_cos(i, y) *= dphi;
  }

  LossResult r;
  r.value = total / static_cast<double>(n);
  r.gradients[grad_key::kEmbeddings] = normalize_backward(x, matmul(d_cos, w.unit));
  r.gradients[grad_key::kPhoneWeights] = normalize_backward(w, matmul_at(d_cos, x.unit));
  return r;
}

LossResult speaker_ce_grl(const MatrixD& embeddings, int speaker,
                          const SpeakerHead<double>& head, double lambda) {
  const std::size_t n_spk = head.cls_w.rows();
  if (speaker < 0 || static_cast<std::size_t>(speaker) >= n_spk)
    throw std::out_of_range("speaker_ce_grl: label " + std::to_string(speaker) + " out of range");
  PoolCache<double> cache;
  const VectorD pooled = attentive_pool_forward(head.att_w, head.att_v, embeddings, &cache);
  VectorD logits(n_spk);
  for (std::size_t s = 0; s < n_spk; ++s)
    logits[s] = dot(std::span<const double>(head.cls_w.row(s)), std::span<const double>(pooled)) +
                head.cls_b(0, s);
  const double lse = log_sum_exp(logits);

  LossResult r;
  r.value = lse - logits[static_cast<std::size_t>(speaker)];
  MatrixD d_cls_w(n_spk, pooled.size()), d_cls_b(1, n_spk);
  VectorD d_pooled(pooled.size(), 0.0);
  for (std::size_t s = 0; s < n_spk; ++s) {
    const double d = std::exp(logits[s] - lse) - (s == static_cast<std::size_t>(speaker) ? 1 : 0);
    d_cls_b(0, s) = d;
    for (std::size_t k = 0; k < pooled.size(); ++k) {
      d_cls_w(s, k) = d * pooled[k];
      d_pooled[k] += d * head.cls_w(s, k);
    }
  }
  MatrixD d_att_w(head.att_w.rows(), head.att_w.cols()), d_att_v(1, head.att_v.cols());
  MatrixD d_emb =
      attentive_pool_backward(head.att_w, head.att_v, cache, std::span<const double>(d_pooled),
                              d_att_w, d_att_v);
  for (auto& v : d_emb.data()) v *= -lambda;

  r.gradients[grad_key::kEmbeddings] = std::move(d_emb);
  r.gradients[grad_key::kAttW] = std::move(d_att_w);
  r.gradients[grad_key::kAttV] = std::move(d_att_v);
  r.gradients[grad_key::kClsW] = std::move(d_cls_w);
  r.gradients[grad_key::kClsB] = std::move(d_cls_b);
  return r;
}

LossResult infonce(const MatrixD& anchor, const MatrixD& target, const ContrastiveParams& p,
                   const std::string& anchor_key, const std::string& target_key) {
  if (!(p.temperature > 0)) throw std::invalid_argument("infonce: temperature must be > 0");
  const std::size_t n = anchor.rows();
  if (n == 0) throw std::invalid_argument("infonce: no frames");
  if (target.rows() != n)
    throw std::invalid_argument("infonce: anchor has " + std::to_string(n) +
                                " frames, target has " + std::to_string(target.rows()));
  if (target.cols() != anchor.cols()) throw std::invalid_argument("infonce: dim mismatch");

  const NormalizedRows a = normalize_rows(anchor);
  const NormalizedRows t = normalize_rows(target);
  MatrixD logits = matmul_bt(a.unit, t.unit);
  for (auto& v : logits.data()) v /= p.temperature;

  double total = 0;
  MatrixD d_logits(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lse = log_sum_exp(logits.row(i));
    total += lse - logits(i, i);
    for (std::size_t j = 0; j < n; ++j)
      d_logits(i, j) = (std::exp(logits(i, j) - lse) - (i == j ? 1.0 : 0.0)) / p.temperature;
  }
  LossResult r;
  r.value = total;
  if (anchor_key == target_key) throw std::invalid_argument("infonce: gradient keys must differ");
  r.gradients[anchor_key] = normalize_backward(a, matmul(d_logits, t.unit));
  r.gradients[target_key] = normalize_backward(t, matmul_at(d_logits, a.unit));
  return r;
}

LossResult weighted_sum(std::span<const LossResult* const> parts, std::span<const double> weights) {
  if (parts.size() != weights.size())
    throw std::invalid_argument("weighted_sum: parts/weights length mismatch");
  LossResult r;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    r.value += weights[i] * parts[i]->value;
    for (const auto& [key, g] : parts[i]->gradients) {
      auto it = r.gradients.find(key);
      if (it == r.gradients.end()) {
        MatrixD scaled = g;
        for (auto& v : scaled.data()) v *= weights[i];
        r.gradients.emplace(key, std::move(scaled));
      } else {
        axpy(it->second, g, weights[i]);
      }
    }
  }
  return r;
}

LossResult audio_loss(const LossResult& ph, const LossResult& vp, const LossWeights& w) {
  const LossResult* parts[] = {&ph, &vp};
  const double weights[] = {w.alpha_audio, w.beta_audio};
  return weighted_sum(parts, weights);
}

LossResult mixed_loss(const LossResult& ph, const LossResult& clat, const LossResult& clam,
                      const LossWeights& w) {
  const LossResult* parts[] = {&ph, &clat, &clam};
  const double weights[] = {w.alpha_mixed, w.beta_mixed, w.gamma_mixed};
  return weighted_sum(parts, weights);
}

}  // namespace kws
