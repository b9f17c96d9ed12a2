// include/streamkws/losses.h
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

// Training objectives with hand-derived gradients. All computation is in
// double precision.

#ifndef STREAMKWS_LOSSES_H_
#define STREAMKWS_LOSSES_H_

#include <map>
#include <span>
#include <string>

#include "streamkws/model.h"
#include "streamkws/numkit.h"

namespace kws {

struct AamParams {
  double scale = 30.0;
  double margin = 0.2;  // radians

  void validate() const;
};

struct ContrastiveParams {
  double temperature = 0.07;
};

struct LossWeights {
  double alpha_audio = 0.5;  // phoneme AAM, audio phase
  double beta_audio = 0.5;   // speaker CE, audio phase
  double alpha_mixed = 0.4;  // phoneme AAM, mixed phase
  double beta_mixed = 0.3;   // text/audio InfoNCE
  double gamma_mixed = 0.3;  // mixed/audio InfoNCE
  double grl_lambda = 1.0;

  void validate() const;
};

// Gradient keys used by the losses below.
namespace grad_key {
inline constexpr const char* kEmbeddings = "embeddings";
inline constexpr const char* kPhoneWeights = "phone.w";
inline constexpr const char* kAnchor = "anchor";
inline constexpr const char* kTarget = "target";
inline constexpr const char* kAttW = "speaker.att_w";
inline constexpr const char* kAttV = "speaker.att_v";
inline constexpr const char* kClsW = "speaker.cls_w";
inline constexpr const char* kClsB = "speaker.cls_b";
}  // namespace grad_key

struct LossResult {
  double value = 0;
  std::map<std::string, MatrixD> gradients;

  const MatrixD& grad(const std::string& key) const;
};

// Additive angular margin softmax over cosine logits. Frame i contributes
// -log softmax(s * [cos(theta_y + m), cos(theta_j) for j != y])[y]; the loss
// is the mean over frames. Gradients: "embeddings" (N x D), "phone.w".
LossResult aam_loss(const MatrixD& embeddings, std::span<const int> labels,
                    const MatrixD& class_weights, const AamParams& p);

// Attentive pool -> linear -> softmax CE for one utterance. Classifier
// gradients are ordinary; the "embeddings" gradient is scaled by -lambda
// (gradient reversal; the forward value is unaffected).
LossResult speaker_ce_grl(const MatrixD& embeddings, int speaker,
                          const SpeakerHead<double>& head, double lambda);

// Frame-level InfoNCE: -sum_i log softmax_j(cos(a_i, t_j) / tau)[i].
// Gradients are stored under anchor_key / target_key so several contrastive
// terms can share the audio-side key when merged.
LossResult infonce(const MatrixD& anchor, const MatrixD& target, const ContrastiveParams& p,
                   const std::string& anchor_key = grad_key::kAnchor,
                   const std::string& target_key = grad_key::kTarget);

// Weighted sums; gradient maps merge key-wise with the same weights.
LossResult weighted_sum(std::span<const LossResult* const> parts, std::span<const double> weights);
LossResult audio_loss(const LossResult& ph, const LossResult& vp, const LossWeights& w);
LossResult mixed_loss(const LossResult& ph, const LossResult& clat, const LossResult& clam,
                      const LossWeights& w);

}  // namespace kws

#endif  // STREAMKWS_LOSSES_H_
