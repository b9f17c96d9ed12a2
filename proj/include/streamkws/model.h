// include/streamkws/model.h
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

// Encoders used for enrollment and detection: the causal DFSMN audio
// encoder, the LSTM text encoder, the text-over-audio cross-attention mixer
// and the attentive-pooling speaker head. Every network is templated on the
// scalar type: float for the streaming runtime, double for training and
// gradient checks. Forward passes optionally record a cache that the
// matching backward pass consumes.

#ifndef STREAMKWS_MODEL_H_
#define STREAMKWS_MODEL_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "streamkws/features.h"
#include "streamkws/numkit.h"
#include "streamkws/weights.h"

namespace kws {

struct ModelConfig {
  int input_dim = 20;
  int n_layers = 4;
  int hidden_dim = 32;
  int bottleneck_dim = 16;
  // Past-frame memory taps per layer (stride 1, no lookahead).
  int lookback = 8;
  int embed_dim = 32;
  int vocab_size = 12;
  int n_phonemes = 12;
  int n_speakers = 6;
  // Width of the speaker head's attention scorer.
  int attention_dim = 16;

  void validate() const;

  // L=7, hidden 256: the deployed size quoted for the full system.
  static ModelConfig full_preset();
  // Desk-scale model matching the synthetic corpus defaults.
  static ModelConfig toy_preset();
};

enum class Modality { kAudio, kText, kMixed, kStream };
const char* modality_name(Modality m);

struct EmbeddingSequence {
  Modality modality = Modality::kStream;
  Matrix values;  // n_frames x dim

  std::size_t n_frames() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }
};

// ---------------------------------------------------------------------------
// Parameter blocks. Biases are stored as 1 x n matrices. visit() walks every
// tensor with its container name so optimizers and serializers share one
// enumeration.

template <typename T>
struct DfsmnLayer {
  BasicMatrix<T> w;    // hidden x in
  BasicMatrix<T> b;    // 1 x hidden
  BasicMatrix<T> v;    // bottleneck x hidden
  BasicMatrix<T> mem;  // lookback x bottleneck; row i-1 weights p_{t-i}
};

template <typename T>
struct AudioEncoder {
  std::vector<DfsmnLayer<T>> layers;
  BasicMatrix<T> out_w;  // embed x bottleneck
  BasicMatrix<T> out_b;  // 1 x embed

  int lookback() const { return layers.empty() ? 0 : static_cast<int>(layers[0].mem.rows()); }
  int bottleneck() const { return layers.empty() ? 0 : static_cast<int>(layers[0].v.rows()); }
  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers[0].w.cols()); }
  int embed_dim() const { return static_cast<int>(out_w.rows()); }

  template <typename F>
  void visit(F&& f) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "encoder.layer" + std::to_string(l) + ".";
      f(p + "w", layers[l].w);
      f(p + "b", layers[l].b);
      f(p + "v", layers[l].v);
      f(p + "mem", layers[l].mem);
    }
    f("encoder.out.w", out_w);
    f("encoder.out.b", out_b);
  }
};

// Gates are stacked [input, forget, cell, output].
template <typename T>
struct TextEncoder {
  BasicMatrix<T> embed;   // vocab x D
  BasicMatrix<T> w_ih;    // 4H x D
  BasicMatrix<T> w_hh;    // 4H x H
  BasicMatrix<T> b;       // 1 x 4H
  BasicMatrix<T> proj_w;  // D x H
  BasicMatrix<T> proj_b;  // 1 x D

  int hidden() const { return static_cast<int>(w_hh.cols()); }
  int vocab_size() const { return static_cast<int>(embed.rows()); }

  template <typename F>
  void visit(F&& f) {
    f("text.embed", embed);
    f("text.w_ih", w_ih);
    f("text.w_hh", w_hh);
    f("text.b", b);
    f("text.proj.w", proj_w);
    f("text.proj.b", proj_b);
  }
};

// Right-multiplied projections: Q = E_T wq, K = E_A wk, V = E_A wv.
template <typename T>
struct CrossAttention {
  BasicMatrix<T> wq, wk, wv, wo;  // D x D

  template <typename F>
  void visit(F&& f) {
    f("mixer.wq", wq);
    f("mixer.wk", wk);
    f("mixer.wv", wv);
    f("mixer.wo", wo);
  }
};

template <typename T>
struct PhoneClassifier {
  BasicMatrix<T> w;  // n_phonemes x D, compared by cosine

  template <typename F>
  void visit(F&& f) {
    f("phone.w", w);
  }
};

template <typename T>
struct SpeakerHead {
  BasicMatrix<T> att_w;  // A x D
  BasicMatrix<T> att_v;  // 1 x A
  BasicMatrix<T> cls_w;  // n_speakers x D
  BasicMatrix<T> cls_b;  // 1 x n_speakers

  template <typename F>
  void visit(F&& f) {
    f("speaker.att_w", att_w);
    f("speaker.att_v", att_v);
    f("speaker.cls_w", cls_w);
    f("speaker.cls_b", cls_b);
  }
};

template <typename T>
struct ModelParams {
  AudioEncoder<T> encoder;
  TextEncoder<T> text;
  CrossAttention<T> mixer;
  PhoneClassifier<T> phone;
  SpeakerHead<T> speaker;

  template <typename F>
  void visit(F&& f) {
    encoder.visit(f);
    text.visit(f);
    mixer.visit(f);
    phone.visit(f);
    speaker.visit(f);
  }

  template <typename U>
  ModelParams<U> cast() const;

  // Same shapes, all zeros; used as a gradient accumulator.
  ModelParams zeros_like() const;
};

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, uint64_t seed);

WeightContainer to_container(const ModelParams<float>& p);
ModelParams<float> from_container(const WeightContainer& w);
ModelConfig infer_config(const WeightContainer& w);

struct ParameterCount {
  std::size_t audio_encoder = 0;
  std::size_t text_encoder = 0;
  std::size_t mixer = 0;
  std::size_t phone_classifier = 0;
  std::size_t speaker_head = 0;

  // Networks used at enrollment and detection time.
  std::size_t deployed() const { return audio_encoder + text_encoder + mixer; }
  std::size_t total() const { return deployed() + phone_classifier + speaker_head; }
};
ParameterCount count_parameters(const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// DFSMN audio encoder. Layer l maps x_t to
//   h_t = ReLU(W x_t + b),  p_t = V h_t,
//   m_t = p_t + sum_{i=1..N} a_i * p_{t-i} + x_t   (skip only for l > 0),
// and the top memory is projected: e_t = U m_t + c.

template <typename T>
struct EncoderCache {
  struct Layer {
    BasicMatrix<T> x, z, h, p, m;
  };
  std::vector<Layer> layers;
};

template <typename T>
BasicMatrix<T> encoder_forward(const AudioEncoder<T>& enc, const BasicMatrix<T>& x,
                               EncoderCache<T>* cache = nullptr);

// Accumulates parameter gradients into grad and returns d(loss)/d(input).
template <typename T>
BasicMatrix<T> encoder_backward(const AudioEncoder<T>& enc, const EncoderCache<T>& cache,
                                const BasicMatrix<T>& d_out, AudioEncoder<T>& grad);

EmbeddingSequence dfsmn_forward(const FeatureSequence& features, const AudioEncoder<float>& enc);

class DfsmnStreamState {
 public:
  DfsmnStreamState() = default;
  explicit DfsmnStreamState(const AudioEncoder<float>& enc);

  void reset();
  std::size_t frames_seen() const { return frames_seen_; }
  bool matches(const AudioEncoder<float>& enc) const;

 private:
  friend Vector dfsmn_step(std::span<const float>, DfsmnStreamState&, const AudioEncoder<float>&);
  // Per layer: lookback x bottleneck ring of past bottleneck outputs.
  std::vector<Matrix> rings_;
  std::size_t lookback_ = 0;
  std::size_t frames_seen_ = 0;
};

// Consumes one feature frame and returns that frame's embedding.
Vector dfsmn_step(std::span<const float> frame, DfsmnStreamState& state,
                  const AudioEncoder<float>& enc);

// ---------------------------------------------------------------------------
// LSTM text encoder: embedding lookup, one unidirectional LSTM layer, and a
// per-step projection to D.

template <typename T>
struct TextCache {
  std::vector<int> tokens;
  BasicMatrix<T> x;                       // n x D looked-up embeddings
  BasicMatrix<T> i, f, g, o, c, tanh_c, h;  // n x H each
};

template <typename T>
BasicMatrix<T> text_encoder_forward(const TextEncoder<T>& te, std::span<const int> tokens,
                                    TextCache<T>* cache = nullptr);

template <typename T>
void text_encoder_backward(const TextEncoder<T>& te, const TextCache<T>& cache,
                           const BasicMatrix<T>& d_out, TextEncoder<T>& grad);

EmbeddingSequence text_forward(std::span<const int> tokens, const TextEncoder<float>& te);

// ---------------------------------------------------------------------------
// Single-head cross attention, text queries over audio keys/values:
//   out = softmax((E_T Wq)(E_A Wk)^T / sqrt(D)) (E_A Wv) Wo

template <typename T>
struct AttentionCache {
  BasicMatrix<T> queries_in, keys_in;
  BasicMatrix<T> q, k, v, attn, ctx;
};

template <typename T>
BasicMatrix<T> cross_attention_forward(const CrossAttention<T>& ca, const BasicMatrix<T>& e_t,
                                       const BasicMatrix<T>& e_a,
                                       AttentionCache<T>* cache = nullptr);

// Returns gradients w.r.t. (e_t, e_a) through out parameters.
template <typename T>
void cross_attention_backward(const CrossAttention<T>& ca, const AttentionCache<T>& cache,
                              const BasicMatrix<T>& d_out, CrossAttention<T>& grad,
                              BasicMatrix<T>& d_e_t, BasicMatrix<T>& d_e_a);

EmbeddingSequence cross_attention(const EmbeddingSequence& e_t, const EmbeddingSequence& e_a,
                                  const CrossAttention<float>& ca);

// ---------------------------------------------------------------------------
// Attentive pooling: alpha_t = softmax_t(v . tanh(W e_t)), out = sum alpha_t e_t.

template <typename T>
struct PoolCache {
  BasicMatrix<T> e, u;  // inputs, tanh activations
  std::vector<T> alpha;
};

template <typename T>
std::vector<T> attentive_pool_forward(const BasicMatrix<T>& att_w, const BasicMatrix<T>& att_v,
                                      const BasicMatrix<T>& e, PoolCache<T>* cache = nullptr);

// Accumulates into d_att_w / d_att_v and returns d(loss)/d(e).
template <typename T>
BasicMatrix<T> attentive_pool_backward(const BasicMatrix<T>& att_w, const BasicMatrix<T>& att_v,
                                       const PoolCache<T>& cache, std::span<const T> d_out,
                                       BasicMatrix<T>& d_att_w, BasicMatrix<T>& d_att_v);

Vector attentive_pool(const EmbeddingSequence& e, const SpeakerHead<float>& head);

}  // namespace kws

#endif  // STREAMKWS_MODEL_H_
