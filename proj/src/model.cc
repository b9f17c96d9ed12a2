// src/model.cc
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

#include "streamkws/model.h"

#include <cmath>
#include <stdexcept>

namespace kws {

namespace {

template <typename T>
void add_row_bias(BasicMatrix<T>& m, const BasicMatrix<T>& bias) {
  if (bias.cols() != m.cols()) throw std::invalid_argument("bias width mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) += bias(0, c);
}

template <typename T>
void add_col_sums(BasicMatrix<T>& bias, const BasicMatrix<T>& m) {
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) bias(0, c) += m(r, c);
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
std::vector<BasicMatrix<T>*> tensor_list(ModelParams<T>& p) {
  std::vector<BasicMatrix<T>*> out;
  p.visit([&](const std::string&, BasicMatrix<T>& m) { out.push_back(&m); });
  return out;
}

void check_shape(const std::string& name, const Matrix& m, std::size_t rows, std::size_t cols) {
  if (m.rows() != rows || m.cols() != cols)
    throw FormatError("tensor " + name + " has shape " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                      std::to_string(cols));
}

}  // namespace

void ModelConfig::validate() const {
  for (int v : {input_dim, n_layers, hidden_dim, bottleneck_dim, lookback, embed_dim, vocab_size,
                n_phonemes, n_speakers, attention_dim})
    if (v < 1) throw std::invalid_argument("model config: all sizes must be >= 1");
}

ModelConfig ModelConfig::full_preset() {
  ModelConfig c;
  c.input_dim = 40;
  c.n_layers = 7;
  c.hidden_dim = 256;
  c.bottleneck_dim = 192;
  c.lookback = 8;
  c.embed_dim = 128;
  c.vocab_size = 40;   // 39 phones + silence
  c.n_phonemes = 40;
  c.n_speakers = 1172;
  c.attention_dim = 128;
  return c;
}

ModelConfig ModelConfig::toy_preset() { return ModelConfig{}; }

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::kAudio: return "audio";
    case Modality::kText: return "text";
    case Modality::kMixed: return "mixed";
    case Modality::kStream: return "stream";
  }
  return "?";
}

// ---------------------------------------------------------------------------

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.encoder.layers.resize(encoder.layers.size());
  auto& self = const_cast<ModelParams<T>&>(*this);
  auto src = tensor_list(self);
  auto dst = tensor_list(out);
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
  return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
  ModelParams<T> out = *this;
  out.visit([](const std::string&, BasicMatrix<T>& m) { m.fill(T(0)); });
  return out;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  auto xavier = [&](std::size_t rows, std::size_t cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-a, a);
    BasicMatrix<T> m(rows, cols);
    for (auto& v : m.data()) v = static_cast<T>(dist(rng));
    return m;
  };
  auto uniform = [&](std::size_t rows, std::size_t cols, double a) {
    std::uniform_real_distribution<double> dist(-a, a);
    BasicMatrix<T> m(rows, cols);
    for (auto& v : m.data()) v = static_cast<T>(dist(rng));
    return m;
  };
  const std::size_t H = cfg.hidden_dim, B = cfg.bottleneck_dim, D = cfg.embed_dim;

  ModelParams<T> p;
  for (int l = 0; l < cfg.n_layers; ++l) {
    DfsmnLayer<T> layer;
    layer.w = xavier(H, l == 0 ? cfg.input_dim : B);
    layer.b = BasicMatrix<T>(1, H);
    layer.v = xavier(B, H);
    layer.mem = uniform(cfg.lookback, B, 1.0 / cfg.lookback);
    p.encoder.layers.push_back(std::move(layer));
  }
  p.encoder.out_w = xavier(D, B);
  p.encoder.out_b = BasicMatrix<T>(1, D);

  p.text.embed = uniform(cfg.vocab_size, D, 1.0);
  p.text.w_ih = xavier(4 * D, D);
  p.text.w_hh = xavier(4 * D, D);
  p.text.b = BasicMatrix<T>(1, 4 * D);
  for (std::size_t j = D; j < 2 * D; ++j) p.text.b(0, j) = T(1);  // forget gate
  p.text.proj_w = xavier(D, D);
  p.text.proj_b = BasicMatrix<T>(1, D);

  p.mixer.wq = xavier(D, D);
  p.mixer.wk = xavier(D, D);
  p.mixer.wv = xavier(D, D);
  p.mixer.wo = xavier(D, D);

  p.phone.w = xavier(cfg.n_phonemes, D);

  p.speaker.att_w = xavier(cfg.attention_dim, D);
  p.speaker.att_v = xavier(1, cfg.attention_dim);
  p.speaker.cls_w = xavier(cfg.n_speakers, D);
  p.speaker.cls_b = BasicMatrix<T>(1, cfg.n_speakers);
  return p;
}

WeightContainer to_container(const ModelParams<float>& p) {
  WeightContainer w;
  const_cast<ModelParams<float>&>(p).visit(
      [&](const std::string& name, Matrix& m) { w.insert(name, m); });
  return w;
}

ModelConfig infer_config(const WeightContainer& w) {
  ModelConfig c;
  int layers = 0;
  while (w.contains("encoder.layer" + std::to_string(layers) + ".w")) ++layers;
  if (layers == 0) throw FormatError("missing tensor: encoder.layer0.w");
  c.n_layers = layers;
  const Matrix w0 = w.matrix("encoder.layer0.w");
  c.hidden_dim = static_cast<int>(w0.rows());
  c.input_dim = static_cast<int>(w0.cols());
  c.bottleneck_dim = static_cast<int>(w.matrix("encoder.layer0.v").rows());
  c.lookback = static_cast<int>(w.matrix("encoder.layer0.mem").rows());
  c.embed_dim = static_cast<int>(w.matrix("encoder.out.w").rows());
  c.vocab_size = static_cast<int>(w.matrix("text.embed").rows());
  c.n_phonemes = static_cast<int>(w.matrix("phone.w").rows());
  c.n_speakers = static_cast<int>(w.matrix("speaker.cls_w").rows());
  c.attention_dim = static_cast<int>(w.matrix("speaker.att_w").rows());
  c.validate();
  return c;
}

ModelParams<float> from_container(const WeightContainer& w) {
  const ModelConfig cfg = infer_config(w);
  ModelParams<float> p = init_params<float>(cfg, 0);
  p.visit([&](const std::string& name, Matrix& m) {
    if (!w.contains(name)) throw FormatError("missing tensor: " + name);
    Matrix src = w.matrix(name);
    check_shape(name, src, m.rows(), m.cols());
    m = std::move(src);
  });
  return p;
}

ParameterCount count_parameters(const ModelConfig& cfg) {
  ModelParams<float> p = init_params<float>(cfg, 0);
  ParameterCount n;
  p.visit([&](const std::string& name, Matrix& m) {
    const std::size_t k = m.size();
    if (name.starts_with("encoder.")) n.audio_encoder += k;
    else if (name.starts_with("text.")) n.text_encoder += k;
    else if (name.starts_with("mixer.")) n.mixer += k;
    else if (name.starts_with("phone.")) n.phone_classifier += k;
    else n.speaker_head += k;
  });
  return n;
}

// ---------------------------------------------------------------------------
// DFSMN

template <typename T>
BasicMatrix<T> encoder_forward(const AudioEncoder<T>& enc, const BasicMatrix<T>& input,
                               EncoderCache<T>* cache) {
  if (input.cols() != static_cast<std::size_t>(enc.input_dim()))
    throw std::invalid_argument("encoder: feature dim " + std::to_string(input.cols()) +
                                " does not match encoder input dim " +
                                std::to_string(enc.input_dim()));
  if (cache) cache->layers.clear();
  BasicMatrix<T> x = input;
  const std::size_t n = x.rows();
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    const DfsmnLayer<T>& layer = enc.layers[l];
    BasicMatrix<T> z = matmul_bt(x, layer.w);
    add_row_bias(z, layer.b);
    BasicMatrix<T> h = z;
    for (auto& v : h.data()) v = v > T(0) ? v : T(0);
    BasicMatrix<T> p = matmul_bt(h, layer.v);
    BasicMatrix<T> m = p;
    const std::size_t B = p.cols();
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 1; i <= layer.mem.rows() && i <= t; ++i) {
        const T* a = layer.mem.row(i - 1).data();
        const T* past = p.row(t - i).data();
        T* mt = m.row(t).data();
        for (std::size_t k = 0; k < B; ++k) mt[k] += a[k] * past[k];
      }
    }
    if (l > 0) axpy(m, x);
    if (cache) cache->layers.push_back({std::move(x), std::move(z), std::move(h), std::move(p), m});
    x = std::move(m);
  }
  BasicMatrix<T> e = matmul_bt(x, enc.out_w);
  add_row_bias(e, enc.out_b);
  return e;
}

template <typename T>
BasicMatrix<T> encoder_backward(const AudioEncoder<T>& enc, const EncoderCache<T>& cache,
                                const BasicMatrix<T>& d_out, AudioEncoder<T>& grad) {
  if (cache.layers.size() != enc.layers.size())
    throw std::invalid_argument("encoder_backward: cache does not match encoder");
  const BasicMatrix<T>& top = cache.layers.back().m;
  axpy(grad.out_w, matmul_at(d_out, top));
  add_col_sums(grad.out_b, d_out);
  BasicMatrix<T> dm = matmul(d_out, enc.out_w);
  const std::size_t n = top.rows();
  for (std::size_t li = enc.layers.size(); li-- > 0;) {
    const DfsmnLayer<T>& layer = enc.layers[li];
    const auto& c = cache.layers[li];
    DfsmnLayer<T>& g = grad.layers[li];
    const std::size_t B = c.p.cols();
    BasicMatrix<T> dp = dm;
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 1; i <= layer.mem.rows() && i <= t; ++i) {
        const T* a = layer.mem.row(i - 1).data();
        const T* dmt = dm.row(t).data();
        const T* past = c.p.row(t - i).data();
        T* dpast = dp.row(t - i).data();
        T* ga = g.mem.row(i - 1).data();
        for (std::size_t k = 0; k < B; ++k) {
          dpast[k] += a[k] * dmt[k];
          ga[k] += dmt[k] * past[k];
        }
      }
    }
    BasicMatrix<T> dh = matmul(dp, layer.v);
    axpy(g.v, matmul_at(dp, c.h));
    for (std::size_t k = 0; k < dh.size(); ++k)
      if (!(c.z.data()[k] > T(0))) dh.data()[k] = T(0);
    axpy(g.w, matmul_at(dh, c.x));
    add_col_sums(g.b, dh);
    BasicMatrix<T> dx = matmul(dh, layer.w);
    if (li > 0) axpy(dx, dm);
    dm = std::move(dx);
  }
  return dm;
}

EmbeddingSequence dfsmn_forward(const FeatureSequence& features, const AudioEncoder<float>& enc) {
  return {Modality::kAudio, encoder_forward(enc, features)};
}

DfsmnStreamState::DfsmnStreamState(const AudioEncoder<float>& enc)
    : lookback_(static_cast<std::size_t>(enc.lookback())) {
  for (std::size_t l = 0; l < enc.layers.size(); ++l)
    rings_.emplace_back(lookback_, static_cast<std::size_t>(enc.bottleneck()));
}

void DfsmnStreamState::reset() {
  for (auto& r : rings_) r.fill(0.0f);
  frames_seen_ = 0;
}

bool DfsmnStreamState::matches(const AudioEncoder<float>& enc) const {
  return rings_.size() == enc.layers.size() &&
         lookback_ == static_cast<std::size_t>(enc.lookback()) &&
         (rings_.empty() || rings_[0].cols() == static_cast<std::size_t>(enc.bottleneck()));
}

Vector dfsmn_step(std::span<const float> frame, DfsmnStreamState& state,
                  const AudioEncoder<float>& enc) {
  if (!state.matches(enc)) throw std::invalid_argument("dfsmn_step: state not initialized for encoder");
  if (frame.size() != static_cast<std::size_t>(enc.input_dim()))
    throw std::invalid_argument("dfsmn_step: feature dim " + std::to_string(frame.size()) +
                                " does not match encoder input dim " +
                                std::to_string(enc.input_dim()));
  // Operation order mirrors encoder_forward so both paths agree bitwise.
  Vector x(frame.begin(), frame.end());
  const std::size_t seen = state.frames_seen_;
  const std::size_t N = state.lookback_;
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    const DfsmnLayer<float>& layer = enc.layers[l];
    const std::size_t H = layer.w.rows(), B = layer.v.rows();
    Vector h(H);
    for (std::size_t j = 0; j < H; ++j) {
      const float* wj = layer.w.row(j).data();
      float s = 0;
      for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * wj[k];
      s += layer.b(0, j);
      h[j] = s > 0.0f ? s : 0.0f;
    }
    Vector p(B);
    for (std::size_t j = 0; j < B; ++j) {
      const float* vj = layer.v.row(j).data();
      float s = 0;
      for (std::size_t k = 0; k < H; ++k) s += h[k] * vj[k];
      p[j] = s;
    }
    Vector m = p;
    Matrix& ring = state.rings_[l];
    for (std::size_t i = 1; i <= N && i <= seen; ++i) {
      const float* a = layer.mem.row(i - 1).data();
      const float* past = ring.row((seen - i) % N).data();
      for (std::size_t k = 0; k < B; ++k) m[k] += a[k] * past[k];
    }
    if (l > 0)
      for (std::size_t k = 0; k < B; ++k) m[k] += x[k];
    std::copy(p.begin(), p.end(), ring.row(seen % N).begin());
    x = std::move(m);
  }
  const std::size_t D = enc.out_w.rows();
  Vector e(D);
  for (std::size_t j = 0; j < D; ++j) {
    const float* uj = enc.out_w.row(j).data();
    float s = 0;
    for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * uj[k];
    e[j] = s + enc.out_b(0, j);
  }
  ++state.frames_seen_;
  return e;
}

// ---------------------------------------------------------------------------
// LSTM text encoder

template <typename T>
BasicMatrix<T> text_encoder_forward(const TextEncoder<T>& te, std::span<const int> tokens,
                                    TextCache<T>* cache) {
  const std::size_t n = tokens.size();
  const std::size_t D = te.embed.cols(), H = static_cast<std::size_t>(te.hidden());
  BasicMatrix<T> x(n, D);
  for (std::size_t t = 0; t < n; ++t) {
    const int tok = tokens[t];
    if (tok < 0 || tok >= te.vocab_size())
      throw std::out_of_range("text encoder: token id " + std::to_string(tok) +
                              " outside vocabulary of " + std::to_string(te.vocab_size()));
    std::copy_n(te.embed.row(static_cast<std::size_t>(tok)).begin(), D, x.row(t).begin());
  }
  BasicMatrix<T> zx = matmul_bt(x, te.w_ih);
  BasicMatrix<T> gi(n, H), gf(n, H), gg(n, H), go(n, H), cs(n, H), tc(n, H), hs(n, H);
  std::vector<T> h_prev(H, T(0)), c_prev(H, T(0));
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < 4 * H; ++j) {
      const T* wj = te.w_hh.row(j).data();
      T s = 0;
      for (std::size_t k = 0; k < H; ++k) s += wj[k] * h_prev[k];
      zx(t, j) += s + te.b(0, j);
    }
    for (std::size_t k = 0; k < H; ++k) {
      const T i = sigmoid(zx(t, k));
      const T f = sigmoid(zx(t, H + k));
      const T g = std::tanh(zx(t, 2 * H + k));
      const T o = sigmoid(zx(t, 3 * H + k));
      const T c = f * c_prev[k] + i * g;
      const T th = std::tanh(c);
      gi(t, k) = i;
      gf(t, k) = f;
      gg(t, k) = g;
      go(t, k) = o;
      cs(t, k) = c;
      tc(t, k) = th;
      hs(t, k) = o * th;
    }
    std::copy_n(hs.row(t).begin(), H, h_prev.begin());
    std::copy_n(cs.row(t).begin(), H, c_prev.begin());
  }
  BasicMatrix<T> out = matmul_bt(hs, te.proj_w);
  add_row_bias(out, te.proj_b);
  if (cache) {
    cache->tokens.assign(tokens.begin(), tokens.end());
    cache->x = std::move(x);
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->g = std::move(gg);
    cache->o = std::move(go);
    cache->c = std::move(cs);
    cache->tanh_c = std::move(tc);
    cache->h = std::move(hs);
  }
  return out;
}

template <typename T>
void text_encoder_backward(const TextEncoder<T>& te, const TextCache<T>& cache,
                           const BasicMatrix<T>& d_out, TextEncoder<T>& grad) {
  const std::size_t n = cache.tokens.size();
  const std::size_t D = te.embed.cols(), H = static_cast<std::size_t>(te.hidden());
  axpy(grad.proj_w, matmul_at(d_out, cache.h));
  add_col_sums(grad.proj_b, d_out);
  const BasicMatrix<T> dh_out = matmul(d_out, te.proj_w);
  std::vector<T> dh_next(H, T(0)), dc_next(H, T(0)), dz(4 * H);
  for (std::size_t t = n; t-- > 0;) {
    for (std::size_t k = 0; k < H; ++k) {
      const T dh = dh_out(t, k) + dh_next[k];
      const T o = cache.o(t, k), th = cache.tanh_c(t, k);
      const T i = cache.i(t, k), f = cache.f(t, k), g = cache.g(t, k);
      const T c_prev = t > 0 ? cache.c(t - 1, k) : T(0);
      const T d_o = dh * th;
      const T dc = dh * o * (T(1) - th * th) + dc_next[k];
      dz[k] = dc * g * i * (T(1) - i);
      dz[H + k] = dc * c_prev * f * (T(1) - f);
      dz[2 * H + k] = dc * i * (T(1) - g * g);
      dz[3 * H + k] = d_o * o * (T(1) - o);
      dc_next[k] = dc * f;
    }
    const T* x = cache.x.row(t).data();
    T* demb = grad.embed.row(static_cast<std::size_t>(cache.tokens[t])).data();
    std::fill(dh_next.begin(), dh_next.end(), T(0));
    for (std::size_t j = 0; j < 4 * H; ++j) {
      const T d = dz[j];
      grad.b(0, j) += d;
      if (d == T(0)) continue;
      T* gih = grad.w_ih.row(j).data();
      const T* wih = te.w_ih.row(j).data();
      for (std::size_t k = 0; k < D; ++k) {
        gih[k] += d * x[k];
        demb[k] += d * wih[k];
      }
      if (t > 0) {
        T* ghh = grad.w_hh.row(j).data();
        const T* whh = te.w_hh.row(j).data();
        const T* hp = cache.h.row(t - 1).data();
        for (std::size_t k = 0; k < H; ++k) {
          ghh[k] += d * hp[k];
          dh_next[k] += d * whh[k];
        }
      }
    }
  }
}

EmbeddingSequence text_forward(std::span<const int> tokens, const TextEncoder<float>& te) {
  return {Modality::kText, text_encoder_forward(te, tokens)};
}

// ---------------------------------------------------------------------------
// Cross attention

template <typename T>
BasicMatrix<T> cross_attention_forward(const CrossAttention<T>& ca, const BasicMatrix<T>& e_t,
                                       const BasicMatrix<T>& e_a, AttentionCache<T>* cache) {
  const std::size_t D = ca.wq.rows();
  if (e_t.cols() != D || e_a.cols() != D)
    throw std::invalid_argument("cross_attention: input dims must equal " + std::to_string(D));
  if (e_a.rows() == 0) throw std::invalid_argument("cross_attention: empty key sequence");
  BasicMatrix<T> q = matmul(e_t, ca.wq);
  BasicMatrix<T> k = matmul(e_a, ca.wk);
  BasicMatrix<T> v = matmul(e_a, ca.wv);
  BasicMatrix<T> scores = matmul_bt(q, k);
  const T scale = T(1) / std::sqrt(static_cast<T>(D));
  for (auto& s : scores.data()) s *= scale;
  BasicMatrix<T> attn = e_t.rows() ? softmax_rows(scores) : scores;
  BasicMatrix<T> ctx = matmul(attn, v);
  BasicMatrix<T> out = matmul(ctx, ca.wo);
  if (cache) {
    cache->queries_in = e_t;
    cache->keys_in = e_a;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attn = std::move(attn);
    cache->ctx = std::move(ctx);
  }
  return out;
}

template <typename T>
void cross_attention_backward(const CrossAttention<T>& ca, const AttentionCache<T>& c,
                              const BasicMatrix<T>& d_out, CrossAttention<T>& grad,
                              BasicMatrix<T>& d_e_t, BasicMatrix<T>& d_e_a) {
  const std::size_t D = ca.wq.rows();
  const T scale = T(1) / std::sqrt(static_cast<T>(D));
  axpy(grad.wo, matmul_at(c.ctx, d_out));
  const BasicMatrix<T> d_ctx = matmul_bt(d_out, ca.wo);
  const BasicMatrix<T> d_attn = matmul_bt(d_ctx, c.v);
  const BasicMatrix<T> d_v = matmul_at(c.attn, d_ctx);
  BasicMatrix<T> d_scores(c.attn.rows(), c.attn.cols());
  for (std::size_t r = 0; r < c.attn.rows(); ++r) {
    T inner = 0;
    for (std::size_t j = 0; j < c.attn.cols(); ++j) inner += c.attn(r, j) * d_attn(r, j);
    for (std::size_t j = 0; j < c.attn.cols(); ++j)
      d_scores(r, j) = c.attn(r, j) * (d_attn(r, j) - inner) * scale;
  }
  const BasicMatrix<T> d_q = matmul(d_scores, c.k);
  const BasicMatrix<T> d_k = matmul_at(d_scores, c.q);
  axpy(grad.wq, matmul_at(c.queries_in, d_q));
  axpy(grad.wk, matmul_at(c.keys_in, d_k));
  axpy(grad.wv, matmul_at(c.keys_in, d_v));
  d_e_t = matmul_bt(d_q, ca.wq);
  d_e_a = matmul_bt(d_k, ca.wk);
  axpy(d_e_a, matmul_bt(d_v, ca.wv));
}

EmbeddingSequence cross_attention(const EmbeddingSequence& e_t, const EmbeddingSequence& e_a,
                                  const CrossAttention<float>& ca) {
  if (e_t.dim() != e_a.dim())
    throw std::invalid_argument("cross_attention: text dim " + std::to_string(e_t.dim()) +
                                " != audio dim " + std::to_string(e_a.dim()));
  return {Modality::kMixed, cross_attention_forward(ca, e_t.values, e_a.values)};
}

// ---------------------------------------------------------------------------
// Attentive pooling

template <typename T>
std::vector<T> attentive_pool_forward(const BasicMatrix<T>& att_w, const BasicMatrix<T>& att_v,
                                      const BasicMatrix<T>& e, PoolCache<T>* cache) {
  if (e.rows() == 0) throw std::invalid_argument("attentive_pool: empty sequence");
  if (e.cols() != att_w.cols()) throw std::invalid_argument("attentive_pool: dim mismatch");
  BasicMatrix<T> u = matmul_bt(e, att_w);
  for (auto& x : u.data()) x = std::tanh(x);
  std::vector<T> alpha(e.rows());
  for (std::size_t t = 0; t < e.rows(); ++t)
    alpha[t] = dot(std::span<const T>(att_v.row(0)), std::span<const T>(u.row(t)));
  softmax_inplace(std::span<T>(alpha));
  std::vector<T> out(e.cols(), T(0));
  for (std::size_t t = 0; t < e.rows(); ++t)
    for (std::size_t k = 0; k < e.cols(); ++k) out[k] += alpha[t] * e(t, k);
  if (cache) {
    cache->e = e;
    cache->u = std::move(u);
    cache->alpha = alpha;
  }
  return out;
}

template <typename T>
BasicMatrix<T> attentive_pool_backward(const BasicMatrix<T>& att_w, const BasicMatrix<T>& att_v,
                                       const PoolCache<T>& c, std::span<const T> d_out,
                                       BasicMatrix<T>& d_att_w, BasicMatrix<T>& d_att_v) {
  const std::size_t n = c.e.rows(), D = c.e.cols(), A = att_w.rows();
  std::vector<T> d_alpha(n);
  T mean = 0;
  for (std::size_t t = 0; t < n; ++t) {
    d_alpha[t] = dot(d_out, std::span<const T>(c.e.row(t)));
    mean += c.alpha[t] * d_alpha[t];
  }
  BasicMatrix<T> d_e(n, D);
  BasicMatrix<T> d_pre(n, A);
  for (std::size_t t = 0; t < n; ++t) {
    const T ds = c.alpha[t] * (d_alpha[t] - mean);
    for (std::size_t k = 0; k < D; ++k) d_e(t, k) = c.alpha[t] * d_out[k];
    for (std::size_t a = 0; a < A; ++a) {
      const T u = c.u(t, a);
      d_att_v(0, a) += ds * u;
      d_pre(t, a) = ds * att_v(0, a) * (T(1) - u * u);
    }
  }
  axpy(d_att_w, matmul_at(d_pre, c.e));
  axpy(d_e, matmul(d_pre, att_w));
  return d_e;
}

Vector attentive_pool(const EmbeddingSequence& e, const SpeakerHead<float>& head) {
  return attentive_pool_forward(head.att_w, head.att_v, e.values);
}

// ---------------------------------------------------------------------------

#define KWS_INSTANTIATE(T)                                                                      \
  template struct ModelParams<T>;                                                               \
  template ModelParams<T> init_params<T>(const ModelConfig&, uint64_t);                         \
  template BasicMatrix<T> encoder_forward(const AudioEncoder<T>&, const BasicMatrix<T>&,        \
                                          EncoderCache<T>*);                                    \
  template BasicMatrix<T> encoder_backward(const AudioEncoder<T>&, const EncoderCache<T>&,      \
                                           const BasicMatrix<T>&, AudioEncoder<T>&);            \
  template BasicMatrix<T> text_encoder_forward(const TextEncoder<T>&, std::span<const int>,     \
                                               TextCache<T>*);                                  \
  template void text_encoder_backward(const TextEncoder<T>&, const TextCache<T>&,               \
                                      const BasicMatrix<T>&, TextEncoder<T>&);                  \
  template BasicMatrix<T> cross_attention_forward(const CrossAttention<T>&,                     \
                                                  const BasicMatrix<T>&, const BasicMatrix<T>&, \
                                                  AttentionCache<T>*);                          \
  template void cross_attention_backward(const CrossAttention<T>&, const AttentionCache<T>&,    \
                                         const BasicMatrix<T>&, CrossAttention<T>&,             \
                                         BasicMatrix<T>&, BasicMatrix<T>&);                     \
  template std::vector<T> attentive_pool_forward(const BasicMatrix<T>&, const BasicMatrix<T>&,  \
                                                 const BasicMatrix<T>&, PoolCache<T>*);         \
  template BasicMatrix<T> attentive_pool_backward(const BasicMatrix<T>&, const BasicMatrix<T>&, \
                                                  const PoolCache<T>&, std::span<const T>,      \
                                                  BasicMatrix<T>&, BasicMatrix<T>&);

KWS_INSTANTIATE(float)
KWS_INSTANTIATE(double)
#undef KWS_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;

}  // namespace kws
