// src/toytrain.cc
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

#include "streamkws/toytrain.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace kws {

void SyntheticCorpusConfig::validate() const {
  if (n_phonemes < 2) throw std::invalid_argument("corpus: n_phonemes must be >= 2");
  if (n_speakers < 2) throw std::invalid_argument("corpus: n_speakers must be >= 2");
  if (frames_per_phoneme < 1) throw std::invalid_argument("corpus: frames_per_phoneme must be >= 1");
  if (feature_dim < 1) throw std::invalid_argument("corpus: feature_dim must be >= 1");
  if (utterances < 2) throw std::invalid_argument("corpus: utterances must be >= 2");
  if (!(noise_std >= 0) || !(speaker_offset_std >= 0))
    throw std::invalid_argument("corpus: standard deviations must be >= 0");
}

namespace {

void fill_gaussian(std::span<double> v, double stddev, std::mt19937_64& rng) {
  if (stddev == 0) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  std::normal_distribution<double> nd(0.0, stddev);
  for (auto& x : v) x = nd(rng);
}

std::vector<int> random_tokens(std::mt19937_64& rng, int n_phonemes, int min_len, int max_len) {
  const int len = std::uniform_int_distribution<int>(min_len, max_len)(rng);
  std::uniform_int_distribution<int> ph(0, n_phonemes - 1);
  std::vector<int> t(len);
  for (auto& v : t) v = ph(rng);
  return t;
}

}  // namespace

SyntheticWorld make_world(const SyntheticCorpusConfig& cfg) {
  cfg.validate();
  SyntheticWorld w{cfg, MatrixD(cfg.n_phonemes, cfg.feature_dim), MatrixD(cfg.n_speakers, cfg.feature_dim)};
  std::mt19937_64 rng(cfg.seed);
  fill_gaussian(w.phoneme_base.data(), 1.0, rng);
  fill_gaussian(w.speaker_offset.data(), cfg.speaker_offset_std, rng);
  return w;
}

SyntheticUtterance synth_utterance(const SyntheticWorld& world, std::span<const int> tokens,
                                   int speaker, std::mt19937_64& rng, int frames_per_phoneme) {
  const auto& cfg = world.cfg;
  if (tokens.empty()) throw std::invalid_argument("synth_utterance: no tokens");
  if (speaker < 0 || speaker >= cfg.n_speakers) throw std::out_of_range("synth_utterance: bad speaker");
  const int fpp = frames_per_phoneme > 0 ? frames_per_phoneme : cfg.frames_per_phoneme;
  SyntheticUtterance u;
  u.tokens.assign(tokens.begin(), tokens.end());
  u.speaker = speaker;
  u.features = Matrix(tokens.size() * fpp, cfg.feature_dim);
  std::vector<double> noise(cfg.feature_dim);
  std::size_t t = 0;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const int ph = tokens[k];
    if (ph < 0 || ph >= cfg.n_phonemes) throw std::out_of_range("synth_utterance: bad token");
    for (int f = 0; f < fpp; ++f, ++t) {
      fill_gaussian(noise, cfg.noise_std, rng);
      for (int d = 0; d < cfg.feature_dim; ++d)
        u.features(t, d) =
            static_cast<float>(world.phoneme_base(ph, d) + world.speaker_offset(speaker, d) + noise[d]);
      u.labels.push_back(ph);
      u.alignment.push_back(static_cast<int>(k));
    }
  }
  return u;
}

std::vector<SyntheticUtterance> gen_corpus(const SyntheticCorpusConfig& cfg) {
  const SyntheticWorld world = make_world(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0xC0FFEEULL);
  std::uniform_int_distribution<int> spk(0, cfg.n_speakers - 1);
  std::vector<SyntheticUtterance> out;
  out.reserve(cfg.utterances);
  for (int i = 0; i < cfg.utterances; ++i) {
    const auto tokens = random_tokens(rng, cfg.n_phonemes, 3, 8);
    const int s = spk(rng);
    out.push_back(synth_utterance(world, tokens, s, rng));
  }
  return out;
}

std::size_t heldout_begin(std::size_t n_utterances, double fraction) {
  const auto held = static_cast<std::size_t>(std::floor(static_cast<double>(n_utterances) * fraction));
  return n_utterances - held;
}

std::string synth_source(uint64_t seed, std::span<const int> tokens, int frames_per_phoneme) {
  std::string s = "SYNTH:" + std::to_string(seed);
  if (tokens.empty() && frames_per_phoneme <= 0) return s;
  s += ':';
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(tokens[i]);
  }
  if (frames_per_phoneme > 0) s += ':' + std::to_string(frames_per_phoneme);
  return s;
}

bool is_synth_source(const std::string& source) { return source.rfind("SYNTH:", 0) == 0; }

FeatureSequence synth_stream(const SyntheticWorld& world, const std::string& source) {
  if (!is_synth_source(source)) throw std::invalid_argument("not a synthetic source: " + source);
  std::vector<std::string> parts;
  std::stringstream ss(source.substr(6));
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.empty() || parts.size() > 3) throw std::invalid_argument("bad synthetic source: " + source);
  auto number = [&](const std::string& text) -> uint64_t {
    std::size_t used = 0;
    uint64_t v = 0;
    try {
      v = std::stoull(text, &used);
    } catch (const std::logic_error&) {
      used = std::string::npos;
    }
    if (used != text.size()) throw std::invalid_argument("bad synthetic source: " + source);
    return v;
  };
  const uint64_t seed = number(parts[0]);
  std::vector<int> tokens;
  if (parts.size() > 1 && !parts[1].empty()) {
    std::stringstream ts(parts[1]);
    for (std::string t; std::getline(ts, t, ',');) tokens.push_back(static_cast<int>(number(t)));
  }
  const int fpp = parts.size() > 2 ? static_cast<int>(number(parts[2])) : 0;
  std::mt19937_64 rng(seed);
  const int speaker = std::uniform_int_distribution<int>(0, world.cfg.n_speakers - 1)(rng);
  if (tokens.empty()) tokens = random_tokens(rng, world.cfg.n_phonemes, 3, 8);
  return synth_utterance(world, tokens, speaker, rng, fpp).features;
}

ModelConfig toy_model_config(const SyntheticCorpusConfig& corpus) {
  ModelConfig m = ModelConfig::toy_preset();
  m.input_dim = corpus.feature_dim;
  m.vocab_size = corpus.n_phonemes;
  m.n_phonemes = corpus.n_phonemes;
  m.n_speakers = corpus.n_speakers;
  return m;
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("train: lr must be > 0");
  if (!(anneal_factor > 0 && anneal_factor < 1)) throw std::invalid_argument("train: anneal_factor must be in (0, 1)");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
}

void TrainTrace::write_csv(std::ostream& os) const {
  if (phase == 1) os << "epoch,L_ph,L_vp,total,heldout,lr\n";
  else os << "epoch,L_ph,L_clat,L_clam,total,heldout,lr\n";
  char buf[256];
  for (const auto& e : epochs) {
    if (phase == 1)
      std::snprintf(buf, sizeof buf, "%d,%.8g,%.8g,%.8g,%.8g,%.6g\n", e.epoch, e.l_ph, e.l_second,
                    e.total, e.heldout, e.lr);
    else
      std::snprintf(buf, sizeof buf, "%d,%.8g,%.8g,%.8g,%.8g,%.8g,%.6g\n", e.epoch, e.l_ph, e.l_second,
                    e.l_third, e.total, e.heldout, e.lr);
    os << buf;
  }
}

namespace {

using Params = ModelParams<double>;

struct Components {
  double ph = 0, second = 0, third = 0, total = 0;
  double monitor = 0;  // held-out plateau criterion

  void add(const Components& o, double s) {
    ph += s * o.ph;
    second += s * o.second;
    third += s * o.third;
    total += s * o.total;
    monitor += s * o.monitor;
  }
};

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, Params& params, std::function<bool(const std::string&)> trainable,
            std::function<double(const std::string&)> lr_scale = {})
      : kind_(kind) {
    params.visit([&](const std::string& name, MatrixD& m) {
      if (!trainable(name)) return;
      slots_.push_back({name, &m, MatrixD(m.rows(), m.cols()), MatrixD(m.rows(), m.cols()),
                        lr_scale ? lr_scale(name) : 1.0});
    });
  }

  void step(Params& grad, double lr) {
    std::map<std::string, MatrixD*> g;
    grad.visit([&](const std::string& name, MatrixD& m) { g[name] = &m; });
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1 - std::pow(b2, static_cast<double>(t_));
    for (auto& s : slots_) {
      const double step = lr * s.lr_scale;
      auto& p = s.param->data();
      const auto& d = g.at(s.name)->data();
      if (kind_ == OptimizerKind::kSgd) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= step * d[i];
        continue;
      }
      auto& m = s.m.data();
      auto& v = s.v.data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1 - b1) * d[i];
        v[i] = b2 * v[i] + (1 - b2) * d[i] * d[i];
        p[i] -= step * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }

 private:
  struct Slot {
    std::string name;
    MatrixD* param;
    MatrixD m, v;
    double lr_scale;
  };
  OptimizerKind kind_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

bool has_prefix(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

// One utterance of the audio objective. Gradients are accumulated into
// `grad` scaled by `scale` when grad is non-null.
Components phase1_utterance(const SyntheticUtterance& u, const Params& p, Params* grad, double scale,
                            const TrainLosses& L) {
  const MatrixD x = u.features.cast<double>();
  EncoderCache<double> cache;
  const MatrixD e = encoder_forward(p.encoder, x, grad ? &cache : nullptr);
  const auto ph = aam_loss(e, u.labels, p.phone.w, L.aam);
  const auto vp = speaker_ce_grl(e, u.speaker, p.speaker, L.weights.grl_lambda);
  const double a = L.weights.alpha_audio, b = L.weights.beta_audio;
  // The speaker term is adversarial, so its rise is not a plateau signal.
  Components c{ph.value, vp.value, 0, a * ph.value + b * vp.value, ph.value};
  if (!grad) return c;

  MatrixD de(e.rows(), e.cols());
  axpy(de, ph.grad(grad_key::kEmbeddings), a * scale);
  axpy(de, vp.grad(grad_key::kEmbeddings), b * scale);
  encoder_backward(p.encoder, cache, de, grad->encoder);
  axpy(grad->phone.w, ph.grad(grad_key::kPhoneWeights), a * scale);
  // The head always descends on its own loss; only the reversed path to
  // the encoder carries the weight.
  axpy(grad->speaker.att_w, vp.grad(grad_key::kAttW), scale);
  axpy(grad->speaker.att_v, vp.grad(grad_key::kAttV), scale);
  axpy(grad->speaker.cls_w, vp.grad(grad_key::kClsW), scale);
  axpy(grad->speaker.cls_b, vp.grad(grad_key::kClsB), scale);
  return c;
}

MatrixD expand_rows(const MatrixD& m, std::span<const int> alignment) {
  MatrixD out(alignment.size(), m.cols());
  for (std::size_t t = 0; t < alignment.size(); ++t)
    std::copy(m.row(alignment[t]).begin(), m.row(alignment[t]).end(), out.row(t).begin());
  return out;
}

MatrixD scatter_rows(const MatrixD& d, std::span<const int> alignment, std::size_t n_rows, double scale) {
  MatrixD out(n_rows, d.cols());
  for (std::size_t t = 0; t < alignment.size(); ++t) {
    auto dst = out.row(alignment[t]);
    auto src = d.row(t);
    for (std::size_t k = 0; k < d.cols(); ++k) dst[k] += scale * src[k];
  }
  return out;
}

// One utterance of the mixed objective. Both contrastive terms use the
// audio frames as anchors and are averaged over frames.
Components phase2_utterance(const SyntheticUtterance& u, const Params& p, Params* grad, double scale,
                            const TrainLosses& L, bool freeze_encoder) {
  const MatrixD x = u.features.cast<double>();
  EncoderCache<double> ecache;
  TextCache<double> tcache;
  AttentionCache<double> acache;
  const MatrixD e_a = encoder_forward(p.encoder, x, grad ? &ecache : nullptr);
  const MatrixD e_t = text_encoder_forward(p.text, u.tokens, grad ? &tcache : nullptr);
  const MatrixD e_m = cross_attention_forward(p.mixer, e_t, e_a, grad ? &acache : nullptr);
  const double n = static_cast<double>(e_a.rows());

  const auto ph = aam_loss(e_a, u.labels, p.phone.w, L.aam);
  const auto clat = infonce(e_a, expand_rows(e_t, u.alignment), L.contrastive, "clat.audio", "clat.text");
  const auto clam = infonce(e_a, expand_rows(e_m, u.alignment), L.contrastive, "clam.audio", "clam.mixed");
  const double a = L.weights.alpha_mixed, b = L.weights.beta_mixed, g = L.weights.gamma_mixed;
  Components c{ph.value, clat.value / n, clam.value / n, 0};
  c.total = a * c.ph + b * c.second + g * c.third;
  c.monitor = c.total;
  if (!grad) return c;

  MatrixD d_ea(e_a.rows(), e_a.cols());
  axpy(d_ea, ph.grad(grad_key::kEmbeddings), a * scale);
  axpy(d_ea, clat.grad("clat.audio"), b * scale / n);
  axpy(d_ea, clam.grad("clam.audio"), g * scale / n);
  MatrixD d_et = scatter_rows(clat.grad("clat.text"), u.alignment, e_t.rows(), b * scale / n);
  const MatrixD d_em = scatter_rows(clam.grad("clam.mixed"), u.alignment, e_m.rows(), g * scale / n);
  MatrixD d_et_att, d_ea_att;
  cross_attention_backward(p.mixer, acache, d_em, grad->mixer, d_et_att, d_ea_att);
  axpy(d_et, d_et_att);
  axpy(d_ea, d_ea_att);
  text_encoder_backward(p.text, tcache, d_et, grad->text);
  if (!freeze_encoder) encoder_backward(p.encoder, ecache, d_ea, grad->encoder);
  axpy(grad->phone.w, ph.grad(grad_key::kPhoneWeights), a * scale);
  return c;
}

using UtteranceFn = std::function<Components(const SyntheticUtterance&, const Params&, Params*, double)>;

TrainResult run_training(int phase, Params params, std::span<const SyntheticUtterance> corpus,
                         const TrainConfig& cfg, const UtteranceFn& fn,
                         const std::function<bool(const std::string&)>& trainable) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  const std::size_t split = corpus.size() >= 10 ? heldout_begin(corpus.size()) : corpus.size();
  std::vector<std::size_t> order(split);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  Optimizer opt(cfg.optimizer, params, trainable, [&](const std::string& name) {
    return has_prefix(name, "speaker.") ? cfg.speaker_lr_scale : 1.0;
  });
  double lr = cfg.lr;
  double best = std::numeric_limits<double>::infinity();

  TrainResult result;
  result.trace.phase = phase;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    Components train_sum;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - b);
      Params grad = params.zeros_like();
      for (std::size_t k = b; k < end; ++k) {
        const Components c = fn(corpus[order[k]], params, &grad, scale);
        if (!std::isfinite(c.total))
          throw std::runtime_error("phase " + std::to_string(phase) + ": non-finite loss at epoch " +
                                   std::to_string(epoch));
        train_sum.add(c, 1.0 / static_cast<double>(order.size()));
      }
      opt.step(grad, lr);
    }

    double heldout = 0;
    if (split < corpus.size()) {
      for (std::size_t k = split; k < corpus.size(); ++k) heldout += fn(corpus[k], params, nullptr, 0).monitor;
      heldout /= static_cast<double>(corpus.size() - split);
    } else {
      heldout = train_sum.monitor;
    }
    if (!std::isfinite(heldout))
      throw std::runtime_error("phase " + std::to_string(phase) + ": non-finite held-out loss at epoch " +
                               std::to_string(epoch));
    result.trace.epochs.push_back(
        {epoch, train_sum.ph, train_sum.second, train_sum.third, train_sum.total, heldout, lr});
    if (heldout > best * (1 - cfg.plateau_tolerance)) lr *= cfg.anneal_factor;
    best = std::min(best, heldout);
  }
  result.weights = to_container(params.cast<float>());
  return result;
}

}  // namespace

TrainResult train_phase1(std::span<const SyntheticUtterance> corpus, const ModelConfig& model_cfg,
                         const TrainConfig& train_cfg, const TrainLosses& losses) {
  model_cfg.validate();
  losses.weights.validate();
  losses.aam.validate();
  Params params = init_params<double>(model_cfg, train_cfg.seed);
  auto fn = [&](const SyntheticUtterance& u, const Params& p, Params* g, double s) {
    return phase1_utterance(u, p, g, s, losses);
  };
  auto trainable = [](const std::string& name) {
    return has_prefix(name, "encoder.") || has_prefix(name, "phone.") || has_prefix(name, "speaker.");
  };
  return run_training(1, std::move(params), corpus, train_cfg, fn, trainable);
}

TrainResult train_phase2(std::span<const SyntheticUtterance> corpus, const WeightContainer& phase1,
                         const TrainConfig& train_cfg, const TrainLosses& losses) {
  losses.weights.validate();
  losses.aam.validate();
  Params params = from_container(phase1).cast<double>();
  const bool freeze = train_cfg.freeze_encoder;
  auto fn = [&](const SyntheticUtterance& u, const Params& p, Params* g, double s) {
    return phase2_utterance(u, p, g, s, losses, freeze);
  };
  auto trainable = [freeze](const std::string& name) {
    if (has_prefix(name, "encoder.")) return !freeze;
    return has_prefix(name, "text.") || has_prefix(name, "mixer.") || has_prefix(name, "phone.");
  };
  return run_training(2, std::move(params), corpus, train_cfg, fn, trainable);
}

double phoneme_accuracy(std::span<const SyntheticUtterance> utts, const ModelParams<float>& model) {
  std::size_t correct = 0, total = 0;
  const Matrix& w = model.phone.w;
  for (const auto& u : utts) {
    const auto e = dfsmn_forward(u.features, model.encoder);
    for (std::size_t t = 0; t < e.n_frames(); ++t) {
      int best = 0;
      float best_c = -2;
      for (std::size_t j = 0; j < w.rows(); ++j) {
        const float c = cosine_sim(e.values.row(t), w.row(j));
        if (c > best_c) best_c = c, best = static_cast<int>(j);
      }
      correct += best == u.labels[t];
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

double speaker_probe_accuracy(std::span<const SyntheticUtterance> train,
                              std::span<const SyntheticUtterance> test,
                              const AudioEncoder<float>& encoder, int n_speakers, const ProbeConfig& cfg) {
  if (train.empty() || test.empty()) throw std::invalid_argument("speaker probe: empty split");
  auto embed = [&](std::span<const SyntheticUtterance> utts) {
    std::vector<MatrixD> out;
    for (const auto& u : utts) {
      MatrixD e = dfsmn_forward(u.features, encoder).values.cast<double>();
      if (cfg.normalize)
        for (std::size_t r = 0; r < e.rows(); ++r) {
          const auto n = l2_normalize(std::span<const double>(e.row(r)));
          std::copy(n.begin(), n.end(), e.row(r).begin());
        }
      out.push_back(std::move(e));
    }
    return out;
  };
  const auto tr = embed(train), te = embed(test);
  const std::size_t d = tr.front().cols();

  Params holder;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> ud(-0.1, 0.1);
  SpeakerHead<double>& head = holder.speaker;
  head.att_w = MatrixD(cfg.attention_dim, d);
  head.att_v = MatrixD(1, cfg.attention_dim);
  head.cls_w = MatrixD(n_speakers, d);
  head.cls_b = MatrixD(1, n_speakers);
  for (auto* m : {&head.att_w, &head.att_v, &head.cls_w})
    for (auto& v : m->data()) v = ud(rng);
  Optimizer opt(OptimizerKind::kAdam, holder, [](const std::string&) { return true; });

  std::vector<std::size_t> order(tr.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = 50;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t end = std::min(order.size(), b + batch);
      const double scale = 1.0 / static_cast<double>(end - b);
      Params grad = holder.zeros_like();
      for (std::size_t k = b; k < end; ++k) {
        const auto r = speaker_ce_grl(tr[order[k]], train[order[k]].speaker, head, 0.0);
        axpy(grad.speaker.att_w, r.grad(grad_key::kAttW), scale);
        axpy(grad.speaker.att_v, r.grad(grad_key::kAttV), scale);
        axpy(grad.speaker.cls_w, r.grad(grad_key::kClsW), scale);
        axpy(grad.speaker.cls_b, r.grad(grad_key::kClsB), scale);
      }
      opt.step(grad, cfg.lr);
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < te.size(); ++i) {
    const VectorD pooled = attentive_pool_forward(head.att_w, head.att_v, te[i]);
    int best = 0;
    double best_z = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < n_speakers; ++s) {
      const double z = dot(std::span<const double>(head.cls_w.row(s)), std::span<const double>(pooled)) +
                       head.cls_b(0, s);
      if (z > best_z) best_z = z, best = s;
    }
    correct += best == test[i].speaker;
  }
  return static_cast<double>(correct) / static_cast<double>(te.size());
}

AlignmentStats alignment_similarity(std::span<const SyntheticUtterance> utts, const ModelParams<float>& model) {
  double matched = 0, mismatched = 0;
  std::size_t n_match = 0, n_mis = 0;
  for (const auto& u : utts) {
    const auto e_a = dfsmn_forward(u.features, model.encoder);
    const auto e_t = text_forward(u.tokens, model.text);
    for (std::size_t t = 0; t < e_a.n_frames(); ++t) {
      for (std::size_t i = 0; i < e_t.n_frames(); ++i) {
        const double c = cosine_sim(e_t.values.row(i), e_a.values.row(t));
        if (static_cast<int>(i) == u.alignment[t]) {
          matched += c;
          ++n_match;
        } else if (u.tokens[i] != u.labels[t]) {
          mismatched += c;
          ++n_mis;
        }
      }
    }
  }
  return {n_match ? matched / n_match : 0.0, n_mis ? mismatched / n_mis : 0.0};
}

std::string token_string(std::span<const int> tokens) {
  static const char kAlphabet[] = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789+/";
  std::string s;
  for (int t : tokens) {
    if (t < 0 || t >= 64) throw std::out_of_range("token_string: token out of range");
    s += kAlphabet[t];
  }
  return s;
}

TrialSet make_trial_set(const SyntheticWorld& world, const TrialSetConfig& cfg) {
  if (cfg.keywords < 1 || cfg.min_phonemes < 1 || cfg.max_phonemes < cfg.min_phonemes)
    throw std::invalid_argument("trial set: bad configuration");
  std::mt19937_64 rng(cfg.seed);
  const int n_ph = world.cfg.n_phonemes;
  std::uniform_int_distribution<int> pad(cfg.pad_min, cfg.pad_max);
  auto duration = [&]() {
    if (cfg.max_frames_per_phoneme <= 0) return 0;
    return std::uniform_int_distribution<int>(std::max(1, cfg.min_frames_per_phoneme),
                                              cfg.max_frames_per_phoneme)(rng);
  };
  auto seed = [&]() { return rng() >> 16; };

  TrialSet set;
  for (int k = 0; k < cfg.keywords; ++k) {
    KeywordEnrollment kw;
    kw.keyword_id = "kw" + std::to_string(k);
    kw.tokens = random_tokens(rng, n_ph, cfg.min_phonemes, cfg.max_phonemes);
    kw.audio_source = synth_source(seed(), kw.tokens, duration());
    const std::string target = token_string(kw.tokens);

    auto add = [&](const std::string& source, bool positive, Difficulty d) {
      Trial t;
      t.keyword_id = kw.keyword_id;
      t.source = source;
      t.positive = positive;
      t.pad_before = pad(rng);
      t.pad_after = pad(rng);
      t.difficulty = d;
      set.trials.push_back(t);
    };
    for (int i = 0; i < cfg.positives_per_keyword; ++i) {
      const std::string source = synth_source(seed(), kw.tokens, duration());
      add(cfg.positives_from_enrollment ? kw.audio_source : source, true, Difficulty::kNone);
    }
    for (int i = 0; i < cfg.random_negatives_per_keyword; ++i) {
      std::vector<int> neg;
      do {
        neg = random_tokens(rng, n_ph, cfg.min_phonemes, cfg.max_phonemes);
      } while (neg == kw.tokens);
      const auto d = split_difficulty(target, {token_string(neg)}, cfg.hard_threshold)[0];
      add(synth_source(seed(), neg, duration()), false, d);
    }
    for (int i = 0; i < cfg.near_miss_per_keyword; ++i) {
      std::vector<int> neg = kw.tokens;
      const std::size_t pos = rng() % neg.size();
      neg[pos] = (neg[pos] + 1 + static_cast<int>(rng() % (n_ph - 1))) % n_ph;
      const auto d = split_difficulty(target, {token_string(neg)}, cfg.hard_threshold)[0];
      add(synth_source(seed(), neg, duration()), false, d);
    }
    set.keywords.push_back(std::move(kw));
  }
  return set;
}

}  // namespace kws
