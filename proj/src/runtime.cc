// src/runtime.cc
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

#include "streamkws/runtime.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace kws {

namespace {

const char kProfileMagic[4] = {'S', 'N', 'P', '1'};

Matrix normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto n = l2_normalize(m.row(r));
    std::copy(n.begin(), n.end(), out.row(r).begin());
  }
  return out;
}

const char* tensor_name(Modality m) {
  switch (m) {
    case Modality::kAudio: return "E_A";
    case Modality::kText: return "E_T";
    case Modality::kMixed: return "E_M";
    default: throw std::invalid_argument("profile: stream modality has no tensor");
  }
}

}  // namespace

void DecoderConfig::validate() const {
  if (w_smooth < 1) throw std::invalid_argument("w_smooth must be >= 1");
  if (w_scoring < 1) throw std::invalid_argument("w_scoring must be >= 1");
  if (!(sim_floor > 0 && sim_floor < 1)) throw std::invalid_argument("sim_floor must be in (0, 1)");
}

void FusionWeights::validate() const {
  for (double v : {audio, text, mixed})
    if (!(v >= 0) || !std::isfinite(v)) throw std::invalid_argument("fusion weights must be >= 0");
}

std::size_t EnrollmentProfile::dim() const {
  for (const auto* e : {&audio, &text, &mixed})
    if (e->has_value()) return (*e)->dim();
  return 0;
}

void EnrollmentProfile::validate() const {
  if (!audio && !text) throw std::invalid_argument("profile: needs audio or text enrollment");
  if (mixed && !(audio && text))
    throw std::invalid_argument("profile: mixed embeddings require audio and text");
  const std::size_t d = dim();
  auto check = [&](const std::optional<EmbeddingSequence>& e, Modality m) {
    if (!e) return;
    if (e->modality != m) throw std::invalid_argument("profile: modality tag mismatch");
    if (e->n_frames() == 0) throw std::invalid_argument("profile: empty embedding sequence");
    if (e->dim() != d) throw std::invalid_argument("profile: embedding dims differ");
    if (!all_finite(e->values)) throw std::invalid_argument("profile: non-finite embedding");
  };
  check(audio, Modality::kAudio);
  check(text, Modality::kText);
  check(mixed, Modality::kMixed);
  if (mixed && mixed->n_frames() != text->n_frames())
    throw std::invalid_argument("profile: mixed length must equal text length");
}

EnrollmentProfile make_profile(const std::string& keyword_id,
                               const std::optional<FeatureSequence>& enroll_audio,
                               const std::optional<std::vector<int>>& enroll_tokens,
                               const ModelParams<float>& model) {
  if (!enroll_audio && !enroll_tokens)
    throw std::invalid_argument("make_profile: need enrollment audio or tokens");
  EnrollmentProfile p;
  p.keyword_id = keyword_id;
  std::optional<EmbeddingSequence> raw_a, raw_t;
  if (enroll_audio) {
    if (enroll_audio->rows() == 0) throw std::invalid_argument("make_profile: empty enrollment audio");
    raw_a = dfsmn_forward(*enroll_audio, model.encoder);
    p.audio = EmbeddingSequence{Modality::kAudio, normalize_rows(raw_a->values)};
  }
  if (enroll_tokens) {
    if (enroll_tokens->empty()) throw std::invalid_argument("make_profile: empty token list");
    p.tokens = *enroll_tokens;
    raw_t = text_forward(*enroll_tokens, model.text);
    p.text = EmbeddingSequence{Modality::kText, normalize_rows(raw_t->values)};
  }
  if (raw_a && raw_t) {
    auto m = cross_attention(*raw_t, *raw_a, model.mixer);
    p.mixed = EmbeddingSequence{Modality::kMixed, normalize_rows(m.values)};
  }
  p.validate();
  return p;
}

std::vector<uint8_t> save_profile(const EnrollmentProfile& profile, const DecoderConfig* config_echo) {
  profile.validate();
  nlohmann::json meta;
  meta["keyword_id"] = profile.keyword_id;
  meta["dim"] = profile.dim();
  meta["created_from"] = {{"audio", profile.audio.has_value()},
                          {"text", profile.text.has_value()},
                          {"mixed", profile.mixed.has_value()}};
  meta["tokens"] = profile.tokens;
  if (config_echo)
    meta["decoder"] = {{"w_smooth", config_echo->w_smooth},
                       {"w_scoring", config_echo->w_scoring},
                       {"sim_floor", config_echo->sim_floor},
                       {"include_last_unit", config_echo->include_last_unit}};
  const std::string js = meta.dump();

  WeightContainer w;
  for (const auto* e : {&profile.audio, &profile.text, &profile.mixed})
    if (e->has_value()) w.insert(tensor_name((*e)->modality), (*e)->values);
  const auto payload = save_weights(w);

  std::vector<uint8_t> out(kProfileMagic, kProfileMagic + 4);
  const uint32_t len = static_cast<uint32_t>(js.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(len >> (8 * i)));
  out.insert(out.end(), js.begin(), js.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

EnrollmentProfile load_profile(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kProfileMagic, 4) != 0)
    throw FormatError("profile: bad magic");
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(bytes[4 + i]) << (8 * i);
  if (bytes.size() - 8 < len) throw FormatError("profile: truncated metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("profile: bad metadata: ") + e.what());
  }
  const auto w = load_weights(bytes.subspan(8 + len));

  EnrollmentProfile p;
  try {
    p.keyword_id = meta.at("keyword_id").get<std::string>();
    if (meta.contains("tokens")) p.tokens = meta["tokens"].get<std::vector<int>>();
    const auto& from = meta.at("created_from");
    auto take = [&](const char* flag, Modality m, std::optional<EmbeddingSequence>& slot) {
      const bool want = from.at(flag).get<bool>();
      if (want != w.contains(tensor_name(m)))
        throw FormatError(std::string("profile: flag/tensor mismatch for ") + flag);
      if (want) slot = EmbeddingSequence{m, w.matrix(tensor_name(m))};
    };
    take("audio", Modality::kAudio, p.audio);
    take("text", Modality::kText, p.text);
    take("mixed", Modality::kMixed, p.mixed);
    if (w.size() != static_cast<std::size_t>(p.audio.has_value() + p.text.has_value() + p.mixed.has_value()))
      throw FormatError("profile: unexpected tensors");
    if (meta.at("dim").get<std::size_t>() != p.dim()) throw FormatError("profile: dim mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("profile: bad metadata: ") + e.what());
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return p;
}

void save_profile_file(const std::string& path, const EnrollmentProfile& profile,
                       const DecoderConfig* config_echo) {
  write_file_bytes(path, save_profile(profile, config_echo));
}

EnrollmentProfile load_profile_file(const std::string& path) {
  return load_profile(read_file_bytes(path));
}

double similarity_row(std::span<const float> enroll_row, std::span<const float> stream_frame,
                      double sim_floor) {
  if (enroll_row.size() != stream_frame.size()) throw std::invalid_argument("similarity: dimension mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < enroll_row.size(); ++k) {
    const double a = enroll_row[k], b = stream_frame[k];
    ab += a * b;
    aa += a * a;
    bb += b * b;
  }
  if (!(aa > 0) || !(bb > 0)) return sim_floor;
  return std::clamp(ab / std::sqrt(aa * bb), sim_floor, 1.0);
}

double smooth(std::span<const double> row_prefix, int w_smooth) {
  if (row_prefix.empty()) throw std::invalid_argument("smooth: empty prefix");
  if (w_smooth < 1) throw std::invalid_argument("smooth: w_smooth must be >= 1");
  const std::size_t j = row_prefix.size() - 1;
  const std::size_t h = j >= static_cast<std::size_t>(w_smooth) ? j - w_smooth + 1 : 0;
  double s = 0;
  for (std::size_t k = h; k <= j; ++k) s += row_prefix[k];
  return s / static_cast<double>(j - h + 1);
}

double score(const MatrixD& smoothed, int w_scoring) {
  if (smoothed.rows() == 0 || smoothed.cols() == 0) throw std::invalid_argument("score: empty input");
  if (w_scoring < 1) throw std::invalid_argument("score: w_scoring must be >= 1");
  const std::size_t j = smoothed.cols() - 1;
  const std::size_t h = j >= static_cast<std::size_t>(w_scoring) ? j - w_scoring + 1 : 0;
  double log_sum = 0;
  for (std::size_t i = 0; i < smoothed.rows(); ++i) {
    double m = smoothed(i, h);
    for (std::size_t k = h + 1; k <= j; ++k) m = std::max(m, smoothed(i, k));
    log_sum += std::log(m);
  }
  return std::exp(log_sum / static_cast<double>(smoothed.rows()));
}

double fuse(std::optional<double> audio, std::optional<double> text, std::optional<double> mixed,
            const FusionWeights& w) {
  double num = 0, den = 0;
  int present = 0;
  double plain = 0;
  auto add = [&](const std::optional<double>& s, double weight) {
    if (!s) return;
    num += weight * *s;
    den += weight;
    plain += *s;
    ++present;
  };
  add(audio, w.audio);
  add(text, w.text);
  add(mixed, w.mixed);
  if (present == 0) throw std::invalid_argument("fuse: no modality scores");
  if (den <= 0) return plain / present;
  return num / den;
}

WindowMax::WindowMax(std::size_t window) : window_(window) {
  if (window == 0) throw std::invalid_argument("WindowMax: window must be >= 1");
}

void WindowMax::push(double v) {
  while (!deque_.empty() && deque_.back().value <= v) deque_.pop_back();
  deque_.push_back({counter_, v});
  if (counter_ - deque_.front().index >= window_) deque_.pop_front();
  ++counter_;
}

double WindowMax::max() const {
  if (deque_.empty()) throw std::logic_error("WindowMax: empty");
  return deque_.front().value;
}

void WindowMax::clear() {
  deque_.clear();
  counter_ = 0;
}

CausalSmoother::CausalSmoother(std::size_t window) : ring_(window, 0.0) {
  if (window == 0) throw std::invalid_argument("CausalSmoother: window must be >= 1");
}

double CausalSmoother::push(double v) {
  const std::size_t slot = count_ % ring_.size();
  if (count_ >= ring_.size()) sum_ -= ring_[slot];
  ring_[slot] = v;
  sum_ += v;
  ++count_;
  return sum_ / static_cast<double>(std::min(count_, ring_.size()));
}

void CausalSmoother::clear() {
  std::fill(ring_.begin(), ring_.end(), 0.0);
  count_ = 0;
  sum_ = 0;
}

ModalityScorer::ModalityScorer(std::size_t n_units, const DecoderConfig& cfg) {
  cfg.validate();
  if (n_units == 0) throw std::invalid_argument("ModalityScorer: no units");
  smoothers_.assign(n_units, CausalSmoother(cfg.w_smooth));
  maxima_.assign(n_units, WindowMax(cfg.w_scoring));
}

double ModalityScorer::push(std::span<const double> similarities) {
  if (similarities.size() != smoothers_.size())
    throw std::invalid_argument("ModalityScorer: similarity count does not match units");
  double log_sum = 0;
  for (std::size_t i = 0; i < smoothers_.size(); ++i) {
    maxima_[i].push(smoothers_[i].push(similarities[i]));
    log_sum += std::log(maxima_[i].max());
  }
  return std::exp(log_sum / static_cast<double>(smoothers_.size()));
}

void ModalityScorer::clear() {
  for (auto& s : smoothers_) s.clear();
  for (auto& m : maxima_) m.clear();
}

std::size_t scored_units(std::size_t n_rows, const DecoderConfig& cfg) {
  const std::size_t n = cfg.include_last_unit ? n_rows : (n_rows == 0 ? 0 : n_rows - 1);
  if (n == 0)
    throw std::invalid_argument("enrollment sequence of " + std::to_string(n_rows) +
                                " rows is too short to score");
  return n;
}

void write_score_csv_header(std::ostream& os) {
  os << "frame_index,score_A,score_T,score_M,score_fused\n";
}

void write_score_csv(std::ostream& os, std::span<const ScoreFrame> frames) {
  char buf[32];
  auto field = [&](const std::optional<double>& v) {
    if (v) {
      std::snprintf(buf, sizeof buf, "%.6f", *v);
      os << buf;
    }
  };
  for (const auto& f : frames) {
    os << f.frame_index << ',';
    field(f.score_audio);
    os << ',';
    field(f.score_text);
    os << ',';
    field(f.score_mixed);
    os << ',';
    field(f.fused);
    os << '\n';
  }
}

StreamingDecoder::StreamingDecoder(const EnrollmentProfile& profile, const AudioEncoder<float>& encoder,
                                   const DecoderConfig& cfg, const FusionWeights& fusion)
    : encoder_(&encoder), cfg_(cfg), fusion_(fusion), encoder_state_(encoder) {
  cfg_.validate();
  fusion_.validate();
  profile.validate();
  if (!encoder.layers.empty() && encoder.out_w.rows() != profile.dim())
    throw std::invalid_argument("decoder: profile dim does not match encoder output");
  for (const auto* e : {&profile.audio, &profile.text, &profile.mixed}) {
    if (!e->has_value()) continue;
    const std::size_t n = scored_units((*e)->n_frames(), cfg_);
    Matrix rows(n, (*e)->dim());
    for (std::size_t i = 0; i < n; ++i) {
      auto v = l2_normalize((*e)->values.row(i));
      std::copy(v.begin(), v.end(), rows.row(i).begin());
    }
    branches_.push_back({(*e)->modality, std::move(rows), ModalityScorer(n, cfg_)});
  }
}

std::vector<ScoreFrame> StreamingDecoder::process_chunk(const FeatureSequence& chunk) {
  std::vector<ScoreFrame> out;
  out.reserve(chunk.rows());
  for (std::size_t t = 0; t < chunk.rows(); ++t) {
    const Vector e = dfsmn_step(chunk.row(t), encoder_state_, *encoder_);
    out.push_back(push_embedding(e));
  }
  return out;
}

ScoreFrame StreamingDecoder::push_embedding(std::span<const float> embedding) {
  ScoreFrame f;
  f.frame_index = frame_;
  for (auto& b : branches_) {
    if (embedding.size() != b.rows.cols())
      throw std::invalid_argument("decoder: embedding dim mismatch");
    column_.resize(b.rows.rows());
    for (std::size_t i = 0; i < b.rows.rows(); ++i)
      column_[i] = similarity_row(b.rows.row(i), embedding, cfg_.sim_floor);
    const double s = b.scorer.push(column_);
    switch (b.modality) {
      case Modality::kAudio: f.score_audio = s; break;
      case Modality::kText: f.score_text = s; break;
      default: f.score_mixed = s; break;
    }
  }
  f.fused = fuse(f.score_audio, f.score_text, f.score_mixed, fusion_);
  f.warm = frame_ >= static_cast<std::size_t>(cfg_.warmup());
  ++frame_;
  return f;
}

void StreamingDecoder::reset() {
  encoder_state_.reset();
  for (auto& b : branches_) b.scorer.clear();
  frame_ = 0;
}

double trial_score(std::span<const ScoreFrame> frames) {
  if (frames.empty()) throw std::invalid_argument("trial_score: no frames");
  double best = -1;
  bool any_warm = false;
  for (const auto& f : frames) {
    if (!f.warm) continue;
    any_warm = true;
    best = std::max(best, f.fused);
  }
  if (!any_warm)
    for (const auto& f : frames) best = std::max(best, f.fused);
  return best;
}

MatrixD similarity_matrix(const EmbeddingSequence& enroll, const Matrix& stream_embeddings,
                          double sim_floor) {
  if (enroll.dim() != stream_embeddings.cols())
    throw std::invalid_argument("similarity_matrix: dim mismatch");
  MatrixD out(enroll.n_frames(), stream_embeddings.rows());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      out(i, j) = similarity_row(enroll.values.row(i), stream_embeddings.row(j), sim_floor);
  return out;
}

void write_similarity_csv(std::ostream& os, const MatrixD& sims) {
  char buf[32];
  for (std::size_t i = 0; i < sims.rows(); ++i) {
    for (std::size_t j = 0; j < sims.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", sims(i, j));
      if (j) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace kws
