// include/streamkws/runtime.h
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

// Enrollment profiles and the streaming decoder.
//
// For every enrollment unit i (a row of a cached embedding sequence) and
// stream frame j the decoder keeps
//   p_ij   = clamp(cos(enroll_i, stream_j), sim_floor, 1)
//   p'_ij  = mean of p_ik over the trailing w_smooth frames
// and scores frame j as the geometric mean over units of
//   max of p'_ik over the trailing w_scoring frames.
// Units run over the first n-1 rows of the enrollment sequence unless
// include_last_unit is set. Per-modality scores are fused with weights
// renormalized over the modalities present.

#ifndef STREAMKWS_RUNTIME_H_
#define STREAMKWS_RUNTIME_H_

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamkws/features.h"
#include "streamkws/model.h"
#include "streamkws/weights.h"

namespace kws {

struct DecoderConfig {
  int w_smooth = 10;
  int w_scoring = 60;
  double sim_floor = 1e-6;
  bool include_last_unit = false;
  // Frames before this index are emitted but flagged as not warm;
  // negative means "use w_smooth".
  int warmup_frames = -1;

  int warmup() const { return warmup_frames < 0 ? w_smooth : warmup_frames; }
  void validate() const;
};

struct FusionWeights {
  double audio = 0.5;
  double text = 0.25;
  double mixed = 0.25;

  void validate() const;
};

struct EnrollmentProfile {
  std::string keyword_id;
  std::optional<EmbeddingSequence> audio;
  std::optional<EmbeddingSequence> text;
  std::optional<EmbeddingSequence> mixed;
  std::vector<int> tokens;  // text enrollment, if any

  std::size_t dim() const;
  // Throws std::invalid_argument when the modality invariants do not hold.
  void validate() const;
};

// Builds the cached embeddings. E_M is produced only when both inputs are
// given; every row is L2-normalized.
EnrollmentProfile make_profile(const std::string& keyword_id,
                               const std::optional<FeatureSequence>& enroll_audio,
                               const std::optional<std::vector<int>>& enroll_tokens,
                               const ModelParams<float>& model);

// SNP1: "SNP1" | u32 json_len | json metadata | SNW1 payload (E_A/E_T/E_M).
std::vector<uint8_t> save_profile(const EnrollmentProfile& profile,
                                  const DecoderConfig* config_echo = nullptr);
EnrollmentProfile load_profile(std::span<const uint8_t> bytes);
void save_profile_file(const std::string& path, const EnrollmentProfile& profile,
                       const DecoderConfig* config_echo = nullptr);
EnrollmentProfile load_profile_file(const std::string& path);

// p_ij for one (unit, frame) pair.
double similarity_row(std::span<const float> enroll_row, std::span<const float> stream_frame,
                      double sim_floor = 1e-6);

// Direct (non-incremental) smoothing of the last element of a row prefix.
double smooth(std::span<const double> row_prefix, int w_smooth);

// Direct score at the last frame of a smoothed prefix; smoothed is
// n_units x j (only units actually scored).
double score(const MatrixD& smoothed, int w_scoring);

double fuse(std::optional<double> audio, std::optional<double> text, std::optional<double> mixed,
            const FusionWeights& w);

// Trailing-window maximum over a monotonic deque; O(1) amortized push.
class WindowMax {
 public:
  explicit WindowMax(std::size_t window);
  void push(double v);
  double max() const;
  bool empty() const { return deque_.empty(); }
  std::size_t candidates() const { return deque_.size(); }
  void clear();

 private:
  struct Entry {
    uint64_t index;
    double value;
  };
  std::deque<Entry> deque_;
  uint64_t counter_ = 0;
  std::size_t window_;
};

// Trailing moving average with a running sum.
class CausalSmoother {
 public:
  explicit CausalSmoother(std::size_t window);
  double push(double v);
  void clear();

 private:
  std::vector<double> ring_;
  std::size_t count_ = 0;
  double sum_ = 0;
};

// Incremental smoothing + windowed-max + geometric mean for one modality.
class ModalityScorer {
 public:
  ModalityScorer(std::size_t n_units, const DecoderConfig& cfg);

  std::size_t units() const { return smoothers_.size(); }
  // similarities: p_ij for the scored units at the next frame.
  double push(std::span<const double> similarities);
  void clear();

 private:
  std::vector<CausalSmoother> smoothers_;
  std::vector<WindowMax> maxima_;
};

// Scored units for an enrollment sequence of n rows; throws when n is too
// small for the configured range.
std::size_t scored_units(std::size_t n_rows, const DecoderConfig& cfg);

struct ScoreFrame {
  std::size_t frame_index = 0;
  std::optional<double> score_audio, score_text, score_mixed;
  double fused = 0;
  bool warm = false;

  bool operator==(const ScoreFrame&) const = default;
};

// "frame_index,score_A,score_T,score_M,score_fused" with empty fields for
// absent modalities.
void write_score_csv_header(std::ostream& os);
void write_score_csv(std::ostream& os, std::span<const ScoreFrame> frames);

// One decoder per (stream, profile). The encoder and profile must outlive it.
class StreamingDecoder {
 public:
  StreamingDecoder(const EnrollmentProfile& profile, const AudioEncoder<float>& encoder,
                   const DecoderConfig& cfg = {}, const FusionWeights& fusion = {});

  // Runs the encoder frame by frame over the chunk and decodes each frame.
  std::vector<ScoreFrame> process_chunk(const FeatureSequence& chunk);
  // Decodes an already-computed stream embedding.
  ScoreFrame push_embedding(std::span<const float> embedding);
  void reset();

  std::size_t frames_seen() const { return frame_; }
  const DecoderConfig& config() const { return cfg_; }

 private:
  struct Branch {
    Modality modality;
    Matrix rows;  // scored units only, unit-norm
    ModalityScorer scorer;
  };

  const AudioEncoder<float>* encoder_;
  DecoderConfig cfg_;
  FusionWeights fusion_;
  DfsmnStreamState encoder_state_;
  std::vector<Branch> branches_;
  std::vector<double> column_;
  std::size_t frame_ = 0;
};

// Max fused score over warm frames (all frames if none is warm).
double trial_score(std::span<const ScoreFrame> frames);

// Raw p_ij matrix: rows = enrollment units (all rows), cols = stream frames.
MatrixD similarity_matrix(const EmbeddingSequence& enroll, const Matrix& stream_embeddings,
                          double sim_floor = 1e-6);
void write_similarity_csv(std::ostream& os, const MatrixD& sims);

}  // namespace kws

#endif  // STREAMKWS_RUNTIME_H_
