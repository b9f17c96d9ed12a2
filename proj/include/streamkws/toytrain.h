// include/streamkws/toytrain.h
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

// Synthetic phoneme/speaker corpus and the two-phase trainer.

#ifndef STREAMKWS_TOYTRAIN_H_
#define STREAMKWS_TOYTRAIN_H_

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "streamkws/losses.h"
#include "streamkws/metrics.h"
#include "streamkws/model.h"
#include "streamkws/weights.h"

namespace kws {

struct SyntheticCorpusConfig {
  int n_phonemes = 12;
  int n_speakers = 6;
  int frames_per_phoneme = 4;
  int feature_dim = 20;
  int utterances = 2000;
  double noise_std = 0.1;
  double speaker_offset_std = 0.5;
  uint64_t seed = 1;

  void validate() const;
};

// Fixed per-phoneme base vectors and per-speaker offsets.
struct SyntheticWorld {
  SyntheticCorpusConfig cfg;
  MatrixD phoneme_base;    // n_phonemes x feature_dim
  MatrixD speaker_offset;  // n_speakers x feature_dim
};

SyntheticWorld make_world(const SyntheticCorpusConfig& cfg);

struct SyntheticUtterance {
  Matrix features;
  std::vector<int> labels;     // per frame
  std::vector<int> tokens;     // per phoneme
  std::vector<int> alignment;  // token index per frame
  int speaker = 0;
};

// frames_per_phoneme <= 0 uses the world default.
SyntheticUtterance synth_utterance(const SyntheticWorld& world, std::span<const int> tokens,
                                   int speaker, std::mt19937_64& rng, int frames_per_phoneme = 0);

std::vector<SyntheticUtterance> gen_corpus(const SyntheticCorpusConfig& cfg);

// Held-out = last fraction of utterances by index.
std::size_t heldout_begin(std::size_t n_utterances, double fraction = 0.1);

// "SYNTH:<seed>[:t1,t2,...[:frames_per_phoneme]]"; missing tokens are drawn
// from the seed, as is the speaker.
std::string synth_source(uint64_t seed, std::span<const int> tokens = {}, int frames_per_phoneme = 0);
bool is_synth_source(const std::string& source);
FeatureSequence synth_stream(const SyntheticWorld& world, const std::string& source);

// Toy model shaped for the corpus.
ModelConfig toy_model_config(const SyntheticCorpusConfig& corpus);

enum class OptimizerKind { kSgd, kAdam };

// SGD step used for phase 2 of the toy recipe.
inline constexpr double kToyPhase2Lr = 0.1;

struct TrainConfig {
  double lr = 1e-3;
  double anneal_factor = 0.3;
  int epochs = 50;
  int batch_size = 100;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  // Relative held-out improvement below this counts as a plateau.
  double plateau_tolerance = 1e-3;
  bool freeze_encoder = false;  // phase 2 only
  // Learning-rate multiplier for the speaker head (phase 1).
  double speaker_lr_scale = 1.0;
  uint64_t seed = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double l_ph = 0;
  double l_second = 0;  // L_vp (phase 1) or L_clat (phase 2)
  double l_third = 0;   // L_clam (phase 2)
  double total = 0;
  double heldout = 0;  // L_ph in phase 1, the full objective in phase 2
  double lr = 0;
};

struct TrainTrace {
  int phase = 1;
  std::vector<EpochRecord> epochs;

  void write_csv(std::ostream& os) const;
};

struct TrainResult {
  WeightContainer weights;
  TrainTrace trace;
};

struct TrainLosses {
  LossWeights weights;
  AamParams aam;
  ContrastiveParams contrastive;
};

// Encoder, phoneme classifier and speaker head on the audio objective.
// Non-finite loss throws with the epoch index.
TrainResult train_phase1(std::span<const SyntheticUtterance> corpus, const ModelConfig& model_cfg,
                         const TrainConfig& train_cfg, const TrainLosses& losses);

// Text encoder, cross attention and (unless frozen) the encoder on the
// mixed objective, starting from phase-1 weights.
TrainResult train_phase2(std::span<const SyntheticUtterance> corpus, const WeightContainer& phase1,
                         const TrainConfig& train_cfg, const TrainLosses& losses);

// Frame accuracy of argmax cosine against the phoneme classifier rows.
double phoneme_accuracy(std::span<const SyntheticUtterance> utts, const ModelParams<float>& model);

struct ProbeConfig {
  int epochs = 60;
  double lr = 1e-2;
  int attention_dim = 16;
  bool normalize = false;  // probe unit-norm frames, as the decoder sees them
  uint64_t seed = 7;
};

// Fresh attentive-pool + linear speaker classifier trained on frozen
// encoder outputs of `train`, scored on `test`.
double speaker_probe_accuracy(std::span<const SyntheticUtterance> train,
                              std::span<const SyntheticUtterance> test,
                              const AudioEncoder<float>& encoder, int n_speakers,
                              const ProbeConfig& cfg = {});

struct AlignmentStats {
  double matched = 0;     // mean cos(E_T[align[t]], E_A[t])
  double mismatched = 0;  // mean cos(E_T[i], E_A[t]) for frames of another phoneme
};

AlignmentStats alignment_similarity(std::span<const SyntheticUtterance> utts,
                                    const ModelParams<float>& model);

// Keyword trial set over the synthetic world. Each keyword is enrolled from
// one synthetic rendition plus its token text; positives are renditions by
// other random speakers; negatives are random token strings (tagged easy or
// hard by edit distance against the keyword) and near-miss variants with one
// substituted phoneme.
struct TrialSetConfig {
  int keywords = 30;
  int positives_per_keyword = 6;
  int random_negatives_per_keyword = 6;
  int near_miss_per_keyword = 2;
  int min_phonemes = 3;
  int max_phonemes = 6;
  int pad_min = 0;
  int pad_max = 40;
  // Stretch each rendition to a random per-phoneme duration in this range
  // (0 = world default).
  int min_frames_per_phoneme = 8;
  int max_frames_per_phoneme = 12;
  // Positives replay the enrollment rendition instead of new speakers.
  bool positives_from_enrollment = false;
  double hard_threshold = 0.5;
  uint64_t seed = 11;
};

struct KeywordEnrollment {
  std::string keyword_id;
  std::vector<int> tokens;
  std::string audio_source;  // SYNTH source of the enrollment rendition
};

struct TrialSet {
  std::vector<KeywordEnrollment> keywords;
  std::vector<Trial> trials;
};

TrialSet make_trial_set(const SyntheticWorld& world, const TrialSetConfig& cfg);

// Token strings as characters, used for edit distances.
std::string token_string(std::span<const int> tokens);

}  // namespace kws

#endif  // STREAMKWS_TOYTRAIN_H_
