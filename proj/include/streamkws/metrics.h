// include/streamkws/metrics.h
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

// Trial lists, difficulty tagging and detection metrics.

#ifndef STREAMKWS_METRICS_H_
#define STREAMKWS_METRICS_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamkws/runtime.h"

namespace kws {

std::size_t levenshtein(const std::string& a, const std::string& b);

enum class Difficulty { kNone, kEasy, kHard, kExcluded };
const char* difficulty_name(Difficulty d);

// hard iff levenshtein / max(len) < threshold. A negative equal to the
// target is tagged kExcluded and a warning goes to std::clog.
std::vector<Difficulty> split_difficulty(const std::string& target,
                                         const std::vector<std::string>& negatives,
                                         double threshold = 0.5);

struct RocPoint {
  double threshold;  // accept iff score >= threshold
  double far;
  double frr;
};

struct RocCurve {
  // Ascending threshold, starting at -inf and ending at +inf.
  std::vector<RocPoint> points;
};

// labels: true = positive. Throws unless both classes are present.
RocCurve roc(std::span<const double> scores, const std::vector<bool>& labels);
double eer(const RocCurve& curve);
// Rank-sum with ties counted one half.
double auc(std::span<const double> scores, const std::vector<bool>& labels);
// Trapezoidal area under (FAR, 1 - FRR); agrees with auc().
double auc_trapezoid(const RocCurve& curve);

struct Trial {
  std::string keyword_id;
  std::string source;  // feature/wav path or SYNTH:<seed>[:tokens]
  bool positive = false;
  int pad_before = 0;
  int pad_after = 0;
  Difficulty difficulty = Difficulty::kNone;
  std::size_t line = 0;
};

// TSV: keyword_id, source, pos|neg, pad_before, pad_after [, easy|hard|n/a].
// Blank lines and lines starting with '#' are skipped.
std::vector<Trial> parse_trials(std::istream& is);
std::vector<Trial> read_trial_file(const std::string& path);
void write_trials(std::ostream& os, std::span<const Trial> trials);

// Maps a trial source to its (unpadded) feature stream.
using StreamResolver = std::function<FeatureSequence(const std::string& source)>;
// Reads .wav (fbank) or feature CSV; relative paths resolve against base_dir.
StreamResolver file_stream_resolver(const std::string& base_dir = "");

struct EvalOptions {
  uint64_t seed = 0;
  unsigned threads = 0;  // 0 = hardware concurrency
};

struct SubsetMetrics {
  std::optional<double> eer, auc;  // absent unless both classes are present
  std::size_t n_trials = 0, n_positive = 0, n_negative = 0;
};

struct TrialScores {
  double fused = 0;
  std::optional<double> audio, text, mixed;
};

struct EvalReport {
  // score kind ("fused", "audio", "text", "mixed") -> subset ("easy",
  // "hard", "all") -> metrics
  std::map<std::string, std::map<std::string, SubsetMetrics>> metrics;
  std::vector<TrialScores> scores;  // parallel to the trial list
};

// Subsets: "all"; "easy" and "hard" hold every positive plus the negatives
// carrying that tag.
std::map<std::string, SubsetMetrics> subset_metrics(std::span<const Trial> trials,
                                                    std::span<const std::optional<double>> scores);

// Decodes every trial with its profile. Padding frames are random
// segments of other trial streams (excluding positives of the same
// keyword) drawn from a per-trial seeded generator.
EvalReport run_trials(std::span<const Trial> trials,
                      const std::map<std::string, EnrollmentProfile>& profiles,
                      const AudioEncoder<float>& encoder, const StreamResolver& resolve,
                      const DecoderConfig& cfg = {}, const FusionWeights& fusion = {},
                      const EvalOptions& opts = {});

// Report as JSON text with the decoder configuration echoed.
std::string report_json(const EvalReport& report, const DecoderConfig& cfg,
                        const FusionWeights& fusion, const EvalOptions& opts);

}  // namespace kws

#endif  // STREAMKWS_METRICS_H_
