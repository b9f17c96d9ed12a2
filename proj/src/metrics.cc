// src/metrics.cc
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

#include "streamkws/metrics.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace kws {

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kHard: return "hard";
    case Difficulty::kExcluded: return "excluded";
    default: return "n/a";
  }
}

std::vector<Difficulty> split_difficulty(const std::string& target,
                                         const std::vector<std::string>& negatives,
                                         double threshold) {
  std::vector<Difficulty> out;
  out.reserve(negatives.size());
  for (const auto& neg : negatives) {
    const std::size_t d = levenshtein(target, neg);
    if (d == 0) {
      std::clog << "warning: negative \"" << neg << "\" equals the target; excluded\n";
      out.push_back(Difficulty::kExcluded);
      continue;
    }
    const double norm = static_cast<double>(d) / static_cast<double>(std::max(target.size(), neg.size()));
    out.push_back(norm < threshold ? Difficulty::kHard : Difficulty::kEasy);
  }
  return out;
}

namespace {

void check_classes(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores/labels length mismatch");
  const auto pos = std::count(labels.begin(), labels.end(), true);
  if (pos == 0 || pos == static_cast<long>(labels.size()))
    throw std::invalid_argument("need at least one positive and one negative trial");
  for (double s : scores)
    if (!std::isfinite(s)) throw std::invalid_argument("non-finite score");
}

}  // namespace

RocCurve roc(std::span<const double> scores, const std::vector<bool>& labels) {
  check_classes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;

  RocCurve c;
  const double inf = std::numeric_limits<double>::infinity();
  c.points.push_back({-inf, 1.0, 0.0});
  // Sweeping upward: at threshold s, everything strictly below s is rejected.
  std::size_t rejected_pos = 0, rejected_neg = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    c.points.push_back({s, (n_neg - rejected_neg) / n_neg, rejected_pos / n_pos});
    while (k < order.size() && scores[order[k]] == s) {
      if (labels[order[k]]) ++rejected_pos;
      else ++rejected_neg;
      ++k;
    }
  }
  c.points.push_back({inf, 0.0, 1.0});
  return c;
}

double eer(const RocCurve& curve) {
  const auto& p = curve.points;
  if (p.size() < 2) throw std::invalid_argument("eer: curve needs at least two points");
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const double d0 = p[i].far - p[i].frr, d1 = p[i + 1].far - p[i + 1].frr;
    if (d0 == 0) return p[i].far;
    if (d0 > 0 && d1 <= 0) {
      const double t = d0 / (d0 - d1);
      return p[i].far + t * (p[i + 1].far - p[i].far);
    }
  }
  throw std::invalid_argument("eer: FAR and FRR never cross");
}

double auc(std::span<const double> scores, const std::vector<bool>& labels) {
  check_classes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k;
    while (e < order.size() && scores[order[e]] == scores[order[k]]) ++e;
    const double avg_rank = (static_cast<double>(k + 1) + static_cast<double>(e)) / 2.0;
    for (std::size_t m = k; m < e; ++m)
      if (labels[order[m]]) rank_sum += avg_rank;
    k = e;
  }
  const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

double auc_trapezoid(const RocCurve& curve) {
  double area = 0;
  const auto& p = curve.points;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const double tpr0 = 1 - p[i].frr, tpr1 = 1 - p[i + 1].frr;
    area += (p[i].far - p[i + 1].far) * (tpr0 + tpr1) / 2.0;
  }
  return area;
}

std::vector<Trial> parse_trials(std::istream& is) {
  std::vector<Trial> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
    auto fail = [&](const std::string& why) {
      throw std::runtime_error("trial line " + std::to_string(line_no) + ": " + why);
    };
    if (cols.size() != 5 && cols.size() != 6) fail("expected 5 or 6 tab-separated columns");
    Trial t;
    t.line = line_no;
    t.keyword_id = cols[0];
    t.source = cols[1];
    if (t.keyword_id.empty() || t.source.empty()) fail("empty keyword or source");
    if (cols[2] == "pos") t.positive = true;
    else if (cols[2] != "neg") fail("label must be pos or neg");
    try {
      std::size_t used = 0;
      t.pad_before = std::stoi(cols[3], &used);
      if (used != cols[3].size()) fail("bad pad_before");
      t.pad_after = std::stoi(cols[4], &used);
      if (used != cols[4].size()) fail("bad pad_after");
    } catch (const std::logic_error&) {
      fail("bad padding value");
    }
    if (t.pad_before < 0 || t.pad_after < 0) fail("negative padding");
    if (cols.size() == 6) {
      if (cols[5] == "easy") t.difficulty = Difficulty::kEasy;
      else if (cols[5] == "hard") t.difficulty = Difficulty::kHard;
      else if (cols[5] != "n/a" && !cols[5].empty()) fail("difficulty must be easy, hard or n/a");
    }
    out.push_back(std::move(t));
  }
  if (out.empty()) throw std::runtime_error("trial file has no trials");
  return out;
}

std::vector<Trial> read_trial_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open trial file " + path);
  return parse_trials(is);
}

void write_trials(std::ostream& os, std::span<const Trial> trials) {
  for (const auto& t : trials)
    os << t.keyword_id << '\t' << t.source << '\t' << (t.positive ? "pos" : "neg") << '\t'
       << t.pad_before << '\t' << t.pad_after << '\t' << difficulty_name(t.difficulty) << '\n';
}

StreamResolver file_stream_resolver(const std::string& base_dir) {
  return [base_dir](const std::string& source) {
    std::filesystem::path p(source);
    if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
    if (!std::filesystem::exists(p)) throw std::runtime_error("missing stream file " + p.string());
    return load_features(p.string());
  };
}

std::map<std::string, SubsetMetrics> subset_metrics(std::span<const Trial> trials,
                                                    std::span<const std::optional<double>> scores) {
  if (trials.size() != scores.size()) throw std::invalid_argument("subset_metrics: length mismatch");
  std::map<std::string, SubsetMetrics> out;
  for (const char* name : {"all", "easy", "hard"}) {
    const std::string subset(name);
    std::vector<double> s;
    std::vector<bool> l;
    for (std::size_t i = 0; i < trials.size(); ++i) {
      if (!scores[i]) continue;
      const auto& t = trials[i];
      if (t.difficulty == Difficulty::kExcluded) continue;
      bool in = subset == "all" || t.positive;
      if (subset == "easy" && !t.positive) in = t.difficulty == Difficulty::kEasy;
      if (subset == "hard" && !t.positive) in = t.difficulty == Difficulty::kHard;
      if (!in) continue;
      s.push_back(*scores[i]);
      l.push_back(t.positive);
    }
    SubsetMetrics m;
    m.n_trials = s.size();
    m.n_positive = static_cast<std::size_t>(std::count(l.begin(), l.end(), true));
    m.n_negative = m.n_trials - m.n_positive;
    if (m.n_positive > 0 && m.n_negative > 0) {
      m.eer = eer(roc(s, l));
      m.auc = auc(s, l);
    }
    out[subset] = m;
  }
  return out;
}

namespace {

double best_warm(std::span<const ScoreFrame> frames, const std::optional<double> ScoreFrame::*field) {
  double best = -1;
  bool any = false;
  for (int pass = 0; pass < 2 && !any; ++pass)
    for (const auto& f : frames) {
      if (pass == 0 && !f.warm) continue;
      best = std::max(best, *(f.*field));
      any = true;
    }
  return best;
}

}  // namespace

EvalReport run_trials(std::span<const Trial> trials,
                      const std::map<std::string, EnrollmentProfile>& profiles,
                      const AudioEncoder<float>& encoder, const StreamResolver& resolve,
                      const DecoderConfig& cfg, const FusionWeights& fusion, const EvalOptions& opts) {
  if (trials.empty()) throw std::invalid_argument("run_trials: empty trial list");
  cfg.validate();
  fusion.validate();

  // Resolve every distinct source once, in trial order.
  std::map<std::string, std::size_t> source_index;
  std::vector<FeatureSequence> streams;
  for (const auto& t : trials) {
    if (!profiles.count(t.keyword_id))
      throw std::runtime_error("trial line " + std::to_string(t.line) + ": no profile for keyword " +
                               t.keyword_id);
    if (source_index.count(t.source)) continue;
    try {
      streams.push_back(resolve(t.source));
    } catch (const std::exception& e) {
      throw std::runtime_error("trial line " + std::to_string(t.line) + ": " + e.what());
    }
    if (streams.back().rows() == 0)
      throw std::runtime_error("trial line " + std::to_string(t.line) + ": empty stream");
    source_index[t.source] = streams.size() - 1;
  }

  // Padding never draws from the trial's own stream or from any positive
  // stream of the same keyword.
  std::map<std::string, std::vector<bool>> keyword_positive;
  for (const auto& t : trials) {
    auto& mask = keyword_positive[t.keyword_id];
    mask.resize(streams.size(), false);
    if (t.positive) mask[source_index.at(t.source)] = true;
  }

  auto build_stream = [&](std::size_t k) {
    const auto& t = trials[k];
    const std::size_t own = source_index.at(t.source);
    std::mt19937_64 rng(opts.seed * 0x9E3779B97F4A7C15ULL + k);
    const FeatureSequence& core = streams[own];
    std::vector<std::size_t> pool;
    const auto& mask = keyword_positive.at(t.keyword_id);
    for (std::size_t i = 0; i < streams.size(); ++i)
      if (i != own && !mask[i]) pool.push_back(i);
    if (pool.empty() && (t.pad_before > 0 || t.pad_after > 0))
      throw std::runtime_error("no streams available for padding");
    FeatureSequence out(0, core.cols());
    auto pad = [&](int frames) {
      int remaining = frames;
      while (remaining > 0) {
        const std::size_t pick = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        const auto& src = streams[pick];
        if (src.cols() != core.cols()) throw std::runtime_error("streams have different feature dims");
        const std::size_t len = std::min<std::size_t>(remaining, src.rows());
        const std::size_t start = std::uniform_int_distribution<std::size_t>(0, src.rows() - len)(rng);
        for (std::size_t r = 0; r < len; ++r) out.append_row(src.row(start + r));
        remaining -= static_cast<int>(len);
      }
    };
    pad(t.pad_before);
    for (std::size_t r = 0; r < core.rows(); ++r) out.append_row(core.row(r));
    pad(t.pad_after);
    return out;
  };

  EvalReport report;
  report.scores.resize(trials.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t k = next++; k < trials.size(); k = next++) {
      try {
        const FeatureSequence stream = build_stream(k);
        StreamingDecoder dec(profiles.at(trials[k].keyword_id), encoder, cfg, fusion);
        const auto frames = dec.process_chunk(stream);
        TrialScores ts;
        ts.fused = trial_score(frames);
        if (frames.front().score_audio) ts.audio = best_warm(frames, &ScoreFrame::score_audio);
        if (frames.front().score_text) ts.text = best_warm(frames, &ScoreFrame::score_text);
        if (frames.front().score_mixed) ts.mixed = best_warm(frames, &ScoreFrame::score_mixed);
        report.scores[k] = ts;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure)
          failure = std::make_exception_ptr(
              std::runtime_error("trial line " + std::to_string(trials[k].line) + ": " + e.what()));
        next = trials.size();
      }
    }
  };
  unsigned n_threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, trials.size()));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  auto collect = [&](auto getter) {
    std::vector<std::optional<double>> s(trials.size());
    for (std::size_t k = 0; k < trials.size(); ++k) s[k] = getter(report.scores[k]);
    return s;
  };
  report.metrics["fused"] = subset_metrics(trials, collect([](const TrialScores& t) {
    return std::optional<double>(t.fused);
  }));
  report.metrics["audio"] = subset_metrics(trials, collect([](const TrialScores& t) { return t.audio; }));
  report.metrics["text"] = subset_metrics(trials, collect([](const TrialScores& t) { return t.text; }));
  report.metrics["mixed"] = subset_metrics(trials, collect([](const TrialScores& t) { return t.mixed; }));
  return report;
}

std::string report_json(const EvalReport& report, const DecoderConfig& cfg,
                        const FusionWeights& fusion, const EvalOptions& opts) {
  nlohmann::ordered_json j;
  auto subsets = [](const std::map<std::string, SubsetMetrics>& m) {
    nlohmann::ordered_json o;
    for (const char* name : {"easy", "hard", "all"}) {
      const auto& s = m.at(name);
      nlohmann::ordered_json e;
      e["eer"] = s.eer ? nlohmann::ordered_json(*s.eer) : nlohmann::ordered_json(nullptr);
      e["auc"] = s.auc ? nlohmann::ordered_json(*s.auc) : nlohmann::ordered_json(nullptr);
      e["n_trials"] = s.n_trials;
      e["n_positive"] = s.n_positive;
      e["n_negative"] = s.n_negative;
      o[name] = e;
    }
    return o;
  };
  const auto& fused = report.metrics.at("fused");
  for (const char* name : {"easy", "hard", "all"}) j[name] = subsets(fused)[name];
  nlohmann::ordered_json by_mod;
  for (const char* kind : {"audio", "text", "mixed"})
    if (report.metrics.at(kind).at("all").n_trials > 0) by_mod[kind] = subsets(report.metrics.at(kind));
  j["by_modality"] = by_mod;
  j["config"] = {{"w_smooth", cfg.w_smooth},
                 {"w_scoring", cfg.w_scoring},
                 {"sim_floor", cfg.sim_floor},
                 {"include_last_unit", cfg.include_last_unit},
                 {"warmup_frames", cfg.warmup()},
                 {"fusion", {fusion.audio, fusion.text, fusion.mixed}},
                 {"seed", opts.seed}};
  return j.dump(2) + "\n";
}

}  // namespace kws
