// tests/metrics_test.cc
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

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "metrics_oracle.h"
#include "streamkws/metrics.h"

using namespace kws;
using namespace kws::testing;

namespace {

// Minimum edits found by breadth-first search over all strings reachable
// by single edits drawn from the union alphabet. Tiny inputs only.
std::size_t bfs_edit_distance(const std::string& a, const std::string& b) {
  std::set<char> alpha(a.begin(), a.end());
  alpha.insert(b.begin(), b.end());
  std::set<std::string> seen{a};
  std::vector<std::string> frontier{a};
  for (std::size_t d = 0;; ++d) {
    for (const auto& s : frontier)
      if (s == b) return d;
    std::vector<std::string> next;
    auto visit = [&](std::string s) {
      if (s.size() <= a.size() + b.size() && seen.insert(s).second) next.push_back(std::move(s));
    };
    for (const auto& s : frontier) {
      for (std::size_t i = 0; i < s.size(); ++i) visit(s.substr(0, i) + s.substr(i + 1));
      for (std::size_t i = 0; i <= s.size(); ++i)
        for (char c : alpha) visit(s.substr(0, i) + c + s.substr(i));
      for (std::size_t i = 0; i < s.size(); ++i)
        for (char c : alpha) {
          std::string t = s;
          t[i] = c;
          visit(t);
        }
    }
    frontier = std::move(next);
  }
}

std::string random_string(std::mt19937_64& rng, std::size_t max_len, const std::string& alphabet) {
  std::string s(rng() % (max_len + 1), ' ');
  for (auto& c : s) c = alphabet[rng() % alphabet.size()];
  return s;
}

}  // namespace

TEST_CASE("levenshtein") {
  CHECK(levenshtein("abc", "abc") == 0);
  CHECK(levenshtein("", "abc") == 3);
  CHECK(levenshtein("kitten", "sitting") == 3);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 60; ++trial) {
    const auto a = random_string(rng, 4, "abc"), b = random_string(rng, 4, "abc");
    CHECK(levenshtein(a, b) == bfs_edit_distance(a, b));
  }
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_string(rng, 8, "abcd"), b = random_string(rng, 8, "abcd"),
               c = random_string(rng, 8, "abcd");
    CHECK(levenshtein(a, b) == levenshtein(b, a));
    CHECK(levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c));
  }
}

TEST_CASE("difficulty split") {
  auto tags = split_difficulty("forest", {"forrest", "zanzibar", "forest"});
  REQUIRE(tags.size() == 3);
  CHECK(tags[0] == Difficulty::kHard);
  CHECK(tags[1] == Difficulty::kEasy);
  CHECK(tags[2] == Difficulty::kExcluded);
  CHECK(split_difficulty("forest", {"forrest"}, 0.1)[0] == Difficulty::kEasy);
}

TEST_CASE("roc corner cases") {
  std::vector<double> s{0.9, 0.9, 0.1, 0.1};
  std::vector<bool> l{true, true, false, false};
  auto c = roc(s, l);
  bool perfect_point = false;
  for (const auto& p : c.points) perfect_point = perfect_point || (p.far == 0 && p.frr == 0);
  CHECK(perfect_point);
  CHECK(eer(c) == 0.0);
  CHECK(auc(s, l) == 1.0);
  CHECK(auc_trapezoid(c) == 1.0);

  std::vector<double> same(6, 0.4);
  std::vector<bool> mix{true, false, true, false, false, true};
  auto flat = roc(same, mix);
  REQUIRE(flat.points.size() == 3);
  CHECK(flat.points[0].far == 1.0);
  CHECK(flat.points[1].far == 1.0);
  CHECK(flat.points[1].frr == 0.0);
  CHECK(flat.points[2].frr == 1.0);
  CHECK(eer(flat) == 0.5);
  CHECK(auc(same, mix) == 0.5);

  CHECK(flat.points.front().threshold == -std::numeric_limits<double>::infinity());
  CHECK(flat.points.back().threshold == std::numeric_limits<double>::infinity());

  std::vector<bool> one_class(4, true);
  CHECK_THROWS(roc(s, one_class));
  CHECK_THROWS(auc(s, one_class));
}

TEST_CASE("eer interpolation on a hand-built curve") {
  const double inf = std::numeric_limits<double>::infinity();
  RocCurve c{{{-inf, 1.0, 0.0}, {0.2, 0.3, 0.1}, {0.5, 0.1, 0.3}, {inf, 0.0, 1.0}}};
  CHECK(std::abs(eer(c) - 0.2) < 1e-12);
}

TEST_CASE("roc points match direct counting and the two AUC methods agree") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    auto [s, l] = random_scored_trials(rng, 20);
    const auto c = roc(s, l);
    for (std::size_t i = 1; i + 1 < c.points.size(); ++i) {
      const auto counted = count_rates(s, l, c.points[i].threshold);
      CHECK(c.points[i].far == counted.first);
      CHECK(c.points[i].frr == counted.second);
    }
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].far <= c.points[i - 1].far);
      CHECK(c.points[i].frr >= c.points[i - 1].frr);
    }
    const double a = auc(s, l);
    CHECK(std::abs(a - auc_trapezoid(c)) < 1e-9);
    CHECK(std::abs(a - pairwise_auc(s, l)) < 1e-9);
    const double e = eer(c);
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);

    std::vector<double> neg(s.size()), warped(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      neg[i] = -s[i];
      warped[i] = std::exp(3 * s[i]) + 2;
    }
    CHECK(std::abs(a + auc(neg, l) - 1.0) < 1e-9);
    CHECK(std::abs(auc(warped, l) - a) < 1e-9);
    CHECK(std::abs(eer(roc(warped, l)) - e) < 1e-9);
  }
}

TEST_CASE("trial file parsing") {
  std::istringstream ok(
      "# comment\n"
      "kw1\tstreams/a.csv\tpos\t10\t5\n"
      "\n"
      "kw1\tSYNTH:3:1,2\tneg\t0\t0\thard\n");
  auto trials = parse_trials(ok);
  REQUIRE(trials.size() == 2);
  CHECK(trials[0].positive);
  CHECK(trials[0].pad_before == 10);
  CHECK(trials[0].line == 2);
  CHECK(trials[1].difficulty == Difficulty::kHard);
  CHECK(trials[1].line == 4);

  std::ostringstream os;
  write_trials(os, trials);
  std::istringstream again(os.str());
  auto back = parse_trials(again);
  CHECK(back[1].source == "SYNTH:3:1,2");
  CHECK(back[0].difficulty == Difficulty::kNone);

  std::istringstream empty("# nothing\n");
  CHECK_THROWS(parse_trials(empty));
  std::istringstream bad_label("kw\tx\tmaybe\t0\t0\n");
  CHECK_THROWS_WITH(parse_trials(bad_label), doctest::Contains("line 1"));
  std::istringstream bad_pad("kw\tx\tpos\t-1\t0\n");
  CHECK_THROWS(parse_trials(bad_pad));
}

TEST_CASE("subset membership") {
  std::vector<Trial> t(4);
  t[0].positive = true;
  t[1].difficulty = Difficulty::kEasy;
  t[2].difficulty = Difficulty::kHard;
  t[3].difficulty = Difficulty::kNone;
  std::vector<std::optional<double>> s{0.9, 0.1, 0.95, 0.2};
  auto m = subset_metrics(t, s);
  CHECK(m["all"].n_trials == 4);
  CHECK(m["easy"].n_trials == 2);
  CHECK(m["hard"].n_trials == 2);
  CHECK(*m["easy"].eer == 0.0);
  CHECK(*m["hard"].auc == 0.0);
  std::vector<Trial> only_pos(1);
  only_pos[0].positive = true;
  std::vector<std::optional<double>> one{0.5};
  CHECK_FALSE(subset_metrics(only_pos, one)["all"].eer.has_value());
}

TEST_CASE("run_trials end to end on a random model") {
  const auto cfg = ModelConfig::toy_preset();
  auto model = init_params<float>(cfg, 31);
  std::mt19937_64 rng(3);
  std::normal_distribution<float> nd;
  std::map<std::string, FeatureSequence> store;
  for (int i = 0; i < 6; ++i) {
    FeatureSequence f(20 + i, cfg.input_dim);
    for (auto& v : f.data()) v = nd(rng);
    store["s" + std::to_string(i)] = f;
  }
  StreamResolver resolve = [&](const std::string& src) {
    auto it = store.find(src);
    if (it == store.end()) throw std::runtime_error("missing stream " + src);
    return it->second;
  };
  std::map<std::string, EnrollmentProfile> profiles;
  profiles["kw"] = make_profile("kw", store["s0"], std::vector<int>{1, 2, 3}, model);

  std::istringstream tsv(
      "kw\ts0\tpos\t15\t10\n"
      "kw\ts1\tneg\t15\t10\teasy\n"
      "kw\ts2\tneg\t0\t0\thard\n"
      "kw\ts3\tneg\t5\t5\teasy\n"
      "kw\ts0\tpos\t0\t30\n");
  const auto trials = parse_trials(tsv);
  DecoderConfig dc;
  dc.w_smooth = 3;
  dc.w_scoring = 30;
  EvalOptions opts;
  opts.seed = 9;
  opts.threads = 3;
  auto r1 = run_trials(trials, profiles, model.encoder, resolve, dc, {}, opts);
  opts.threads = 1;
  auto r2 = run_trials(trials, profiles, model.encoder, resolve, dc, {}, opts);
  CHECK(report_json(r1, dc, {}, opts) == report_json(r2, dc, {}, opts));
  CHECK(r1.metrics["fused"]["all"].n_trials == 5);
  CHECK(r1.metrics["fused"]["easy"].n_trials == 4);
  CHECK(r1.scores[0].audio.has_value());
  CHECK(r1.scores[0].mixed.has_value());

  opts.seed = 10;
  auto r3 = run_trials(trials, profiles, model.encoder, resolve, dc, {}, opts);
  CHECK(r3.scores[2].fused == r1.scores[2].fused);  // unpadded trial

  std::istringstream missing("kw\ts0\tpos\t0\t0\nkw\tnope\tneg\t0\t0\n");
  auto bad = parse_trials(missing);
  CHECK_THROWS_WITH(run_trials(bad, profiles, model.encoder, resolve, dc), doctest::Contains("trial line 2"));
  std::istringstream unknown("other\ts0\tpos\t0\t0\n");
  auto bad_kw = parse_trials(unknown);
  CHECK_THROWS_WITH(run_trials(bad_kw, profiles, model.encoder, resolve, dc), doctest::Contains("trial line 1"));
}
