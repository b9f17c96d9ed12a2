// tests/toytrain_test.cc
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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "streamkws/toytrain.h"

using namespace kws;

namespace {

SyntheticCorpusConfig small_corpus(int utterances = 200) {
  SyntheticCorpusConfig c;
  c.utterances = utterances;
  return c;
}

TrainConfig quick_train(int epochs = 4) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 20;
  return t;
}

bool same_tensors(const WeightContainer& a, const WeightContainer& b, const std::string& prefix) {
  for (const auto& [name, t] : a.tensors())
    if (name.rfind(prefix, 0) == 0 && !(t == b.at(name))) return false;
  return true;
}

double max_diff(const WeightContainer& a, const WeightContainer& b, const std::string& prefix) {
  double d = 0;
  for (const auto& [name, t] : a.tensors()) {
    if (name.rfind(prefix, 0) != 0) continue;
    const auto& u = b.at(name).values;
    for (std::size_t i = 0; i < t.values.size(); ++i)
      d = std::max(d, std::abs(static_cast<double>(t.values[i]) - u[i]));
  }
  return d;
}

// Independent phoneme-only fine-tuning loop: same split, shuffle, batching
// and annealing as the trainer, built directly on the loss and encoder
// kernels.
std::vector<EpochRecord> aam_only_oracle(std::span<const SyntheticUtterance> corpus, const WeightContainer& start,
                                         const TrainConfig& cfg, const TrainLosses& L, WeightContainer& out) {
  ModelParams<double> p = from_container(start).cast<double>();
  const std::size_t split = heldout_begin(corpus.size());
  std::vector<std::size_t> order(split);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  const double a = L.weights.alpha_mixed;
  double lr = cfg.lr, best = std::numeric_limits<double>::infinity();
  std::vector<EpochRecord> trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - b);
      AudioEncoder<double> genc = p.encoder;
      genc.visit([](const std::string&, MatrixD& m) { m = MatrixD(m.rows(), m.cols()); });
      MatrixD gw(p.phone.w.rows(), p.phone.w.cols());
      for (std::size_t k = b; k < end; ++k) {
        const auto& u = corpus[order[k]];
        EncoderCache<double> cache;
        const MatrixD e = encoder_forward(p.encoder, u.features.cast<double>(), &cache);
        const auto r = aam_loss(e, u.labels, p.phone.w, L.aam);
        MatrixD de(e.rows(), e.cols());
        axpy(de, r.grad(grad_key::kEmbeddings), a * scale);
        encoder_backward(p.encoder, cache, de, genc);
        axpy(gw, r.grad(grad_key::kPhoneWeights), a * scale);
        sum += r.value / static_cast<double>(order.size());
      }
      std::vector<MatrixD*> gs;
      genc.visit([&](const std::string&, MatrixD& m) { gs.push_back(&m); });
      std::size_t i = 0;
      p.encoder.visit([&](const std::string&, MatrixD& m) { axpy(m, *gs[i++], -lr); });
      axpy(p.phone.w, gw, -lr);
    }
    double held = 0;
    for (std::size_t k = split; k < corpus.size(); ++k) {
      const MatrixD e = encoder_forward(p.encoder, corpus[k].features.cast<double>());
      held += a * aam_loss(e, corpus[k].labels, p.phone.w, L.aam).value;
    }
    held /= static_cast<double>(corpus.size() - split);
    trace.push_back({epoch, sum, 0, 0, a * sum, held, lr});
    if (held > best * (1 - cfg.plateau_tolerance)) lr *= cfg.anneal_factor;
    best = std::min(best, held);
  }
  out = to_container(p.cast<float>());
  return trace;
}

}  // namespace

TEST_CASE("corpus is deterministic under a fixed seed") {
  const auto cfg = small_corpus(50);
  const auto a = gen_corpus(cfg), b = gen_corpus(cfg);
  REQUIRE(a.size() == 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].features.data() == b[i].features.data());
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].speaker == b[i].speaker);
  }
  auto other = cfg;
  other.seed = 2;
  CHECK(gen_corpus(other)[0].features.data() != a[0].features.data());
}

TEST_CASE("noise-free corpus repeats each phoneme exactly") {
  auto cfg = small_corpus(40);
  cfg.noise_std = 0;
  cfg.speaker_offset_std = 0;
  const auto corpus = gen_corpus(cfg);
  std::map<int, std::vector<float>> seen;
  for (const auto& u : corpus)
    for (std::size_t t = 0; t < u.labels.size(); ++t) {
      const auto row = u.features.row(t);
      std::vector<float> v(row.begin(), row.end());
      auto [it, fresh] = seen.emplace(u.labels[t], v);
      if (!fresh) CHECK(it->second == v);
    }
  CHECK(seen.size() > 1);
}

TEST_CASE("labels follow tokens through the alignment") {
  const auto corpus = gen_corpus(small_corpus(100));
  const auto cfg = small_corpus(100);
  for (const auto& u : corpus) {
    CHECK(u.tokens.size() >= 3);
    CHECK(u.tokens.size() <= 8);
    REQUIRE(u.alignment.size() == u.features.rows());
    REQUIRE(u.labels.size() == u.features.rows());
    CHECK(u.features.rows() == u.tokens.size() * cfg.frames_per_phoneme);
    for (std::size_t t = 0; t < u.labels.size(); ++t) CHECK(u.labels[t] == u.tokens[u.alignment[t]]);
    CHECK(u.speaker >= 0);
    CHECK(u.speaker < cfg.n_speakers);
  }
}

TEST_CASE("held-out split is the trailing tenth") {
  CHECK(heldout_begin(2000) == 1800);
  CHECK(heldout_begin(15) == 14);
  CHECK(heldout_begin(9) == 9);
}

TEST_CASE("corpus config validation") {
  SyntheticCorpusConfig c;
  c.n_speakers = 1;
  CHECK_THROWS(c.validate());
  c = {};
  c.noise_std = -1;
  CHECK_THROWS(gen_corpus(c));
}

TEST_CASE("synthetic sources") {
  const std::vector<int> toks{3, 1, 4};
  CHECK(synth_source(42) == "SYNTH:42");
  CHECK(synth_source(42, toks) == "SYNTH:42:3,1,4");
  CHECK(synth_source(42, toks, 9) == "SYNTH:42:3,1,4:9");
  CHECK(is_synth_source("SYNTH:1"));
  CHECK_FALSE(is_synth_source("foo.wav"));

  const auto world = make_world({});
  const auto a = synth_stream(world, "SYNTH:42:3,1,4:9");
  CHECK(a.rows() == 27);
  CHECK(a.cols() == 20);
  CHECK(synth_stream(world, "SYNTH:42:3,1,4:9").data() == a.data());
  CHECK(synth_stream(world, "SYNTH:42:3,1,4").rows() == 12);
  const auto drawn = synth_stream(world, "SYNTH:7");
  CHECK(drawn.rows() % 4 == 0);
  CHECK(drawn.rows() >= 12);

  CHECK_THROWS(synth_stream(world, "foo"));
  CHECK_THROWS(synth_stream(world, "SYNTH:x"));
  CHECK_THROWS(synth_stream(world, "SYNTH:1:2,a"));
  CHECK_THROWS(synth_stream(world, "SYNTH:1:99"));
  CHECK_THROWS(synth_stream(world, "SYNTH:1:2:3:4"));
}

TEST_CASE("phase 1 reduces the loss and is reproducible") {
  const auto cfg = small_corpus();
  const auto corpus = gen_corpus(cfg);
  const auto model = toy_model_config(cfg);
  const auto a = train_phase1(corpus, model, quick_train(), {});
  const auto b = train_phase1(corpus, model, quick_train(), {});
  REQUIRE(a.trace.epochs.size() == 4);
  CHECK(a.trace.epochs.front().total > a.trace.epochs.back().total);
  CHECK(a.trace.epochs.front().l_ph > a.trace.epochs.back().l_ph);
  CHECK(std::abs(a.trace.epochs.back().total - b.trace.epochs.back().total) < 1e-6);
  CHECK(a.weights == b.weights);

  std::ostringstream os;
  a.trace.write_csv(os);
  CHECK(os.str().rfind("epoch,L_ph,L_vp,total,heldout,lr\n0,", 0) == 0);
}

TEST_CASE("phase 1 with zero speaker weight still trains the head") {
  const auto cfg = small_corpus();
  const auto corpus = gen_corpus(cfg);
  const auto model = toy_model_config(cfg);
  TrainLosses with_reversal, without_reversal;
  with_reversal.weights.beta_audio = 0;
  without_reversal.weights.beta_audio = 0;
  without_reversal.weights.grl_lambda = 0;
  const auto a = train_phase1(corpus, model, quick_train(), with_reversal);
  const auto b = train_phase1(corpus, model, quick_train(), without_reversal);
  const auto init = to_container(init_params<double>(model, quick_train().seed).cast<float>());

  CHECK_FALSE(same_tensors(a.weights, init, "speaker."));
  CHECK(same_tensors(a.weights, b.weights, "encoder."));
  CHECK(same_tensors(a.weights, b.weights, "phone."));
  CHECK(same_tensors(a.weights, b.weights, "speaker."));

  TrainLosses full;
  const auto c = train_phase1(corpus, model, quick_train(), full);
  CHECK_FALSE(same_tensors(a.weights, c.weights, "encoder."));
}

TEST_CASE("divergence reports the epoch") {
  const auto cfg = small_corpus(60);
  const auto corpus = gen_corpus(cfg);
  auto t = quick_train(3);
  t.lr = 1e12;
  t.plateau_tolerance = -1;
  try {
    train_phase1(corpus, toy_model_config(cfg), t, {});
    FAIL("expected divergence");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("phase 1: non-finite") != std::string::npos);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("phase 2 without contrastive terms is phoneme-only fine-tuning") {
  const auto cfg = small_corpus();
  const auto corpus = gen_corpus(cfg);
  const auto p1 = train_phase1(corpus, toy_model_config(cfg), quick_train(2), {});
  TrainLosses L;
  L.weights.beta_mixed = 0;
  L.weights.gamma_mixed = 0;
  auto t = quick_train(3);
  t.lr = 1e-2;
  const auto r = train_phase2(corpus, p1.weights, t, L);
  WeightContainer oracle_weights;
  const auto oracle = aam_only_oracle(corpus, p1.weights, t, L, oracle_weights);

  REQUIRE(r.trace.epochs.size() == oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    CHECK(std::abs(r.trace.epochs[i].l_ph - oracle[i].l_ph) < 1e-9);
    CHECK(std::abs(r.trace.epochs[i].total - oracle[i].total) < 1e-9);
    CHECK(std::abs(r.trace.epochs[i].heldout - oracle[i].heldout) < 1e-9);
    CHECK(std::abs(r.trace.epochs[i].total - L.weights.alpha_mixed * r.trace.epochs[i].l_ph) < 1e-12);
  }
  CHECK(max_diff(r.weights, oracle_weights, "encoder.") < 1e-6);
  CHECK(max_diff(r.weights, oracle_weights, "phone.") < 1e-6);
  CHECK(same_tensors(r.weights, p1.weights, "text."));
  CHECK(same_tensors(r.weights, p1.weights, "mixer."));
  CHECK(same_tensors(r.weights, p1.weights, "speaker."));
}

TEST_CASE("phase 2 aligns text with audio and is reproducible") {
  const auto cfg = small_corpus(300);
  const auto corpus = gen_corpus(cfg);
  const auto p1 = train_phase1(corpus, toy_model_config(cfg), quick_train(4), {});
  auto t = quick_train(6);
  t.lr = kToyPhase2Lr;
  const auto a = train_phase2(corpus, p1.weights, t, {});
  const auto b = train_phase2(corpus, p1.weights, t, {});
  CHECK(a.weights == b.weights);
  CHECK(a.trace.epochs.front().total > a.trace.epochs.back().total);

  std::span<const SyntheticUtterance> all(corpus);
  const auto held = all.subspan(heldout_begin(corpus.size()));
  const auto stats = alignment_similarity(held, from_container(a.weights));
  CHECK(stats.matched > stats.mismatched + 0.1);

  std::ostringstream os;
  a.trace.write_csv(os);
  CHECK(os.str().rfind("epoch,L_ph,L_clat,L_clam,total,heldout,lr\n", 0) == 0);
}

TEST_CASE("frozen encoder stays fixed in phase 2") {
  const auto cfg = small_corpus(100);
  const auto corpus = gen_corpus(cfg);
  const auto p1 = train_phase1(corpus, toy_model_config(cfg), quick_train(1), {});
  auto t = quick_train(2);
  t.freeze_encoder = true;
  const auto r = train_phase2(corpus, p1.weights, t, {});
  CHECK(same_tensors(r.weights, p1.weights, "encoder."));
  CHECK_FALSE(same_tensors(r.weights, p1.weights, "text."));
}

TEST_CASE("speaker probe reads speaker identity from an untrained encoder") {
  auto cfg = small_corpus(300);
  cfg.speaker_offset_std = 2.0;
  const auto corpus = gen_corpus(cfg);
  const auto model = from_container(to_container(init_params<double>(toy_model_config(cfg), 3).cast<float>()));
  std::span<const SyntheticUtterance> all(corpus);
  const std::size_t split = heldout_begin(corpus.size());
  ProbeConfig p;
  p.epochs = 30;
  const double acc = speaker_probe_accuracy(all.subspan(0, split), all.subspan(split), model.encoder, cfg.n_speakers, p);
  CHECK(acc > 0.8);
}

TEST_CASE("trial set construction") {
  const auto world = make_world({});
  TrialSetConfig cfg;
  cfg.keywords = 5;
  const auto set = make_trial_set(world, cfg);
  REQUIRE(set.keywords.size() == 5);
  const int per_kw = cfg.positives_per_keyword + cfg.random_negatives_per_keyword + cfg.near_miss_per_keyword;
  REQUIRE(set.trials.size() == static_cast<std::size_t>(5 * per_kw));

  for (std::size_t k = 0; k < set.keywords.size(); ++k) {
    const auto& kw = set.keywords[k];
    CHECK(kw.keyword_id == "kw" + std::to_string(k));
    CHECK(kw.tokens.size() >= 3);
    CHECK(kw.tokens.size() <= 6);
    CHECK(is_synth_source(kw.audio_source));
    for (int i = 0; i < per_kw; ++i) {
      const auto& t = set.trials[k * per_kw + i];
      CHECK(t.keyword_id == kw.keyword_id);
      CHECK(t.pad_before >= cfg.pad_min);
      CHECK(t.pad_after <= cfg.pad_max);
      CHECK(t.positive == (i < cfg.positives_per_keyword));
      CHECK(t.source != kw.audio_source);
      if (t.positive) {
        CHECK(t.difficulty == Difficulty::kNone);
        continue;
      }
      CHECK(t.difficulty != Difficulty::kNone);
      CHECK(t.difficulty != Difficulty::kExcluded);
    }
    // Near misses differ from the keyword in exactly one position.
    for (int i = cfg.positives_per_keyword + cfg.random_negatives_per_keyword; i < per_kw; ++i) {
      const auto& src = set.trials[k * per_kw + i].source;
      const auto first = src.find(':', 6), last = src.rfind(':');
      std::vector<int> toks;
      std::stringstream ss(src.substr(first + 1, last - first - 1));
      for (std::string s; std::getline(ss, s, ',');) toks.push_back(std::stoi(s));
      REQUIRE(toks.size() == kw.tokens.size());
      int diff = 0;
      for (std::size_t j = 0; j < toks.size(); ++j) diff += toks[j] != kw.tokens[j];
      CHECK(diff == 1);
    }
  }

  cfg.positives_from_enrollment = true;
  const auto replay = make_trial_set(world, cfg);
  for (const auto& t : replay.trials)
    if (t.positive) CHECK(t.source == replay.keywords[std::stoi(t.keyword_id.substr(2))].audio_source);
}

TEST_CASE("token strings") {
  const std::vector<int> toks{0, 25, 26, 63};
  CHECK(token_string(toks) == "azA/");
  const std::vector<int> bad{64};
  CHECK_THROWS(token_string(bad));
}
