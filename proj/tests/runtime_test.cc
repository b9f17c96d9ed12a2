// tests/runtime_test.cc
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
#include <random>
#include <sstream>

#include "decoder_oracle.h"
#include "doctest.h"
#include "json.hpp"
#include "streamkws/runtime.h"

using namespace kws;
using namespace kws::testing;

namespace {

Matrix random_features(std::mt19937_64& rng, std::size_t t_len, std::size_t dim) {
  std::normal_distribution<float> nd(0.0f, 1.0f);
  Matrix m(t_len, dim);
  for (auto& v : m.data()) v = nd(rng);
  return m;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols());
  for (std::size_t r = begin; r < end; ++r)
    std::copy(m.row(r).begin(), m.row(r).end(), out.row(r - begin).begin());
  return out;
}

}  // namespace

TEST_CASE("similarity clamps to the floor") {
  Vector a{0.6f, 0.8f}, b{-0.6f, -0.8f}, c{0.8f, -0.6f};
  CHECK(similarity_row(a, a) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(similarity_row(a, b) == 1e-6);
  CHECK(similarity_row(a, c) == 1e-6);
  CHECK(similarity_row(a, a) <= 1.0);
  Vector d{1.0f, 2.0f, 3.0f};
  CHECK_THROWS(similarity_row(a, d));
}

TEST_CASE("direct smoothing examples") {
  std::vector<double> row{1.0, 0.2, 0.6};
  std::vector<double> expect{1.0, 0.6, 0.4};
  for (std::size_t j = 0; j < row.size(); ++j)
    CHECK(smooth(std::span<const double>(row.data(), j + 1), 2) == doctest::Approx(expect[j]).epsilon(1e-12));
  std::vector<double> flat(20, 0.5);
  for (int w : {1, 3, 7, 40})
    for (std::size_t j = 0; j < flat.size(); ++j)
      CHECK(smooth(std::span<const double>(flat.data(), j + 1), w) == 0.5);
  for (std::size_t j = 0; j < row.size(); ++j)
    CHECK(smooth(std::span<const double>(row.data(), j + 1), 1) == row[j]);
}

TEST_CASE("direct score examples") {
  MatrixD one(1, 5, {0.2, 0.9, 0.3, 0.1, 0.4});
  // Single unit: the score is the windowed max.
  CHECK(score(one, 4) == doctest::Approx(0.9));
  CHECK(score(one, 3) == doctest::Approx(0.4));
  MatrixD tail(1, 5, {0.9, 0.2, 0.3, 0.1, 0.25});
  CHECK(score(tail, 3) == doctest::Approx(0.3));
  MatrixD flat(3, 4, 0.37);
  CHECK(score(flat, 2) == doctest::Approx(0.37).epsilon(1e-12));

  std::mt19937_64 rng(11);
  MatrixD p = random_similarities(rng, 4, 7);
  // Treat p as already smoothed: brute_scores with w_smooth = 1.
  const auto ref = brute_scores(p, 1, 3, 4);
  for (std::size_t j = 0; j < 7; ++j) {
    MatrixD prefix(4, j + 1);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t k = 0; k <= j; ++k) prefix(i, k) = p(i, k);
    CHECK(std::abs(score(prefix, 3) - ref[j]) < 1e-12);
  }
}

TEST_CASE("fusion") {
  FusionWeights w;
  CHECK(fuse(0.8, 0.8, 0.8, w) == doctest::Approx(0.8));
  CHECK(fuse(1.0, 0.0, 0.0, w) == doctest::Approx(0.5));
  CHECK(fuse(0.7, std::nullopt, std::nullopt, w) == doctest::Approx(0.7));
  CHECK_THROWS(fuse(std::nullopt, std::nullopt, std::nullopt, w));

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    FusionWeights eq{1, 1, 1};
    const double a = ud(rng), b = ud(rng), c = ud(rng);
    // Equal weights make the argument order irrelevant.
    CHECK(fuse(a, b, c, eq) == doctest::Approx(fuse(c, a, b, eq)));
    const double f = fuse(a, b, c, w);
    CHECK(f >= std::min({a, b, c}) - 1e-12);
    CHECK(f <= std::max({a, b, c}) + 1e-12);
    const double g = fuse(std::nullopt, b, c, w);
    CHECK(g == doctest::Approx((0.25 * b + 0.25 * c) / 0.5));
  }
}

TEST_CASE("incremental smoothing equals the direct formula") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ud(1e-6, 1.0);
  for (int w : {1, 3, 10, 100}) {
    for (std::size_t len : {std::size_t{1}, std::size_t{57}, std::size_t{10000}}) {
      std::vector<double> row(len);
      for (auto& v : row) v = static_cast<float>(ud(rng));
      CausalSmoother sm(w);
      double worst = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const double inc = sm.push(row[j]);
        const std::size_t h = j + 1 >= static_cast<std::size_t>(w) ? j + 1 - w : 0;
        double s = 0;
        for (std::size_t k = h; k <= j; ++k) s += row[k];
        worst = std::max(worst, std::abs(inc - s / static_cast<double>(j - h + 1)));
      }
      CHECK(worst < 1e-6);
    }
  }
}

TEST_CASE("monotonic deque max equals a naive window scan exactly") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 4);
  for (int w : {1, 3, 10, 100}) {
    for (bool ties : {false, true}) {
      std::vector<double> row(10000);
      for (auto& v : row) v = ties ? coarse(rng) / 4.0 : ud(rng);
      WindowMax wm(w);
      bool ok = true;
      for (std::size_t j = 0; j < row.size(); ++j) {
        wm.push(row[j]);
        const std::size_t h = j + 1 >= static_cast<std::size_t>(w) ? j + 1 - w : 0;
        const double naive = *std::max_element(row.begin() + h, row.begin() + j + 1);
        ok = ok && wm.max() == naive && wm.candidates() <= static_cast<std::size_t>(w);
      }
      CHECK(ok);
    }
  }
}

TEST_CASE("modality scorer matches the brute-force reference") {
  std::mt19937_64 rng(15);
  std::uniform_int_distribution<int> units(1, 6), len(1, 300), win(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = units(rng), t_len = len(rng);
    DecoderConfig cfg;
    cfg.w_smooth = win(rng);
    cfg.w_scoring = win(rng);
    const MatrixD p = random_similarities(rng, n, t_len);
    const auto ref = brute_scores(p, cfg.w_smooth, cfg.w_scoring, n);
    ModalityScorer sc(n, cfg);
    std::vector<double> col(n);
    double worst = 0;
    for (int j = 0; j < t_len; ++j) {
      for (int i = 0; i < n; ++i) col[i] = p(i, j);
      worst = std::max(worst, std::abs(sc.push(col) - ref[j]));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("raising a smoothed value in the window never lowers the score") {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    MatrixD sm = random_similarities(rng, 3, 12);
    const double before = score(sm, 5);
    const std::size_t i = rng() % 3, k = 7 + rng() % 5;
    sm(i, k) = std::min(1.0, sm(i, k) + ud(rng));
    CHECK(score(sm, 5) >= before);
  }
}

TEST_CASE("unit range checks") {
  DecoderConfig cfg;
  CHECK(scored_units(5, cfg) == 4);
  CHECK_THROWS(scored_units(1, cfg));
  cfg.include_last_unit = true;
  CHECK(scored_units(1, cfg) == 1);
  DecoderConfig bad;
  bad.w_smooth = 0;
  CHECK_THROWS(bad.validate());
  bad = {};
  bad.sim_floor = 1.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("profiles") {
  const auto cfg = ModelConfig::toy_preset();
  auto model = init_params<float>(cfg, 21);
  std::mt19937_64 rng(17);
  const Matrix audio = random_features(rng, 30, cfg.input_dim);
  const std::vector<int> tokens{1, 4, 2, 7};

  auto a = make_profile("kw", audio, std::nullopt, model);
  CHECK(a.audio.has_value());
  CHECK_FALSE(a.text.has_value());
  CHECK_FALSE(a.mixed.has_value());
  auto t = make_profile("kw", std::nullopt, tokens, model);
  CHECK(t.text.has_value());
  CHECK_FALSE(t.audio.has_value());
  auto both = make_profile("kw", audio, tokens, model);
  REQUIRE(both.mixed.has_value());
  CHECK(both.mixed->n_frames() == tokens.size());
  CHECK(both.dim() == static_cast<std::size_t>(cfg.embed_dim));
  for (const auto* e : {&both.audio, &both.text, &both.mixed})
    for (std::size_t r = 0; r < (*e)->n_frames(); ++r)
      CHECK(l2_norm((*e)->values.row(r)) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK_THROWS(make_profile("kw", std::nullopt, std::nullopt, model));

  DecoderConfig dc;
  auto bytes = save_profile(both, &dc);
  auto back = load_profile(bytes);
  CHECK(back.keyword_id == "kw");
  CHECK(back.tokens == tokens);
  CHECK(back.audio->values == both.audio->values);
  CHECK(back.text->values == both.text->values);
  CHECK(back.mixed->values == both.mixed->values);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(load_profile(bad), FormatError);
  bad = bytes;
  bad.resize(bad.size() - 3);
  CHECK_THROWS_AS(load_profile(bad), FormatError);

  // Mixed embeddings with no audio embedding must be rejected.
  nlohmann::json meta = {{"keyword_id", "kw"},
                         {"dim", both.dim()},
                         {"created_from", {{"audio", false}, {"text", true}, {"mixed", true}}}};
  const std::string js = meta.dump();
  WeightContainer w;
  w.insert("E_T", both.text->values);
  w.insert("E_M", both.mixed->values);
  std::vector<uint8_t> forged{'S', 'N', 'P', '1'};
  for (int i = 0; i < 4; ++i) forged.push_back(static_cast<uint8_t>(js.size() >> (8 * i)));
  forged.insert(forged.end(), js.begin(), js.end());
  const auto payload = save_weights(w);
  forged.insert(forged.end(), payload.begin(), payload.end());
  CHECK_THROWS_AS(load_profile(forged), FormatError);
}

TEST_CASE("streaming decoder") {
  const auto cfg = ModelConfig::toy_preset();
  auto model = init_params<float>(cfg, 22);
  std::mt19937_64 rng(18);
  const Matrix enroll = random_features(rng, 25, cfg.input_dim);
  auto profile = make_profile("kw", enroll, std::vector<int>{3, 1, 5}, model);
  DecoderConfig dc;
  dc.w_smooth = 4;
  dc.w_scoring = 15;

  SUBCASE("chunking does not change the output") {
    const Matrix stream = random_features(rng, 120, cfg.input_dim);
    StreamingDecoder whole(profile, model.encoder, dc);
    const auto ref = whole.process_chunk(stream);
    REQUIRE(ref.size() == 120);
    for (std::size_t chunk : {1, 7, 64}) {
      StreamingDecoder dec(profile, model.encoder, dc);
      std::vector<ScoreFrame> got;
      for (std::size_t b = 0; b < stream.rows(); b += chunk) {
        auto part = dec.process_chunk(slice_rows(stream, b, std::min(stream.rows(), b + chunk)));
        got.insert(got.end(), part.begin(), part.end());
      }
      CHECK(got == ref);
    }
    for (const auto& f : ref) {
      CHECK(f.score_audio.has_value());
      CHECK(f.score_text.has_value());
      CHECK(f.score_mixed.has_value());
      CHECK(f.warm == (f.frame_index >= 4));
      CHECK(f.fused == fuse(f.score_audio, f.score_text, f.score_mixed, {}));
    }
  }

  SUBCASE("empty chunk is a no-op") {
    StreamingDecoder dec(profile, model.encoder, dc);
    dec.process_chunk(random_features(rng, 5, cfg.input_dim));
    CHECK(dec.process_chunk(Matrix(0, cfg.input_dim)).empty());
    CHECK(dec.frames_seen() == 5);
  }

  SUBCASE("scores depend only on the past") {
    Matrix stream = random_features(rng, 80, cfg.input_dim);
    StreamingDecoder d1(profile, model.encoder, dc);
    const auto ref = d1.process_chunk(stream);
    for (std::size_t r = 50; r < 80; ++r)
      for (auto& v : stream.row(r)) v = -3 * v + 1;
    StreamingDecoder d2(profile, model.encoder, dc);
    const auto mut = d2.process_chunk(stream);
    for (std::size_t j = 0; j < 50; ++j) CHECK(mut[j] == ref[j]);
  }

  SUBCASE("reset restarts the stream") {
    const Matrix stream = random_features(rng, 30, cfg.input_dim);
    StreamingDecoder dec(profile, model.encoder, dc);
    const auto first = dec.process_chunk(stream);
    dec.reset();
    CHECK(dec.process_chunk(stream) == first);
  }

  SUBCASE("dimension mismatch") {
    auto other = init_params<float>(ModelConfig::full_preset(), 1);
    CHECK_THROWS(StreamingDecoder(profile, other.encoder, dc));
  }
}

TEST_CASE("the enrollment audio outscores random streams") {
  const auto cfg = ModelConfig::toy_preset();
  auto model = init_params<float>(cfg, 23);
  std::mt19937_64 rng(19);
  DecoderConfig dc;
  // Unsmoothed, with the scoring window covering the whole stream, the
  // diagonal of the exact replay gives every unit a similarity of one.
  dc.w_smooth = 1;
  dc.w_scoring = 20;
  int wins = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix enroll = random_features(rng, 20, cfg.input_dim);
    auto profile = make_profile("kw", enroll, std::nullopt, model);
    StreamingDecoder pos(profile, model.encoder, dc), neg(profile, model.encoder, dc);
    const auto sp = pos.process_chunk(enroll);
    const auto sn = neg.process_chunk(random_features(rng, 20, cfg.input_dim));
    auto best = [](const std::vector<ScoreFrame>& v) {
      double b = 0;
      for (const auto& f : v) b = std::max(b, f.fused);
      return b;
    };
    wins += best(sp) >= best(sn);
  }
  CHECK(wins == 50);
}

TEST_CASE("csv outputs") {
  std::vector<ScoreFrame> frames(2);
  frames[0].frame_index = 0;
  frames[0].score_audio = 0.5;
  frames[0].fused = 0.5;
  frames[1].frame_index = 1;
  frames[1].score_text = 0.25;
  frames[1].score_mixed = 1.0;
  frames[1].fused = 0.625;
  std::ostringstream os;
  write_score_csv_header(os);
  write_score_csv(os, frames);
  CHECK(os.str() ==
        "frame_index,score_A,score_T,score_M,score_fused\n"
        "0,0.500000,,,0.500000\n"
        "1,,0.250000,1.000000,0.625000\n");

  CHECK(trial_score(frames) == 0.625);
  frames[1].warm = false;
  frames[0].warm = true;
  CHECK(trial_score(frames) == 0.5);

  EmbeddingSequence e{Modality::kAudio, Matrix(2, 2, {1, 0, 0, 1})};
  Matrix s(3, 2, {1, 0, 0, 1, -1, 0});
  auto sims = similarity_matrix(e, s);
  CHECK(sims.rows() == 2);
  CHECK(sims.cols() == 3);
  CHECK(sims(0, 0) == 1.0);
  CHECK(sims(0, 2) == 1e-6);
  std::ostringstream ss;
  write_similarity_csv(ss, sims);
  CHECK(ss.str() == "1.000000,0.000001,0.000001\n0.000001,1.000000,0.000001\n");
}
