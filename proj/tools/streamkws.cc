// tools/streamkws.cc
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

// streamkws command-line front end.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "streamkws/metrics.h"
#include "streamkws/runtime.h"
#include "streamkws/toytrain.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace kws;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Silence is id 0; the 39 phones follow in CMU order.
const char* const kArpabet[] = {"SIL", "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",
                                "DH",  "EH", "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH",
                                "K",   "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",  "S",
                                "SH",  "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};

int token_id(std::string t) {
  if (!t.empty() && std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); }))
    return std::stoi(t);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::toupper(c); });
  while (!t.empty() && std::isdigit(static_cast<unsigned char>(t.back()))) t.pop_back();
  for (int i = 0; i < static_cast<int>(std::size(kArpabet)); ++i)
    if (t == kArpabet[i]) return i;
  throw UsageError("unknown token '" + t + "'");
}

std::vector<int> parse_tokens(const std::string& text, int vocab_size) {
  std::vector<int> out;
  std::string cur;
  auto flush = [&]() {
    if (cur.empty()) return;
    const int id = token_id(cur);
    if (id >= vocab_size)
      throw UsageError("token '" + cur + "' is outside the model vocabulary (" + std::to_string(vocab_size) + ")");
    out.push_back(id);
    cur.clear();
  };
  for (char c : text) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) flush();
    else cur += c;
  }
  flush();
  if (out.empty()) throw UsageError("--tokens is empty");
  return out;
}

FusionWeights parse_fusion(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) {
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(p, &used);
    } catch (const std::logic_error&) {
      used = std::string::npos;
    }
    if (used != p.size()) throw UsageError("--fusion expects a,b,c");
    v.push_back(x);
  }
  if (v.size() != 3) throw UsageError("--fusion expects a,b,c");
  FusionWeights f{v[0], v[1], v[2]};
  try {
    f.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return f;
}

struct DecoderOptions {
  DecoderConfig cfg;
  std::string fusion = "0.5,0.25,0.25";

  void add(CLI::App* app, bool with_fusion = true) {
    app->add_option("--w-smooth", cfg.w_smooth, "Smoothing window (frames)")->capture_default_str();
    app->add_option("--w-scoring", cfg.w_scoring, "Scoring window (frames)")->capture_default_str();
    app->add_option("--sim-floor", cfg.sim_floor, "Similarity clamp floor")->capture_default_str();
    app->add_flag("--include-last-unit", cfg.include_last_unit, "Score all n enrollment rows");
    app->add_option("--warmup-frames", cfg.warmup_frames, "Warm-up frames (-1 = w_smooth)")->capture_default_str();
    if (with_fusion) app->add_option("--fusion", fusion, "Fusion weights audio,text,mixed")->capture_default_str();
  }

  DecoderConfig decoder() const {
    try {
      cfg.validate();
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
  FusionWeights weights() const { return parse_fusion(fusion); }
};

json decoder_json(const DecoderConfig& c) {
  return {{"w_smooth", c.w_smooth},
          {"w_scoring", c.w_scoring},
          {"sim_floor", c.sim_floor},
          {"include_last_unit", c.include_last_unit},
          {"warmup_frames", c.warmup()}};
}

json fusion_json(const FusionWeights& f) { return {{"audio", f.audio}, {"text", f.text}, {"mixed", f.mixed}}; }

json model_json(const ModelConfig& m) {
  const auto n = count_parameters(m);
  return {{"input_dim", m.input_dim},
          {"n_layers", m.n_layers},
          {"hidden_dim", m.hidden_dim},
          {"bottleneck_dim", m.bottleneck_dim},
          {"lookback", m.lookback},
          {"embed_dim", m.embed_dim},
          {"vocab_size", m.vocab_size},
          {"n_phonemes", m.n_phonemes},
          {"n_speakers", m.n_speakers},
          {"attention_dim", m.attention_dim},
          {"parameters",
           {{"audio_encoder", n.audio_encoder},
            {"text_encoder", n.text_encoder},
            {"mixer", n.mixer},
            {"phone_classifier", n.phone_classifier},
            {"speaker_head", n.speaker_head},
            {"deployed", n.deployed()},
            {"total", n.total()}}}};
}

SyntheticCorpusConfig world_config(uint64_t seed) {
  SyntheticCorpusConfig c;
  c.seed = seed;
  return c;
}

// Feature files, or synthetic streams over the world drawn from the seed.
StreamResolver make_resolver(uint64_t seed, const std::string& base_dir = "") {
  auto world = std::make_shared<SyntheticWorld>(make_world(world_config(seed)));
  auto files = file_stream_resolver(base_dir);
  return [world, files](const std::string& source) {
    return is_synth_source(source) ? synth_stream(*world, source) : files(source);
  };
}

void require(const std::string& value, const char* flag, const char* sub) {
  if (value.empty()) throw UsageError(std::string(sub) + " requires " + flag);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

void write_text(const fs::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

std::map<std::string, EnrollmentProfile> load_profile_dir(const std::string& dir,
                                                          std::span<const Trial> trials) {
  std::map<std::string, EnrollmentProfile> out;
  for (const auto& t : trials) {
    if (out.count(t.keyword_id)) continue;
    const fs::path p = fs::path(dir) / (t.keyword_id + ".snp");
    if (!fs::exists(p))
      throw std::runtime_error("trial line " + std::to_string(t.line) + ": no profile " + p.string());
    out.emplace(t.keyword_id, load_profile_file(p.string()));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct TrainToyArgs {
  std::string out;
  uint64_t seed = 1;
  SyntheticCorpusConfig corpus;
  TrainConfig phase1;
  double phase2_lr = kToyPhase2Lr;
  TrainLosses losses;
  TrialSetConfig trials;
  bool probe = true;
};

void add_train_toy(CLI::App* sub, TrainToyArgs& a) {
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--seed", a.seed, "Corpus, initialization and trial seed")->capture_default_str();
  sub->add_option("--utterances", a.corpus.utterances, "Corpus size")->capture_default_str();
  sub->add_option("--epochs", a.phase1.epochs, "Epochs per phase")->capture_default_str();
  sub->add_option("--lr", a.phase1.lr, "Phase 1 learning rate")->capture_default_str();
  sub->add_option("--phase2-lr", a.phase2_lr, "Phase 2 learning rate")->capture_default_str();
  sub->add_option("--batch-size", a.phase1.batch_size, "Batch size")->capture_default_str();
  sub->add_option("--anneal", a.phase1.anneal_factor, "Learning-rate annealing factor")->capture_default_str();
  sub->add_flag("--freeze-encoder", a.phase1.freeze_encoder, "Keep the audio encoder fixed in phase 2");
  auto& w = a.losses.weights;
  sub->add_option("--alpha-audio", w.alpha_audio)->capture_default_str();
  sub->add_option("--beta-audio", w.beta_audio)->capture_default_str();
  sub->add_option("--alpha-mixed", w.alpha_mixed)->capture_default_str();
  sub->add_option("--beta-mixed", w.beta_mixed)->capture_default_str();
  sub->add_option("--gamma-mixed", w.gamma_mixed)->capture_default_str();
  sub->add_option("--lambda", w.grl_lambda, "Gradient reversal strength")->capture_default_str();
  sub->add_option("--aam-scale", a.losses.aam.scale)->capture_default_str();
  sub->add_option("--aam-margin", a.losses.aam.margin)->capture_default_str();
  sub->add_option("--temperature", a.losses.contrastive.temperature)->capture_default_str();
  sub->add_option("--keywords", a.trials.keywords, "Keywords in the demo trial set")->capture_default_str();
  sub->add_option("--near-miss", a.trials.near_miss_per_keyword, "Near-miss negatives per keyword")
      ->capture_default_str();
  sub->add_flag("--replay-positives", a.trials.positives_from_enrollment,
                "Positives replay the enrollment rendition");
  sub->add_flag("!--no-probe", a.probe, "Skip the speaker probe");
}

json train_toy_config(const TrainToyArgs& a) {
  auto corpus = a.corpus;
  corpus.seed = a.seed;
  const auto& w = a.losses.weights;
  return {{"corpus",
           {{"n_phonemes", corpus.n_phonemes},
            {"n_speakers", corpus.n_speakers},
            {"frames_per_phoneme", corpus.frames_per_phoneme},
            {"feature_dim", corpus.feature_dim},
            {"utterances", corpus.utterances},
            {"noise_std", corpus.noise_std},
            {"speaker_offset_std", corpus.speaker_offset_std},
            {"seed", corpus.seed}}},
          {"train",
           {{"optimizer", "sgd"},
            {"epochs", a.phase1.epochs},
            {"batch_size", a.phase1.batch_size},
            {"phase1_lr", a.phase1.lr},
            {"phase2_lr", a.phase2_lr},
            {"anneal_factor", a.phase1.anneal_factor},
            {"freeze_encoder", a.phase1.freeze_encoder}}},
          {"losses",
           {{"alpha_audio", w.alpha_audio},
            {"beta_audio", w.beta_audio},
            {"alpha_mixed", w.alpha_mixed},
            {"beta_mixed", w.beta_mixed},
            {"gamma_mixed", w.gamma_mixed},
            {"grl_lambda", w.grl_lambda},
            {"aam_scale", a.losses.aam.scale},
            {"aam_margin", a.losses.aam.margin},
            {"temperature", a.losses.contrastive.temperature}}},
          {"model", model_json(toy_model_config(corpus))}};
}

int run_train_toy(TrainToyArgs a) {
  a.corpus.seed = a.seed;
  a.phase1.seed = a.seed;
  a.trials.seed = a.seed + 10;
  TrainConfig phase2 = a.phase1;
  phase2.lr = a.phase2_lr;
  try {
    a.corpus.validate();
    a.phase1.validate();
    phase2.validate();
    a.losses.weights.validate();
    a.losses.aam.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path out(a.out);
  fs::create_directories(out / "profiles");

  const auto corpus = gen_corpus(a.corpus);
  const auto model_cfg = toy_model_config(a.corpus);
  std::clog << "phase 1: " << corpus.size() << " utterances, " << a.phase1.epochs << " epochs\n";
  const auto r1 = train_phase1(corpus, model_cfg, a.phase1, a.losses);
  save_weights_file((out / "phase1.snw").string(), r1.weights);
  {
    auto os = open_out(out / "trace_phase1.csv");
    r1.trace.write_csv(os);
  }
  std::clog << "phase 2\n";
  const auto r2 = train_phase2(corpus, r1.weights, phase2, a.losses);
  save_weights_file((out / "weights.snw").string(), r2.weights);
  {
    auto os = open_out(out / "trace_phase2.csv");
    r2.trace.write_csv(os);
  }

  const auto model = from_container(r2.weights);
  std::span<const SyntheticUtterance> all(corpus);
  const std::size_t split = heldout_begin(corpus.size());
  const auto held = all.subspan(split);
  json summary = train_toy_config(a);
  summary["phoneme_accuracy"] = phoneme_accuracy(held, model);
  const auto align = alignment_similarity(held, model);
  summary["alignment"] = {{"matched", align.matched}, {"mismatched", align.mismatched}};
  if (a.probe && split > 0 && split < corpus.size()) {
    const auto p1 = from_container(r1.weights);
    summary["speaker_probe"] = {
        {"chance", 1.0 / a.corpus.n_speakers},
        {"phase1", speaker_probe_accuracy(all.subspan(0, split), held, p1.encoder, a.corpus.n_speakers)},
        {"final", speaker_probe_accuracy(all.subspan(0, split), held, model.encoder, a.corpus.n_speakers)}};
  }

  const auto world = make_world(a.corpus);
  const auto set = make_trial_set(world, a.trials);
  for (const auto& kw : set.keywords) {
    const auto profile = make_profile(kw.keyword_id, synth_stream(world, kw.audio_source), kw.tokens, model);
    const DecoderConfig echo;
    save_profile_file((out / "profiles" / (kw.keyword_id + ".snp")).string(), profile, &echo);
  }
  {
    auto os = open_out(out / "trials.tsv");
    write_trials(os, set.trials);
  }
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EnrollArgs {
  std::string weights, keyword, audio, tokens, out;
  uint64_t seed = 1;
  DecoderOptions dec;
};

int run_enroll(const EnrollArgs& a) {
  if (a.audio.empty() && a.tokens.empty()) throw UsageError("enroll requires --audio and/or --tokens");
  const auto model = from_container(load_weights_file(a.weights));
  const auto cfg = a.dec.decoder();
  std::optional<FeatureSequence> audio;
  if (!a.audio.empty()) audio = make_resolver(a.seed)(a.audio);
  std::optional<std::vector<int>> tokens;
  if (!a.tokens.empty()) tokens = parse_tokens(a.tokens, model.text.vocab_size());
  const auto profile = make_profile(a.keyword, audio, tokens, model);
  save_profile_file(a.out, profile, &cfg);
  std::clog << "wrote " << a.out << " (" << (profile.audio ? "audio " : "") << (profile.text ? "text " : "")
            << (profile.mixed ? "mixed" : "") << ")\n";
  return 0;
}

struct DetectArgs {
  std::string weights, profile, input, out;
  int chunk_frames = 10;
  uint64_t seed = 1;
  DecoderOptions dec;
};

int run_detect(const DetectArgs& a) {
  if (a.chunk_frames < 1) throw UsageError("--chunk-frames must be >= 1");
  const auto cfg = a.dec.decoder();
  const auto fusion = a.dec.weights();
  const auto model = from_container(load_weights_file(a.weights));
  const auto profile = load_profile_file(a.profile);
  const auto stream = make_resolver(a.seed)(a.input);

  std::ofstream file;
  if (!a.out.empty()) file = open_out(a.out);
  std::ostream& os = a.out.empty() ? std::cout : file;
  StreamingDecoder decoder(profile, model.encoder, cfg, fusion);
  write_score_csv_header(os);
  const std::size_t step = static_cast<std::size_t>(a.chunk_frames);
  for (std::size_t b = 0; b < stream.rows(); b += step) {
    const std::size_t e = std::min(stream.rows(), b + step);
    Matrix chunk(e - b, stream.cols());
    for (std::size_t t = b; t < e; ++t)
      std::copy(stream.row(t).begin(), stream.row(t).end(), chunk.row(t - b).begin());
    write_score_csv(os, decoder.process_chunk(chunk));
    os.flush();
  }
  if (!os) throw std::runtime_error("write failed");
  return 0;
}

struct EvalArgs {
  std::string weights, trials, profiles, report, out;
  uint64_t seed = 1;
  unsigned threads = 0;
  std::vector<int> w_scoring_sweep{20, 60, 120};
  DecoderOptions dec;
};

int run_evaluate(const EvalArgs& a) {
  const auto cfg = a.dec.decoder();
  const auto fusion = a.dec.weights();
  const auto model = from_container(load_weights_file(a.weights));
  const auto trials = read_trial_file(a.trials);
  const auto profiles = load_profile_dir(a.profiles, trials);
  const EvalOptions opts{a.seed, a.threads};
  const auto resolver = make_resolver(a.seed, fs::path(a.trials).parent_path().string());
  const auto report = run_trials(trials, profiles, model.encoder, resolver, cfg, fusion, opts);
  const std::string text = report_json(report, cfg, fusion, opts) + "\n";
  if (a.report.empty()) std::cout << text;
  else write_text(a.report, text);
  return 0;
}

// Length-mismatched keywords: short and long phoneme strings rendered at
// varied speaking rates.
TrialSet bench_trial_set(const SyntheticWorld& world, uint64_t seed) {
  TrialSetConfig c;
  c.keywords = 30;
  c.min_phonemes = 3;
  c.max_phonemes = 8;
  c.min_frames_per_phoneme = 4;
  c.max_frames_per_phoneme = 16;
  c.seed = seed + 20;
  return make_trial_set(world, c);
}

int run_bench(const EvalArgs& a) {
  const auto base = a.dec.decoder();
  const auto fusion = a.dec.weights();
  if (a.w_scoring_sweep.empty()) throw UsageError("bench needs at least one --w-scoring value");
  const auto model = from_container(load_weights_file(a.weights));
  std::vector<Trial> trials;
  std::map<std::string, EnrollmentProfile> profiles;
  StreamResolver resolver;
  std::string source;
  if (!a.trials.empty()) {
    require(a.profiles, "--profiles", "bench");
    trials = read_trial_file(a.trials);
    profiles = load_profile_dir(a.profiles, trials);
    resolver = make_resolver(a.seed, fs::path(a.trials).parent_path().string());
    source = a.trials;
  } else {
    const auto world = make_world(world_config(a.seed));
    const auto set = bench_trial_set(world, a.seed);
    trials = set.trials;
    for (const auto& kw : set.keywords)
      profiles.emplace(kw.keyword_id, make_profile(kw.keyword_id, synth_stream(world, kw.audio_source), kw.tokens, model));
    resolver = make_resolver(a.seed);
    source = "synthetic";
  }
  std::size_t frames = 0;
  for (const auto& t : trials) frames += static_cast<std::size_t>(t.pad_before + t.pad_after);
  for (const auto& t : trials) frames += resolver(t.source).rows();

  const EvalOptions opts{a.seed, a.threads};
  json summary = json::array();
  std::printf("%-10s %-10s %-10s %-10s %-10s %-12s\n", "w_scoring", "eer_all", "eer_easy", "eer_hard", "auc_all",
              "frames/s");
  for (int w : a.w_scoring_sweep) {
    DecoderConfig cfg = base;
    cfg.w_scoring = w;
    try {
      cfg.validate();
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto report = run_trials(trials, profiles, model.encoder, resolver, cfg, fusion, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string text = report_json(report, cfg, fusion, opts) + "\n";
    if (!a.out.empty()) write_text(fs::path(a.out) / ("bench_w" + std::to_string(w) + ".json"), text);
    const auto& m = report.metrics.at("fused");
    auto val = [](const std::optional<double>& v) { return v ? *v : -1.0; };
    const double fps = secs > 0 ? static_cast<double>(frames) / secs : 0.0;
    std::printf("%-10d %-10.4f %-10.4f %-10.4f %-10.4f %-12.0f\n", w, val(m.at("all").eer), val(m.at("easy").eer),
                val(m.at("hard").eer), val(m.at("all").auc), fps);
    summary.push_back(json::parse(text));
    summary.back()["trials"] = source;
    summary.back()["seconds"] = secs;
    summary.back()["frames_per_second"] = fps;
  }
  if (!a.out.empty()) write_text(fs::path(a.out) / "bench_summary.json", summary.dump(2) + "\n");
  return 0;
}

struct DumpArgs {
  std::string weights, profile, input, out, modality = "audio";
  uint64_t seed = 1;
  DecoderOptions dec;
};

int run_dump_similarity(const DumpArgs& a) {
  const auto cfg = a.dec.decoder();
  const auto model = from_container(load_weights_file(a.weights));
  const auto profile = load_profile_file(a.profile);
  const std::optional<EmbeddingSequence>* e = nullptr;
  if (a.modality == "audio") e = &profile.audio;
  else if (a.modality == "text") e = &profile.text;
  else if (a.modality == "mixed") e = &profile.mixed;
  else throw UsageError("--modality must be audio, text or mixed");
  if (!e->has_value()) throw std::runtime_error("profile has no " + a.modality + " embedding");
  const auto stream = dfsmn_forward(make_resolver(a.seed)(a.input), model.encoder);
  const auto sims = similarity_matrix(**e, stream.values, cfg.sim_floor);
  if (a.out.empty()) {
    write_similarity_csv(std::cout, sims);
  } else {
    auto os = open_out(a.out);
    write_similarity_csv(os, sims);
  }
  return 0;
}

json print_config(const std::string& sub, const std::string& weights, const DecoderOptions* dec,
                  const TrainToyArgs* train) {
  json j;
  j["subcommand"] = sub;
  if (dec) {
    j["decoder"] = decoder_json(dec->decoder());
    j["fusion"] = fusion_json(dec->weights());
  }
  if (train) j["train_toy"] = train_toy_config(*train);
  if (!weights.empty()) j["model"] = model_json(infer_config(load_weights_file(weights)));
  j["full_preset"] = model_json(ModelConfig::full_preset());
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamkws: streaming open-vocabulary keyword spotting"};
  app.require_subcommand(0, 1);
  bool show_config = false;
  app.add_flag("--print-config", show_config, "Print the resolved configuration and exit");

  TrainToyArgs train;
  auto* train_cmd = app.add_subcommand("train-toy", "Train on the synthetic corpus and write a demo setup");
  add_train_toy(train_cmd, train);

  EnrollArgs enroll;
  auto* enroll_cmd = app.add_subcommand("enroll", "Build an enrollment profile");
  enroll_cmd->add_option("--weights", enroll.weights, "SNW1 weights")->required()->check(CLI::ExistingFile);
  enroll_cmd->add_option("--keyword", enroll.keyword, "Keyword id")->required();
  enroll_cmd->add_option("--audio", enroll.audio, "Enrollment audio (.wav, feature .csv or SYNTH:...)");
  enroll_cmd->add_option("--tokens", enroll.tokens, "Phone tokens (ids or ARPAbet, comma separated)");
  enroll_cmd->add_option("--out", enroll.out, "Output profile")->required();
  enroll_cmd->add_option("--seed", enroll.seed, "Synthetic world seed")->capture_default_str();
  enroll.dec.add(enroll_cmd, false);

  DetectArgs detect;
  auto* detect_cmd = app.add_subcommand("detect", "Stream an input and print per-frame scores");
  detect_cmd->add_option("--weights", detect.weights, "SNW1 weights")->required()->check(CLI::ExistingFile);
  detect_cmd->add_option("--profile", detect.profile, "SNP1 profile")->required()->check(CLI::ExistingFile);
  detect_cmd->add_option("--input", detect.input, "Stream (.wav, feature .csv or SYNTH:...)")->required();
  detect_cmd->add_option("--chunk-frames", detect.chunk_frames, "Frames per chunk")->capture_default_str();
  detect_cmd->add_option("--out", detect.out, "CSV output (default stdout)");
  detect_cmd->add_option("--seed", detect.seed, "Synthetic world seed")->capture_default_str();
  detect.dec.add(detect_cmd);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a trial list and report EER/AUC");
  eval_cmd->add_option("--weights", eval.weights, "SNW1 weights")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--trials", eval.trials, "Trial TSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--profiles", eval.profiles, "Directory of <keyword_id>.snp")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--report", eval.report, "JSON report (default stdout)");
  eval_cmd->add_option("--seed", eval.seed, "Padding and synthetic world seed")->capture_default_str();
  eval_cmd->add_option("--threads", eval.threads, "Worker threads (0 = all cores)")->capture_default_str();
  eval.dec.add(eval_cmd);

  EvalArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Sweep the scoring window and time the decoder");
  bench_cmd->add_option("--weights", bench.weights, "SNW1 weights")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--trials", bench.trials, "Trial TSV (default: synthetic length-mismatched set)")
      ->check(CLI::ExistingFile);
  bench_cmd->add_option("--profiles", bench.profiles, "Directory of <keyword_id>.snp")
      ->check(CLI::ExistingDirectory);
  bench_cmd->add_option("--out", bench.out, "Directory for one report per setting");
  bench_cmd->add_option("--seed", bench.seed, "Padding and synthetic world seed")->capture_default_str();
  bench_cmd->add_option("--threads", bench.threads, "Worker threads (0 = all cores)")->capture_default_str();
  bench.dec.add(bench_cmd);
  bench_cmd->remove_option(bench_cmd->get_option("--w-scoring"));
  bench_cmd->add_option("--w-scoring", bench.w_scoring_sweep, "Scoring windows to sweep")
      ->delimiter(',')
      ->capture_default_str();

  DumpArgs dump;
  auto* dump_cmd = app.add_subcommand("dump-similarity", "Write the raw similarity matrix as CSV");
  dump_cmd->add_option("--weights", dump.weights, "SNW1 weights")->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--profile", dump.profile, "SNP1 profile")->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--input", dump.input, "Stream (.wav, feature .csv or SYNTH:...)")->required();
  dump_cmd->add_option("--modality", dump.modality, "audio, text or mixed")->capture_default_str();
  dump_cmd->add_option("--out", dump.out, "CSV output (default stdout)");
  dump_cmd->add_option("--seed", dump.seed, "Synthetic world seed")->capture_default_str();
  dump.dec.add(dump_cmd, false);

  // --print-config must not trip the required-option checks.
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--print-config") {
      for (auto* sub : app.get_subcommands({}))
        for (auto* opt : sub->get_options()) opt->required(false);
      break;
    }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto subs = app.get_subcommands();
    const std::string sub = subs.empty() ? "" : subs.front()->get_name();
    if (show_config) {
      const DecoderOptions* dec = nullptr;
      std::string weights;
      if (sub == "enroll") dec = &enroll.dec, weights = enroll.weights;
      if (sub == "detect") dec = &detect.dec, weights = detect.weights;
      if (sub == "evaluate") dec = &eval.dec, weights = eval.weights;
      if (sub == "bench") dec = &bench.dec, weights = bench.weights;
      if (sub == "dump-similarity") dec = &dump.dec, weights = dump.weights;
      std::cout << print_config(sub.empty() ? "none" : sub, weights, dec, sub == "train-toy" ? &train : nullptr)
                       .dump(2)
                << "\n";
      return 0;
    }
    if (sub.empty()) {
      std::cerr << app.help();
      return 1;
    }
    if (sub == "train-toy") return run_train_toy(train);
    if (sub == "enroll") return run_enroll(enroll);
    if (sub == "detect") return run_detect(detect);
    if (sub == "evaluate") return run_evaluate(eval);
    if (sub == "bench") return run_bench(bench);
    return run_dump_similarity(dump);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
