// include/streamkws/features.h
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

#ifndef STREAMKWS_FEATURES_H_
#define STREAMKWS_FEATURES_H_

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "streamkws/numkit.h"

namespace kws {

inline constexpr int kSampleRate = 16000;

struct PcmAudio {
  int sample_rate = kSampleRate;
  std::vector<int16_t> samples;
};

struct FbankConfig {
  int frame_len = 400;
  int frame_shift = 160;
  int n_fft = 512;
  int n_mels = 40;
  double preemphasis = 0.97;
  double mel_low = 20.0;
  double mel_high = 8000.0;
  double log_floor = 1e-10;

  // Throws std::invalid_argument when the framing or mel range is inconsistent.
  void validate(int sample_rate = kSampleRate) const;
};

// Frames x n_mels log energies. Also used for any frame-major feature input
// (synthetic corpora included).
using FeatureSequence = Matrix;

// Parses a RIFF/WAVE PCM-16 mono 16 kHz file. Throws std::runtime_error with
// a descriptive message otherwise; no resampling is attempted.
PcmAudio decode_wav(std::span<const uint8_t> bytes);
PcmAudio read_wav_file(const std::string& path);

std::vector<uint8_t> encode_wav(const PcmAudio& audio);
void write_wav_file(const std::string& path, const PcmAudio& audio);

// 1 + floor((n_samples - frame_len) / frame_shift), or 0 if too short.
int num_frames(std::size_t n_samples, const FbankConfig& cfg);

// Mel scale used by the filterbank: 2595 * log10(1 + f / 700).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filter weights, n_mels x (n_fft / 2 + 1).
Matrix mel_filterbank(const FbankConfig& cfg, int sample_rate = kSampleRate);

// Center frequency in Hz of each mel filter.
std::vector<double> mel_center_frequencies(const FbankConfig& cfg);

// In-place iterative radix-2 FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& data);

FeatureSequence fbank(const PcmAudio& audio, const FbankConfig& cfg = {});

// CSV, one frame per line, 6 decimal places.
void write_feature_csv(std::ostream& os, const FeatureSequence& feats);
FeatureSequence read_feature_csv(std::istream& is);
FeatureSequence read_feature_csv_file(const std::string& path);

// Loads features from either a .wav (computes fbank) or a feature .csv.
FeatureSequence load_features(const std::string& path, const FbankConfig& cfg = {});

}  // namespace kws

#endif  // STREAMKWS_FEATURES_H_
