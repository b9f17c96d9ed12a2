// src/features.cc
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

#include "streamkws/features.h"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace kws {

namespace {

uint32_t read_u32(std::span<const uint8_t> b, std::size_t off) {
  return uint32_t(b[off]) | (uint32_t(b[off + 1]) << 8) |
         (uint32_t(b[off + 2]) << 16) | (uint32_t(b[off + 3]) << 24);
}

uint16_t read_u16(std::span<const uint8_t> b, std::size_t off) {
  return uint16_t(b[off] | (b[off + 1] << 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
}

bool is_power_of_two(std::size_t n) { return n && !(n & (n - 1)); }

}  // namespace

void FbankConfig::validate(int sample_rate) const {
  if (frame_shift < 1 || frame_len < frame_shift || n_fft < frame_len)
    throw std::invalid_argument("fbank: need frame_shift <= frame_len <= n_fft");
  if (!is_power_of_two(static_cast<std::size_t>(n_fft)))
    throw std::invalid_argument("fbank: n_fft must be a power of two");
  if (n_mels < 1) throw std::invalid_argument("fbank: n_mels must be >= 1");
  if (!(mel_low >= 0 && mel_low < mel_high && mel_high <= sample_rate / 2.0))
    throw std::invalid_argument("fbank: need 0 <= mel_low < mel_high <= sample_rate/2");
  if (!(log_floor > 0)) throw std::invalid_argument("fbank: log_floor must be > 0");
}

PcmAudio decode_wav(std::span<const uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("wav: bad magic (expected RIFF/WAVE)");

  bool have_fmt = false;
  uint16_t channels = 0, bits = 0;
  uint32_t rate = 0;
  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const uint32_t chunk_size = read_u32(bytes, off + 4);
    const std::size_t body = off + 8;
    if (std::memcmp(bytes.data() + off, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + 16 > bytes.size())
        throw std::runtime_error("wav: short read in fmt chunk");
      const uint16_t format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      bits = read_u16(bytes, body + 14);
      if (format != 1) throw std::runtime_error("wav: unsupported format (PCM only)");
      if (channels != 1)
        throw std::runtime_error("wav: unsupported channel count " + std::to_string(channels));
      if (bits != 16)
        throw std::runtime_error("wav: unsupported bits per sample " + std::to_string(bits));
      if (rate != kSampleRate)
        throw std::runtime_error("wav: unsupported sample rate " + std::to_string(rate) +
                                 " (expected 16000)");
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + off, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("wav: data chunk before fmt chunk");
      if (chunk_size % 2 != 0) throw std::runtime_error("wav: odd data chunk size");
      if (body + chunk_size > bytes.size())
        throw std::runtime_error("wav: short read in data chunk");
      PcmAudio audio;
      audio.sample_rate = static_cast<int>(rate);
      audio.samples.resize(chunk_size / 2);
      for (std::size_t i = 0; i < audio.samples.size(); ++i)
        audio.samples[i] = static_cast<int16_t>(read_u16(bytes, body + 2 * i));
      return audio;
    }
    off = body + chunk_size + (chunk_size & 1);
  }
  throw std::runtime_error(have_fmt ? "wav: missing data chunk" : "wav: missing fmt chunk");
}

PcmAudio read_wav_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

std::vector<uint8_t> encode_wav(const PcmAudio& audio) {
  std::vector<uint8_t> out;
  const uint32_t data_bytes = static_cast<uint32_t>(audio.samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<uint32_t>(audio.sample_rate));
  put_u32(out, static_cast<uint32_t>(audio.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (int16_t s : audio.samples) put_u16(out, static_cast<uint16_t>(s));
  return out;
}

void write_wav_file(const std::string& path, const PcmAudio& audio) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  auto bytes = encode_wav(audio);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
}

int num_frames(std::size_t n_samples, const FbankConfig& cfg) {
  if (n_samples < static_cast<std::size_t>(cfg.frame_len)) return 0;
  return 1 + static_cast<int>((n_samples - cfg.frame_len) / cfg.frame_shift);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(const FbankConfig& cfg) {
  const double lo = hz_to_mel(cfg.mel_low), hi = hz_to_mel(cfg.mel_high);
  const double step = (hi - lo) / (cfg.n_mels + 1);
  std::vector<double> centers(cfg.n_mels);
  for (int m = 0; m < cfg.n_mels; ++m) centers[m] = mel_to_hz(lo + (m + 1) * step);
  return centers;
}

Matrix mel_filterbank(const FbankConfig& cfg, int sample_rate) {
  cfg.validate(sample_rate);
  const int n_bins = cfg.n_fft / 2 + 1;
  const double lo = hz_to_mel(cfg.mel_low), hi = hz_to_mel(cfg.mel_high);
  const double step = (hi - lo) / (cfg.n_mels + 1);
  Matrix bank(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = lo + m * step, center = left + step, right = center + step;
    for (int k = 0; k < n_bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * sample_rate / cfg.n_fft);
      double w = 0;
      if (mel > left && mel <= center)
        w = (mel - left) / step;
      else if (mel > center && mel < right)
        w = (right - mel) / step;
      bank(m, k) = static_cast<float>(w);
    }
  }
  return bank;
}

void fft_inplace(std::vector<std::complex<double>>& data) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = data[i + k];
        const auto v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

FeatureSequence fbank(const PcmAudio& audio, const FbankConfig& cfg) {
  if (audio.sample_rate != kSampleRate)
    throw std::invalid_argument("fbank: expected 16 kHz audio");
  cfg.validate(audio.sample_rate);
  const int n_frames = num_frames(audio.samples.size(), cfg);
  if (n_frames < 1)
    throw std::invalid_argument("fbank: audio shorter than one frame (" +
                                std::to_string(audio.samples.size()) + " samples)");

  const Matrix bank = mel_filterbank(cfg, audio.sample_rate);
  const int n_bins = cfg.n_fft / 2 + 1;
  std::vector<double> window(cfg.frame_len);
  for (int i = 0; i < cfg.frame_len; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (cfg.frame_len - 1));

  const double log_floor = std::log(cfg.log_floor);
  FeatureSequence out(n_frames, cfg.n_mels);
  std::vector<double> frame(cfg.frame_len);
  std::vector<std::complex<double>> spec(cfg.n_fft);
  std::vector<double> power(n_bins);
  for (int t = 0; t < n_frames; ++t) {
    const int16_t* src = audio.samples.data() + static_cast<std::size_t>(t) * cfg.frame_shift;
    for (int i = 0; i < cfg.frame_len; ++i) frame[i] = src[i];
    // Kaldi-style: first sample is pre-emphasized against itself.
    for (int i = cfg.frame_len - 1; i > 0; --i) frame[i] -= cfg.preemphasis * frame[i - 1];
    frame[0] -= cfg.preemphasis * frame[0];

    std::fill(spec.begin(), spec.end(), std::complex<double>(0.0, 0.0));
    for (int i = 0; i < cfg.frame_len; ++i) spec[i] = frame[i] * window[i];
    fft_inplace(spec);
    for (int k = 0; k < n_bins; ++k) power[k] = std::norm(spec[k]);

    for (int m = 0; m < cfg.n_mels; ++m) {
      double e = 0;
      for (int k = 0; k < n_bins; ++k) e += bank(m, k) * power[k];
      out(t, m) = static_cast<float>(e > cfg.log_floor ? std::log(e) : log_floor);
    }
  }
  return out;
}

void write_feature_csv(std::ostream& os, const FeatureSequence& feats) {
  os << std::fixed << std::setprecision(6);
  for (std::size_t t = 0; t < feats.rows(); ++t) {
    for (std::size_t c = 0; c < feats.cols(); ++c) {
      if (c) os << ',';
      os << feats(t, c);
    }
    os << '\n';
  }
}

FeatureSequence read_feature_csv(std::istream& is) {
  FeatureSequence feats;
  std::string line;
  std::vector<float> row;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    row.clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stof(cell, &used));
      } catch (const std::exception&) {
        throw std::runtime_error("feature csv: bad number on line " + std::to_string(line_no));
      }
    }
    if (feats.rows() > 0 && row.size() != feats.cols())
      throw std::runtime_error("feature csv: ragged row on line " + std::to_string(line_no));
    feats.append_row(row);
  }
  if (feats.rows() == 0) throw std::runtime_error("feature csv: no frames");
  return feats;
}

FeatureSequence read_feature_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_feature_csv(is);
}

FeatureSequence load_features(const std::string& path, const FbankConfig& cfg) {
  auto ends_with = [&](const char* ext) {
    const std::size_t n = std::strlen(ext);
    return path.size() >= n && path.compare(path.size() - n, n, ext) == 0;
  };
  if (ends_with(".wav") || ends_with(".WAV")) return fbank(read_wav_file(path), cfg);
  return read_feature_csv_file(path);
}

}  // namespace kws
