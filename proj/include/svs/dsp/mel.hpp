#pragma once

#include <cmath>

#include "svs/dsp/stft.hpp"
#include "svs/dsp/types.hpp"

namespace svs::dsp {

inline Real hz_to_mel(Real hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline Real mel_to_hz(Real mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelConfig {
  int n_mels = 80;
  int n_fft = 1024;
  int hop = 1024;
  int sample_rate = 22050;
  NormInfo norm;  // corpus-level log-magnitude statistics
};

// Triangular filters on the mel scale, peak-normalized, fmin=0, fmax=sr/2.
// Returns [n_mels x n_bins].
inline Tensor mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  const int bins = n_fft / 2 + 1;
  const Real fmax = sample_rate / 2.0;
  const Real mel_max = hz_to_mel(fmax);
  std::vector<Real> centers(static_cast<size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i)
    centers[static_cast<size_t>(i)] = mel_to_hz(mel_max * i / (n_mels + 1));

  Tensor fb({n_mels, bins});
  for (int m = 0; m < n_mels; ++m) {
    const Real lo = centers[static_cast<size_t>(m)];
    const Real mid = centers[static_cast<size_t>(m + 1)];
    const Real hi = centers[static_cast<size_t>(m + 2)];
    for (int b = 0; b < bins; ++b) {
      const Real f = static_cast<Real>(b) * sample_rate / n_fft;
      Real w = 0.0;
      if (f > lo && f < mid)
        w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        w = (hi - f) / (hi - mid);
      fb.at(m, b) = w;
    }
  }
  return fb;
}

// Center frequency of each mel band in Hz.
inline std::vector<Real> mel_band_centers(int n_mels, int sample_rate) {
  const Real mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<Real> centers(static_cast<size_t>(n_mels));
  for (int m = 0; m < n_mels; ++m)
    centers[static_cast<size_t>(m)] = mel_to_hz(mel_max * (m + 1) / (n_mels + 1));
  return centers;
}

// Unnormalized log mel energies: log(1e-5 + fb . |stft|). Used both for
// fitting corpus statistics and (through normalization) as network input.
inline Tensor mel_log_raw(const AudioClip& clip, const MelConfig& cfg) {
  const Tensor mag = magnitude_stft(clip, cfg.n_fft, cfg.hop);
  const Tensor fb = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate);
  const int n_frames = mag.dim(1);
  const int bins = mag.dim(0);
  Tensor out({cfg.n_mels, n_frames});
  for (int m = 0; m < cfg.n_mels; ++m) {
    const Real* w = fb.row(m);
    for (int f = 0; f < n_frames; ++f) {
      Real acc = 0.0;
      for (int b = 0; b < bins; ++b) acc += w[b] * mag.at(b, f);
      out.at(m, f) = std::log(kLogFloor + acc);
    }
  }
  return out;
}

inline MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelConfig& cfg) {
  if (!cfg.norm.valid()) throw InvalidConfig("mel_spectrogram: normalization statistics missing");
  MelSpectrogram mel;
  mel.hop_samples = cfg.hop;
  mel.norm = cfg.norm;
  mel.values = mel_log_raw(clip, cfg);
  for (auto& x : mel.values.v)
    x = std::clamp((x - cfg.norm.lo) / (cfg.norm.hi - cfg.norm.lo), Real(0), Real(1));
  return mel;
}

}  // namespace svs::dsp
