#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "svs/dsp/fft.hpp"
#include "svs/dsp/types.hpp"

namespace svs::dsp {

// Periodic Hann window.
inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

inline int stft_frame_count(std::int64_t n_samples, int hop) {
  return static_cast<int>((n_samples + hop - 1) / hop);
}

// Reflection indexing that bounces at both ends (no edge repeat), valid for
// any offset.
inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

// STFT with reflection padding chosen so n_frames = ceil(len / hop). Frames
// are returned frame-major: out[f][bin], bin in [0, n_fft/2].
inline std::vector<std::vector<cplx>> stft(const AudioClip& clip, int n_fft, int hop) {
  if (clip.samples.empty()) throw InvalidInput("stft: empty clip");
  if (!is_pow2(n_fft)) throw InvalidConfig("stft: n_fft must be a power of two");
  if (hop <= 0 || hop > n_fft) throw InvalidConfig("stft: need 0 < hop <= n_fft");

  const std::int64_t len = static_cast<std::int64_t>(clip.samples.size());
  const int n_frames = stft_frame_count(len, hop);
  const std::int64_t padded = static_cast<std::int64_t>(n_fft) + static_cast<std::int64_t>(hop) * (n_frames - 1);
  const std::int64_t pad_total = std::max<std::int64_t>(0, padded - len);
  const std::int64_t pad_left = pad_total / 2;

  const auto window = hann_window(n_fft);
  std::vector<std::vector<cplx>> out(static_cast<size_t>(n_frames));
  std::vector<double> frame(static_cast<size_t>(n_fft));
  for (int f = 0; f < n_frames; ++f) {
    const std::int64_t start = static_cast<std::int64_t>(f) * hop - pad_left;
    for (int i = 0; i < n_fft; ++i) {
      const std::int64_t src = reflect_index(start + i, len);
      frame[static_cast<size_t>(i)] = clip.samples[static_cast<size_t>(src)] * window[static_cast<size_t>(i)];
    }
    out[static_cast<size_t>(f)] = rfft(frame);
  }
  return out;
}

// Inverse STFT matching the framing above. out_len defaults to hop * n_frames,
// the length stft() maps onto that frame count without padding loss.
inline AudioClip istft(const std::vector<std::vector<cplx>>& frames, int n_fft, int hop,
                       int sample_rate, std::int64_t out_len = -1) {
  if (frames.empty()) throw InvalidInput("istft: no frames");
  const int n_frames = static_cast<int>(frames.size());
  if (out_len < 0) out_len = static_cast<std::int64_t>(hop) * n_frames;
  const std::int64_t padded = static_cast<std::int64_t>(n_fft) + static_cast<std::int64_t>(hop) * (n_frames - 1);
  const std::int64_t pad_left = std::max<std::int64_t>(0, padded - out_len) / 2;

  const auto window = hann_window(n_fft);
  std::vector<double> acc(static_cast<size_t>(padded), 0.0);
  std::vector<double> wsum(static_cast<size_t>(padded), 0.0);
  for (int f = 0; f < n_frames; ++f) {
    const auto frame = irfft(frames[static_cast<size_t>(f)], n_fft);
    const std::int64_t start = static_cast<std::int64_t>(f) * hop;
    for (int i = 0; i < n_fft; ++i) {
      acc[static_cast<size_t>(start + i)] += frame[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
      wsum[static_cast<size_t>(start + i)] += window[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
    }
  }
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(static_cast<size_t>(out_len), 0.0);
  for (std::int64_t i = 0; i < out_len; ++i) {
    const std::int64_t j = i + pad_left;
    if (j < padded && wsum[static_cast<size_t>(j)] > 1e-9)
      clip.samples[static_cast<size_t>(i)] = acc[static_cast<size_t>(j)] / wsum[static_cast<size_t>(j)];
  }
  return clip;
}

// Magnitudes as a [n_bins x n_frames] tensor.
inline Tensor magnitude_stft(const AudioClip& clip, int n_fft, int hop) {
  const auto spec = stft(clip, n_fft, hop);
  const int bins = n_fft / 2 + 1;
  const int n_frames = static_cast<int>(spec.size());
  Tensor mag({bins, n_frames});
  for (int f = 0; f < n_frames; ++f)
    for (int b = 0; b < bins; ++b)
      mag.at(b, f) = std::abs(spec[static_cast<size_t>(f)][static_cast<size_t>(b)]);
  return mag;
}

inline Real normalize_log_value(Real raw_magnitude, const NormInfo& norm) {
  const Real x = (std::log(kLogFloor + raw_magnitude) - norm.lo) / (norm.hi - norm.lo);
  return std::clamp(x, Real(0), Real(1));
}

inline Real denormalize_to_magnitude(Real value, const NormInfo& norm) {
  const Real logmag = norm.lo + value * (norm.hi - norm.lo);
  return std::max(Real(0), std::exp(logmag) - kLogFloor);
}

// Normalized log-magnitude linear spectrogram (the network's S).
inline LinearSpectrogram linear_spectrogram(const AudioClip& clip, const NormInfo& norm,
                                            int n_fft = 1024, int hop = 256) {
  if (!norm.valid()) throw InvalidConfig("linear_spectrogram: normalization statistics missing");
  LinearSpectrogram s;
  s.hop_samples = hop;
  s.norm = norm;
  s.values = magnitude_stft(clip, n_fft, hop);
  for (auto& x : s.values.v) x = normalize_log_value(x, norm);
  return s;
}

// Frobenius distance between |STFT(clip)| and the denormalized target,
// relative to the target norm. Griffin-Lim's progress measure.
inline Real spectral_convergence(const AudioClip& clip, const LinearSpectrogram& target,
                                 int n_fft = 1024) {
  const Tensor mag = magnitude_stft(clip, n_fft, target.hop_samples);
  if (mag.shape != target.values.shape)
    throw InvalidInput("spectral_convergence: frame count mismatch");
  Real num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < mag.numel(); ++i) {
    const Real a = denormalize_to_magnitude(target.values[i], target.norm);
    const Real d = mag[i] - a;
    num += d * d;
    den += a * a;
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace svs::dsp
