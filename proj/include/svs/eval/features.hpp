#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "svs/dsp/features.hpp"
#include "svs/dsp/pitch.hpp"
#include "svs/dsp/stft.hpp"

namespace svs::eval {

// Shared tracker settings for every style/timbre measurement: the 512-sample
// window keeps fast-vibrato extent attenuation under ~5%, and fmin 100 Hz
// still clears the lowest corpus pitch after its onset dip.
inline dsp::PitchContour track_pitch(const dsp::AudioClip& clip) {
  return dsp::estimate_f0(clip, 256, 512, 100.0, 1500.0);
}

struct TimbreMeasure {
  double centroid_hz = 0;
  double f1_hz = 0;
  double f2_hz = 0;
};

struct StyleMeasure {
  double rate_hz = 0;
  double extent_cents = 0;
  double glide_ms = 0;
};

// Spectrogram with per-clip normalization. Measurement only needs the
// log-magnitude round trip, not corpus-comparable values.
inline dsp::LinearSpectrogram clip_spectrogram(const dsp::AudioClip& clip) {
  Tensor mag = dsp::magnitude_stft(clip, 1024, 256);
  double lo = 1e300, hi = -1e300;
  for (Real m : mag.v) {
    const double l = std::log(dsp::kLogFloor + m);
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  dsp::LinearSpectrogram s;
  s.hop_samples = 256;
  s.norm = {static_cast<Real>(lo), static_cast<Real>(hi)};
  s.values = Tensor(mag.shape);
  for (size_t i = 0; i < mag.v.size(); ++i)
    s.values.v[i] = dsp::normalize_log_value(mag.v[i], s.norm);
  return s;
}

// Spectral centroid plus the first two formant peaks, averaged over voiced
// frames. Formants are read from harmonic tooth tops: the vocal-tract
// envelope is only observable where harmonics sample it, so the mean log
// spectrum is probed at multiples of the tracked fundamental and resonances
// appear as prominent local maxima of that tooth sequence. Unlike a
// liftered envelope this stays stable under steep spectral tilt, where a
// loud fundamental otherwise shadows F1 and drags the peak filters off.
// Throws InsufficientData when the clip has no usable voiced content or
// fewer than two resonances stand out.
inline TimbreMeasure measure_timbre(const dsp::AudioClip& clip) {
  const auto contour = track_pitch(clip);
  const auto spec = clip_spectrogram(clip);
  const int bins = spec.n_bins();
  const double bin_hz = 22050.0 / 1024.0;
  std::vector<int> voiced;
  std::vector<Real> f0s;
  for (size_t i = 0; i < contour.f0_hz.size(); ++i)
    if (contour.f0_hz[i] > 0 && static_cast<int>(i) < spec.n_frames()) {
      voiced.push_back(static_cast<int>(i));
      f0s.push_back(contour.f0_hz[i]);
    }
  if (voiced.empty()) throw InsufficientData("measure_timbre: no voiced frames");
  std::nth_element(f0s.begin(), f0s.begin() + f0s.size() / 2, f0s.end());
  const double f0_med = f0s[f0s.size() / 2];

  // Magnitude-weighted mean frequency and the mean log spectrum in one pass.
  double centroid_acc = 0.0;
  int centroid_frames = 0;
  std::vector<double> mean_log(static_cast<size_t>(bins), 0.0);
  for (int f : voiced) {
    double num = 0.0, den = 0.0;
    for (int b = 0; b < bins; ++b) {
      const double logmag =
          spec.norm.lo + spec.values.at(b, f) * (spec.norm.hi - spec.norm.lo);
      const double mag = std::max(0.0, std::exp(logmag) - dsp::kLogFloor);
      num += b * bin_hz * mag;
      den += mag;
      mean_log[static_cast<size_t>(b)] += logmag;
    }
    if (den > 1e-12) {
      centroid_acc += num / den;
      ++centroid_frames;
    }
  }
  if (centroid_frames == 0)
    throw InsufficientData("measure_timbre: voiced frames carry no energy");
  const double centroid = centroid_acc / centroid_frames;
  for (auto& x : mean_log) x /= static_cast<double>(voiced.size());

  // Tooth tops: the strongest bin within a third of f0 around each harmonic,
  // which tolerates vibrato smear and tracker bias. Scan stops at 5 kHz.
  std::vector<double> tooth;
  for (int k = 1; k * f0_med < 5000.0; ++k) {
    const int b0 = std::max(0, static_cast<int>((k * f0_med - f0_med / 3.0) / bin_hz));
    const int b1 = std::min(bins - 1, static_cast<int>((k * f0_med + f0_med / 3.0) / bin_hz) + 1);
    if (b0 > b1) break;
    double top = mean_log[static_cast<size_t>(b0)];
    for (int b = b0; b <= b1; ++b) top = std::max(top, mean_log[static_cast<size_t>(b)]);
    tooth.push_back(top);
  }

  // Remove the per-octave trend (spectral tilt plus source rolloff) so
  // resonances stand out as bumps whatever the slope. Without this a steep
  // tilt merges F1 into the fundamental's tail and its prominence collapses.
  const int n_tooth = static_cast<int>(tooth.size());
  if (n_tooth >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n_tooth; ++i) {
      const double x = std::log2(static_cast<double>(i + 1));
      sx += x;
      sy += tooth[static_cast<size_t>(i)];
      sxx += x * x;
      sxy += x * tooth[static_cast<size_t>(i)];
    }
    const double det = n_tooth * sxx - sx * sx;
    if (std::abs(det) > 1e-12) {
      const double b = (n_tooth * sxy - sx * sy) / det;
      const double a = (sy - b * sx) / n_tooth;
      for (int i = 0; i < n_tooth; ++i)
        tooth[static_cast<size_t>(i)] -= a + b * std::log2(static_cast<double>(i + 1));
    }
  }

  // Local maxima of the detrended sequence, refined parabolically and
  // ranked by detrended height: resonances top that ranking while noise
  // shelf wiggles stay well below, which a prominence cut cannot promise
  // when a formant rides the shelf or the fundamental's tail. The first
  // harmonic is an endpoint, not a candidate: a maximum there reads tilt,
  // not resonance.
  struct Peak {
    double freq, height;
  };
  std::vector<Peak> peaks;
  for (int k = 1; k + 1 < n_tooth; ++k) {
    if (!(tooth[static_cast<size_t>(k)] > tooth[static_cast<size_t>(k - 1)] &&
          tooth[static_cast<size_t>(k)] >= tooth[static_cast<size_t>(k + 1)]))
      continue;
    const double y0 = tooth[static_cast<size_t>(k - 1)];
    const double y1 = tooth[static_cast<size_t>(k)];
    const double y2 = tooth[static_cast<size_t>(k + 1)];
    if (y1 - std::min(y0, y2) < 0.05) continue;  // flat-plateau float ties
    const double denom = y0 - 2.0 * y1 + y2;
    const double off = std::abs(denom) > 1e-12 ? 0.5 * (y0 - y2) / denom : 0.0;
    peaks.push_back({(k + 1 + off) * f0_med, y1});
  }
  std::sort(peaks.begin(), peaks.end(),
            [](const Peak& a, const Peak& b) { return a.height > b.height; });
  if (peaks.size() > 2) peaks.resize(2);
  std::sort(peaks.begin(), peaks.end(),
            [](const Peak& a, const Peak& b) { return a.freq < b.freq; });
  if (peaks.size() < 2)
    throw InsufficientData("measure_timbre: fewer than two formant peaks");
  return {centroid, peaks[0].freq, peaks[1].freq};
}

inline StyleMeasure measure_style(const dsp::AudioClip& clip) {
  const auto st = dsp::vibrato_features(track_pitch(clip));
  return {static_cast<double>(st.rate_hz), static_cast<double>(st.extent_cents),
          static_cast<double>(st.onset_glide_ms)};
}

}  // namespace svs::eval
