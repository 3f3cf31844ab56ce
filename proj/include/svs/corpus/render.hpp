#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "svs/core/rng.hpp"
#include "svs/corpus/types.hpp"
#include "svs/dsp/fft.hpp"
#include "svs/dsp/types.hpp"

namespace svs::corpus {

constexpr int kRenderSampleRate = 22050;
constexpr int kFrameSamples = 1024;  // mel hop; every note spans whole frames

namespace detail {

// Two-resonance vocal-tract magnitude response. Each resonance peaks at
// gain F/B, which keeps formants prominent against the 1/sqrt(k) source
// rolloff; a small floor keeps the spectrum nonzero between peaks.
inline double resonance_gain(double f, double center, double bandwidth) {
  const double x = (f * f - center * center) / (center * bandwidth);
  return (center / bandwidth) / std::sqrt(x * x + 1.0);
}

inline double vocal_tract_gain(double f, const VowelTemplate& vowel,
                               const SingerProfile& profile) {
  if (f <= 0.0) return 0.0;
  const double f1 = vowel.f1 * profile.formant_shift_ratio;
  const double f2 = vowel.f2 * profile.formant_shift_ratio;
  double g = 0.05 + resonance_gain(f, f1, kFormantB1) + resonance_gain(f, f2, kFormantB2);
  // Spectral tilt relative to 500 Hz.
  g *= std::pow(10.0, profile.spectral_tilt_db_per_oct * std::log2(f / 500.0) / 20.0);
  return g;
}

// Deviation from the note's target pitch, in cents, at `t` seconds after
// note onset. Notes scoop in from 200 cents below and settle inside
// +/-30 cents at t = onset_glide_ms; vibrato fades in after its delay.
inline double pitch_deviation_cents(double t, const SingerProfile& profile) {
  const double tau = profile.onset_glide_ms * 1e-3 / std::log(200.0 / 30.0);
  double dev = -200.0 * std::exp(-t / tau);
  const double delay = profile.vibrato_onset_delay_ms * 1e-3;
  if (t > delay) {
    const double ramp = std::min(1.0, (t - delay) / 0.150);
    dev += profile.vibrato_extent_cents * ramp *
           std::sin(2.0 * dsp::kPi * profile.vibrato_rate_hz * (t - delay));
  }
  return dev;
}

// Breathiness component: white noise shaped by the same vocal-tract
// response, overlap-added with a Hann window so the level is steady.
inline void add_shaped_noise(std::vector<double>& out, size_t begin, size_t len,
                             const VowelTemplate& vowel, const SingerProfile& profile,
                             double gain, Rng rng) {
  if (gain <= 0.0 || len == 0) return;
  const int n_fft = 1024;
  const int hop = n_fft / 2;
  const int bins = n_fft / 2 + 1;
  std::vector<double> shape(static_cast<size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    const double f = static_cast<double>(b) * kRenderSampleRate / n_fft;
    shape[static_cast<size_t>(b)] = vocal_tract_gain(f, vowel, profile);
  }
  std::vector<double> window(static_cast<size_t>(n_fft));
  for (int i = 0; i < n_fft; ++i)
    window[static_cast<size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * dsp::kPi * i / n_fft);

  std::vector<double> acc(len + static_cast<size_t>(n_fft), 0.0);
  std::vector<double> wsum(len + static_cast<size_t>(n_fft), 0.0);
  std::vector<dsp::cplx> frame(static_cast<size_t>(n_fft));
  for (size_t start = 0; start < len; start += static_cast<size_t>(hop)) {
    for (int i = 0; i < n_fft; ++i)
      frame[static_cast<size_t>(i)] =
          (2.0 * rng.uniform01() - 1.0) * window[static_cast<size_t>(i)];
    dsp::fft_inplace(frame, false);
    for (int b = 0; b < bins; ++b) {
      frame[static_cast<size_t>(b)] *= shape[static_cast<size_t>(b)];
      if (b > 0 && b < n_fft / 2)
        frame[static_cast<size_t>(n_fft - b)] = std::conj(frame[static_cast<size_t>(b)]);
    }
    frame[static_cast<size_t>(n_fft / 2)] =
        std::abs(frame[static_cast<size_t>(n_fft / 2)]);
    dsp::fft_inplace(frame, true);
    for (int i = 0; i < n_fft; ++i) {
      acc[start + static_cast<size_t>(i)] +=
          frame[static_cast<size_t>(i)].real() * window[static_cast<size_t>(i)];
      wsum[start + static_cast<size_t>(i)] +=
          window[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
    }
  }
  double power = 0.0;
  for (size_t i = 0; i < len; ++i) {
    acc[i] /= std::max(wsum[i], 1e-9);
    power += acc[i] * acc[i];
  }
  const double rms = std::sqrt(power / static_cast<double>(len));
  if (rms <= 0.0) return;
  const double scale = gain / rms;
  for (size_t i = 0; i < len; ++i) out[begin + i] += scale * acc[i];
}

}  // namespace detail

// Renders a score with a singer's timbre and style parameters. The output is
// exactly total_frames * 1024 samples at 22050 Hz, peak-normalized to 0.9.
// Harmonic phase is accumulated across the whole song, so legato note
// boundaries stay click-free; rests get short attack/release ramps instead.
inline dsp::AudioClip render_song(const ScoreSequence& score, const SingerProfile& profile,
                                  std::uint64_t seed) {
  if (score.notes.empty()) throw InvalidInput("render_song: empty score");
  for (const auto& e : score.notes) {
    if (e.duration_frames < 2)
      throw InvalidInput("render_song: note shorter than 2 frames");
    if (e.phoneme != "-") {
      phoneme_id(e.phoneme);  // validates the symbol
      if (e.midi_pitch < kMidiLow || e.midi_pitch > kMidiHigh)
        throw InvalidInput("render_song: midi pitch out of range");
    }
  }

  const double sr = kRenderSampleRate;
  const size_t total = static_cast<size_t>(score.total_frames()) * kFrameSamples;
  std::vector<double> out(total, 0.0);

  Rng rng(seed);
  constexpr int kEnvStep = 64;     // harmonic amplitudes updated every 64 samples
  constexpr double kMaxHz = 8000;  // harmonics above this are negligible after tilt
  const int attack = static_cast<int>(0.015 * sr);
  const int release = static_cast<int>(0.020 * sr);

  double phase = 0.0;  // base phase; harmonic k uses k * phase
  size_t cursor = 0;
  for (size_t ni = 0; ni < score.notes.size(); ++ni) {
    const auto& note = score.notes[ni];
    const size_t len = static_cast<size_t>(note.duration_frames) * kFrameSamples;
    if (note.phoneme == "-") {
      cursor += len;
      continue;
    }
    const bool after_rest = ni == 0 || score.notes[ni - 1].phoneme == "-";
    const bool before_rest =
        ni + 1 == score.notes.size() || score.notes[ni + 1].phoneme == "-";
    const auto& vowel = vowel_table()[static_cast<size_t>(phoneme_id(note.phoneme) - 1)];
    const double base_hz = midi_to_hz(note.midi_pitch);

    const int n_harm = std::max(1, static_cast<int>(kMaxHz / base_hz));
    std::vector<double> amps(static_cast<size_t>(n_harm), 0.0);
    double f0 = base_hz;
    for (size_t i = 0; i < len; ++i) {
      const double t = static_cast<double>(i) / sr;
      if (i % kEnvStep == 0) {
        f0 = base_hz * std::pow(2.0, detail::pitch_deviation_cents(t, profile) / 1200.0);
        for (int k = 1; k <= n_harm; ++k) {
          const double fk = f0 * k;
          amps[static_cast<size_t>(k - 1)] =
              fk < kMaxHz
                  ? detail::vocal_tract_gain(fk, vowel, profile) / std::sqrt(double(k))
                  : 0.0;
        }
      }
      phase += 2.0 * dsp::kPi * f0 / sr;
      double s = 0.0;
      for (int k = 1; k <= n_harm; ++k)
        s += amps[static_cast<size_t>(k - 1)] * std::sin(k * phase);
      double ramp = 1.0;
      if (after_rest && i < static_cast<size_t>(attack))
        ramp *= static_cast<double>(i) / attack;
      if (before_rest && i + static_cast<size_t>(release) >= len)
        ramp *= static_cast<double>(len - i) / release;
      out[cursor + i] = s * ramp;
    }

    if (profile.breathiness > 0.0) {
      double power = 0.0;
      for (size_t i = 0; i < len; ++i) power += out[cursor + i] * out[cursor + i];
      const double harm_rms = std::sqrt(power / static_cast<double>(len));
      detail::add_shaped_noise(out, cursor, len, vowel, profile,
                               0.4 * profile.breathiness * harm_rms,
                               rng.fork("noise", ni));
    }
    cursor += len;
  }

  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : out) v *= 0.9 / peak;

  dsp::AudioClip clip;
  clip.samples = std::move(out);
  clip.sample_rate = kRenderSampleRate;
  return clip;
}

}  // namespace svs::corpus
