#pragma once

#include <cmath>

#include "svs/core/rng.hpp"
#include "svs/dsp/stft.hpp"

namespace svs::dsp {

// Griffin-Lim phase retrieval with momentum (Perraudin's fast variant) on a
// padded timeline where synthesis and analysis are exact adjoints. Phases
// start from a fixed-seed random draw: zero-phase init is a local optimum
// that snaps tones to multiples of sr/hop (zero phase advance per hop is
// self-consistent only there), audibly detuning them. The returned signal is
// the best iterate by magnitude-consistency distance, so the error is
// non-increasing in n_iters. Deterministic for a given input.
inline AudioClip griffin_lim(const LinearSpectrogram& spec, int n_iters,
                             int sample_rate = 22050, int n_fft = 1024) {
  if (n_iters < 1) throw InvalidConfig("griffin_lim: n_iters must be >= 1");
  if (!spec.norm.valid()) throw InvalidConfig("griffin_lim: spectrogram has no normalization info");
  const int bins = spec.n_bins();
  const int n_frames = spec.n_frames();
  if (bins < 2 || n_frames < 1) throw InvalidInput("griffin_lim: empty spectrogram");
  if (bins != n_fft / 2 + 1) throw InvalidInput("griffin_lim: bin count does not match n_fft");
  const int hop = spec.hop_samples;

  Tensor target({bins, n_frames});
  for (int b = 0; b < bins; ++b)
    for (int f = 0; f < n_frames; ++f)
      target.at(b, f) = denormalize_to_magnitude(spec.values.at(b, f), spec.norm);

  Rng rng = Rng(0x5f3759df).fork("griffin_lim_phase");
  std::vector<std::vector<cplx>> est(static_cast<size_t>(n_frames),
                                     std::vector<cplx>(static_cast<size_t>(bins)));
  for (int f = 0; f < n_frames; ++f)
    for (int b = 0; b < bins; ++b) {
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      est[static_cast<size_t>(f)][static_cast<size_t>(b)] =
          target.at(b, f) * cplx(std::cos(phase), std::sin(phase));
    }

  const auto window = hann_window(n_fft);
  const std::int64_t padded = static_cast<std::int64_t>(n_fft) + static_cast<std::int64_t>(hop) * (n_frames - 1);
  std::vector<double> wsum(static_cast<size_t>(padded), 0.0);
  for (int f = 0; f < n_frames; ++f)
    for (int i = 0; i < n_fft; ++i)
      wsum[static_cast<size_t>(f) * hop + i] += window[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];

  std::vector<double> signal(static_cast<size_t>(padded));
  std::vector<double> frame(static_cast<size_t>(n_fft));
  const auto synthesize = [&] {
    std::fill(signal.begin(), signal.end(), 0.0);
    for (int f = 0; f < n_frames; ++f) {
      const auto time = irfft(est[static_cast<size_t>(f)], n_fft);
      for (int i = 0; i < n_fft; ++i)
        signal[static_cast<size_t>(f) * hop + i] += time[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
    }
    for (std::int64_t i = 0; i < padded; ++i)
      if (wsum[static_cast<size_t>(i)] > 1e-9) signal[static_cast<size_t>(i)] /= wsum[static_cast<size_t>(i)];
  };

  // Momentum on the rebuilt (consistent) spectrograms, librosa-style:
  // phase(rebuilt - beta * previous_rebuilt), beta = alpha / (1 + alpha).
  const double beta = 0.99 / 1.99;
  std::vector<std::vector<cplx>> prev_rebuilt(static_cast<size_t>(n_frames),
                                              std::vector<cplx>(static_cast<size_t>(bins), cplx(0, 0)));
  std::vector<double> best_signal;
  double best_dist = 1e300;
  for (int it = 0; it < n_iters; ++it) {
    synthesize();
    double dist = 0.0;
    for (int f = 0; f < n_frames; ++f) {
      for (int i = 0; i < n_fft; ++i)
        frame[static_cast<size_t>(i)] =
            signal[static_cast<size_t>(f) * hop + i] * window[static_cast<size_t>(i)];
      const auto rebuilt = rfft(frame);
      for (int b = 0; b < bins; ++b) {
        const cplx r = rebuilt[static_cast<size_t>(b)];
        const double dm = std::abs(r) - target.at(b, f);
        dist += dm * dm;
        const cplx z = r - beta * prev_rebuilt[static_cast<size_t>(f)][static_cast<size_t>(b)];
        const double m = std::abs(z);
        est[static_cast<size_t>(f)][static_cast<size_t>(b)] =
            m > 1e-12 ? z / m * target.at(b, f) : cplx(target.at(b, f), 0.0);
        prev_rebuilt[static_cast<size_t>(f)][static_cast<size_t>(b)] = r;
      }
    }
    if (dist < best_dist) {
      best_dist = dist;
      best_signal = signal;
    }
  }
  synthesize();
  {
    // The final synthesis may sit above the best iterate; keep the best.
    double dist = 0.0;
    for (int f = 0; f < n_frames; ++f) {
      for (int i = 0; i < n_fft; ++i)
        frame[static_cast<size_t>(i)] =
            signal[static_cast<size_t>(f) * hop + i] * window[static_cast<size_t>(i)];
      const auto rebuilt = rfft(frame);
      for (int b = 0; b < bins; ++b) {
        const double dm = std::abs(rebuilt[static_cast<size_t>(b)]) - target.at(b, f);
        dist += dm * dm;
      }
    }
    if (dist < best_dist) {
      best_dist = dist;
      best_signal = signal;
    }
  }
  signal = best_signal;

  // Trim the analysis padding: stft() centers a clip of length hop * n_frames
  // with pad_left = (n_fft - hop) / 2, so dropping that prefix re-aligns the
  // output with the spectrogram's frame grid.
  AudioClip y;
  y.sample_rate = sample_rate;
  const std::int64_t out_len = static_cast<std::int64_t>(hop) * n_frames;
  const std::int64_t pad_left = (padded - out_len) / 2;
  y.samples.resize(static_cast<size_t>(out_len));
  for (std::int64_t i = 0; i < out_len; ++i)
    y.samples[static_cast<size_t>(i)] = signal[static_cast<size_t>(i + pad_left)];

  // Clamp locally rather than rescaling globally: an edge overshoot on a few
  // samples must not shift every magnitude in the reconstruction.
  for (auto& s : y.samples) s = std::clamp(s, Real(-1), Real(1));
  return y;
}

}  // namespace svs::dsp
