#pragma once

#include <algorithm>
#include <cmath>

#include "svs/dsp/fft.hpp"
#include "svs/dsp/types.hpp"

namespace svs::dsp {

namespace detail {

// McLeod-style normalized autocorrelation of one frame, computed via FFT.
// nsdf[tau] = 2 * acf[tau] / (energy(0..n-tau) + energy(tau..n)), in [-1, 1].
inline std::vector<double> nsdf(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  int fft_n = 1;
  while (fft_n < 2 * n) fft_n <<= 1;
  std::vector<cplx> a(static_cast<size_t>(fft_n), cplx(0, 0));
  for (int i = 0; i < n; ++i) a[static_cast<size_t>(i)] = cplx(x[static_cast<size_t>(i)], 0);
  fft_inplace(a, false);
  for (auto& z : a) z = z * std::conj(z);
  fft_inplace(a, true);

  std::vector<double> energy(static_cast<size_t>(n + 1), 0.0);
  for (int i = 0; i < n; ++i)
    energy[static_cast<size_t>(i + 1)] =
        energy[static_cast<size_t>(i)] + x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];

  std::vector<double> out(static_cast<size_t>(n), 0.0);
  for (int tau = 0; tau < n; ++tau) {
    const double m = (energy[static_cast<size_t>(n - tau)]) +
                     (energy[static_cast<size_t>(n)] - energy[static_cast<size_t>(tau)]);
    out[static_cast<size_t>(tau)] = m > 1e-20 ? 2.0 * a[static_cast<size_t>(tau)].real() / m : 0.0;
  }
  return out;
}

}  // namespace detail

// Autocorrelation pitch tracker. Frames of `win` samples every `frame_hop`
// samples; a frame is voiced when the best normalized peak in the 50-1500 Hz
// lag range clears the 0.3 threshold. Among near-best peaks the shortest lag
// wins, which avoids octave-down errors on harmonic tones.
inline PitchContour estimate_f0(const AudioClip& clip, int frame_hop, int win = 1024,
                                Real fmin = 50.0, Real fmax = 1500.0) {
  if (frame_hop <= 0) throw InvalidConfig("estimate_f0: frame_hop must be positive");
  PitchContour contour;
  contour.frame_rate = static_cast<Real>(clip.sample_rate) / frame_hop;
  const std::int64_t len = static_cast<std::int64_t>(clip.samples.size());
  if (len < win) return contour;

  const int sr = clip.sample_rate;
  const int tau_min = std::max(2, static_cast<int>(sr / fmax));
  const int tau_max = std::min(win - 2, static_cast<int>(sr / fmin));
  const int n_frames = static_cast<int>((len - win) / frame_hop) + 1;
  contour.f0_hz.assign(static_cast<size_t>(n_frames), 0.0);

  std::vector<double> frame(static_cast<size_t>(win));
  for (int f = 0; f < n_frames; ++f) {
    const std::int64_t start = static_cast<std::int64_t>(f) * frame_hop;
    double energy = 0.0;
    for (int i = 0; i < win; ++i) {
      frame[static_cast<size_t>(i)] = clip.samples[static_cast<size_t>(start + i)];
      energy += frame[static_cast<size_t>(i)] * frame[static_cast<size_t>(i)];
    }
    if (energy / win < 1e-8) continue;  // silence gate

    const auto r = detail::nsdf(frame);
    double best = 0.0;
    for (int tau = tau_min; tau <= tau_max; ++tau) best = std::max(best, r[static_cast<size_t>(tau)]);
    if (best < 0.3) continue;

    // Shortest local maximum within 15% of the global best.
    int pick = -1;
    for (int tau = tau_min; tau <= tau_max; ++tau) {
      if (r[static_cast<size_t>(tau)] >= 0.85 * best &&
          r[static_cast<size_t>(tau)] >= r[static_cast<size_t>(tau - 1)] &&
          r[static_cast<size_t>(tau)] >= r[static_cast<size_t>(tau + 1)]) {
        pick = tau;
        break;
      }
    }
    if (pick < 0) continue;

    // Parabolic refinement for sub-sample lag precision.
    const double y0 = r[static_cast<size_t>(pick - 1)];
    const double y1 = r[static_cast<size_t>(pick)];
    const double y2 = r[static_cast<size_t>(pick + 1)];
    const double denom = y0 - 2.0 * y1 + y2;
    double tau_ref = pick;
    if (std::abs(denom) > 1e-12) tau_ref += 0.5 * (y0 - y2) / denom;
    const Real f0 = sr / tau_ref;
    if (f0 >= fmin && f0 <= fmax) contour.f0_hz[static_cast<size_t>(f)] = f0;
  }
  return contour;
}

}  // namespace svs::dsp
