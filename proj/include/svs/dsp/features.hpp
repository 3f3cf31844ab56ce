#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "svs/dsp/fft.hpp"
#include "svs/dsp/types.hpp"

namespace svs::dsp {

struct VoicedRun {
  int begin = 0;  // first voiced frame
  int end = 0;    // one past last
  int length() const { return end - begin; }
};

inline std::vector<VoicedRun> voiced_runs(const PitchContour& contour) {
  std::vector<VoicedRun> runs;
  const int n = static_cast<int>(contour.f0_hz.size());
  int i = 0;
  while (i < n) {
    if (contour.f0_hz[static_cast<size_t>(i)] > 0) {
      int j = i;
      while (j < n && contour.f0_hz[static_cast<size_t>(j)] > 0) ++j;
      runs.push_back({i, j});
      i = j;
    } else {
      ++i;
    }
  }
  return runs;
}

namespace detail {

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Centered moving average with shrinking windows at the edges.
inline std::vector<double> moving_average(const std::vector<double>& x, int half) {
  const int n = static_cast<int>(x.size());
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j) acc += x[static_cast<size_t>(j)];
    out[static_cast<size_t>(i)] = acc / (hi - lo + 1);
  }
  return out;
}

// Gaussian elimination with partial pivoting; A is n x n row-major.
inline bool solve_linear(int n, std::vector<double> A, std::vector<double> b,
                         std::vector<double>& x) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(A[static_cast<size_t>(r) * n + col]) >
          std::abs(A[static_cast<size_t>(piv) * n + col]))
        piv = r;
    if (std::abs(A[static_cast<size_t>(piv) * n + col]) < 1e-12) return false;
    for (int c = 0; c < n; ++c)
      std::swap(A[static_cast<size_t>(col) * n + c], A[static_cast<size_t>(piv) * n + c]);
    std::swap(b[static_cast<size_t>(col)], b[static_cast<size_t>(piv)]);
    for (int r = col + 1; r < n; ++r) {
      const double f = A[static_cast<size_t>(r) * n + col] / A[static_cast<size_t>(col) * n + col];
      for (int c = col; c < n; ++c)
        A[static_cast<size_t>(r) * n + c] -= f * A[static_cast<size_t>(col) * n + c];
      b[static_cast<size_t>(r)] -= f * b[static_cast<size_t>(col)];
    }
  }
  x.assign(static_cast<size_t>(n), 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[static_cast<size_t>(r)];
    for (int c = r + 1; c < n; ++c) acc -= A[static_cast<size_t>(r) * n + c] * x[static_cast<size_t>(c)];
    x[static_cast<size_t>(r)] = acc / A[static_cast<size_t>(r) * n + r];
  }
  return true;
}

// Least-squares fit of cents(t) = poly2(t) + a sin(wt) + b cos(wt). The
// quadratic absorbs onset glide and slow drift so the sinusoid amplitude
// isolates vibrato. Returns the fitted amplitude.
inline double sinusoid_amplitude(const std::vector<double>& cents, double frame_rate, double hz) {
  const int n = static_cast<int>(cents.size());
  const double w = 2.0 * kPi * hz / frame_rate;
  std::vector<double> A(25, 0.0), rhs(5, 0.0), sol;
  for (int t = 0; t < n; ++t) {
    const double ts = static_cast<double>(t) / n;  // scaled for conditioning
    const double basis[5] = {1.0, ts, ts * ts, std::sin(w * t), std::cos(w * t)};
    for (int i = 0; i < 5; ++i) {
      rhs[static_cast<size_t>(i)] += basis[i] * cents[static_cast<size_t>(t)];
      for (int j = 0; j < 5; ++j) A[static_cast<size_t>(i) * 5 + j] += basis[i] * basis[j];
    }
  }
  if (!solve_linear(5, A, rhs, sol)) return 0.0;
  return std::hypot(sol[3], sol[4]);
}

// Stable single-note run: post-onset smoothed pitch stays in a narrow band.
inline bool run_is_stable(const std::vector<double>& smoothed_cents, int skip) {
  const int n = static_cast<int>(smoothed_cents.size());
  if (n - skip < 4) return false;
  double lo = 1e9, hi = -1e9;
  for (int i = skip; i < n; ++i) {
    lo = std::min(lo, smoothed_cents[static_cast<size_t>(i)]);
    hi = std::max(hi, smoothed_cents[static_cast<size_t>(i)]);
  }
  return hi - lo <= 120.0;
}

}  // namespace detail

// Vibrato rate/extent and onset glide from a pitch contour.
//  - rate/extent: least-squares sinusoid fit (3-9 Hz scan with parabolic
//    refinement) on the longest stable voiced run, skipping the onset region.
//  - onset glide: time for the vibrato-smoothed contour to enter and hold
//    +/-30 cents of the run's settled pitch, median across stable runs.
inline VibratoStats vibrato_features(const PitchContour& contour) {
  const auto runs = voiced_runs(contour);
  const Real fr = contour.frame_rate;
  int voiced = 0;
  for (const auto& r : runs) voiced += r.length();
  if (fr <= 0 || voiced < static_cast<int>(fr))
    throw InsufficientData("vibrato_features: need at least 1 s of voiced frames");

  const int ma_half = std::max(1, static_cast<int>(std::lround(0.125 * fr)));
  const int min_run = std::max(4, static_cast<int>(std::lround(0.5 * fr)));

  struct RunInfo {
    std::vector<double> cents;
    std::vector<double> smooth;
    int skip = 0;
  };
  std::vector<RunInfo> stable, all;
  for (const auto& r : runs) {
    if (r.length() < min_run) continue;
    RunInfo info;
    std::vector<double> f0(static_cast<size_t>(r.length()));
    for (int i = 0; i < r.length(); ++i) f0[static_cast<size_t>(i)] = contour.f0_hz[static_cast<size_t>(r.begin + i)];
    const double ref = detail::median_of(f0);
    info.cents.resize(f0.size());
    for (size_t i = 0; i < f0.size(); ++i) info.cents[i] = 1200.0 * std::log2(f0[i] / ref);
    info.smooth = detail::moving_average(info.cents, ma_half);
    info.skip = std::min(static_cast<int>(std::lround(0.55 * fr)),
                         static_cast<int>(0.35 * r.length()));
    all.push_back(info);
    if (detail::run_is_stable(info.smooth, info.skip)) stable.push_back(info);
  }
  const std::vector<RunInfo>& pool = stable.empty() ? all : stable;
  VibratoStats stats;
  if (pool.empty()) return stats;

  // Longest run carries the vibrato measurement.
  const RunInfo* main_run = &pool[0];
  for (const auto& info : pool)
    if (info.cents.size() > main_run->cents.size()) main_run = &info;

  std::vector<double> fit(main_run->cents.begin() + main_run->skip, main_run->cents.end());
  {
    // Remove the local mean so the poly basis starts near zero.
    double mean = 0.0;
    for (double c : fit) mean += c;
    mean /= static_cast<double>(fit.size());
    for (double& c : fit) c -= mean;
  }
  double best_hz = 0.0, best_amp = -1.0, prev_amp = 0.0, prev2_amp = 0.0;
  const double step = 0.05;
  for (double hz = 3.0; hz <= 9.0 + 1e-9; hz += step) {
    const double amp = detail::sinusoid_amplitude(fit, fr, hz);
    if (amp > best_amp) {
      best_amp = amp;
      best_hz = hz;
      // Parabolic refinement uses the neighbors once the peak is passed.
    }
    prev2_amp = prev_amp;
    prev_amp = amp;
    (void)prev2_amp;
  }
  // Refine around the grid peak.
  const double a0 = detail::sinusoid_amplitude(fit, fr, best_hz - step);
  const double a1 = best_amp;
  const double a2 = detail::sinusoid_amplitude(fit, fr, best_hz + step);
  const double denom = a0 - 2.0 * a1 + a2;
  double hz_ref = best_hz;
  if (std::abs(denom) > 1e-12) hz_ref += 0.5 * (a0 - a2) / denom * step;
  stats.rate_hz = hz_ref;
  stats.extent_cents = detail::sinusoid_amplitude(fit, fr, hz_ref);

  // Onset glide per stable run.
  std::vector<double> glides;
  const int hold = std::max(2, static_cast<int>(std::lround(0.15 * fr)));
  for (const auto& info : pool) {
    const int n = static_cast<int>(info.smooth.size());
    std::vector<double> settled(info.smooth.begin() + std::min(info.skip, n - 1), info.smooth.end());
    const double target = detail::median_of(settled);
    int entered = -1;
    for (int t = 0; t < n; ++t) {
      bool inside = true;
      for (int j = t; j < std::min(n, t + hold); ++j)
        if (std::abs(info.smooth[static_cast<size_t>(j)] - target) > 30.0) {
          inside = false;
          break;
        }
      if (inside) {
        entered = t;
        break;
      }
    }
    glides.push_back((entered < 0 ? n : entered) * 1000.0 / fr);
  }
  stats.onset_glide_ms = detail::median_of(glides);
  return stats;
}

// Spectral centroid (magnitude-weighted mean frequency over voiced frames)
// and up to three formant peaks of the cepstrally smoothed envelope below
// 5 kHz, ascending in frequency.
inline std::pair<Real, std::vector<Real>> envelope_features(const LinearSpectrogram& spec,
                                                            const std::vector<int>& voiced_frames,
                                                            int sample_rate = 22050) {
  if (voiced_frames.empty()) throw InsufficientData("envelope_features: no voiced frames");
  const int bins = spec.n_bins();
  const int n_fft = 2 * (bins - 1);
  const Real bin_hz = static_cast<Real>(sample_rate) / n_fft;

  double centroid_acc = 0.0;
  int centroid_frames = 0;
  std::vector<double> mean_log(static_cast<size_t>(bins), 0.0);
  for (int f : voiced_frames) {
    if (f < 0 || f >= spec.n_frames()) throw InvalidInput("envelope_features: frame out of range");
    double num = 0.0, den = 0.0;
    for (int b = 0; b < bins; ++b) {
      const Real logmag = spec.norm.lo + spec.values.at(b, f) * (spec.norm.hi - spec.norm.lo);
      const Real mag = std::max(Real(0), std::exp(logmag) - kLogFloor);
      num += b * bin_hz * mag;
      den += mag;
      mean_log[static_cast<size_t>(b)] += logmag;
    }
    if (den > 1e-12) {
      centroid_acc += num / den;
      ++centroid_frames;
    }
  }
  if (centroid_frames == 0) throw InsufficientData("envelope_features: voiced frames carry no energy");
  const Real centroid = centroid_acc / centroid_frames;
  for (auto& x : mean_log) x /= static_cast<double>(voiced_frames.size());

  // Precondition the log spectrum. Clamping the dynamic range stops the
  // between-harmonic valleys (whose depth varies slowly with frequency where
  // harmonics fade out) from leaking ripple through the lifter; extending the
  // first harmonic's level down to DC removes the rising edge whose smoothed
  // overshoot would fake a peak below F1.
  double top = mean_log[0];
  for (double x : mean_log) top = std::max(top, x);
  for (auto& x : mean_log) x = std::max(x, top - 10.0);
  int b_first = 0;
  for (int b = 1; b < bins - 1; ++b) {
    if (mean_log[static_cast<size_t>(b)] >= top - 7.0 &&
        mean_log[static_cast<size_t>(b)] >= mean_log[static_cast<size_t>(b - 1)] &&
        mean_log[static_cast<size_t>(b)] >= mean_log[static_cast<size_t>(b + 1)]) {
      b_first = b;  // the first harmonic's own peak, not its mainlobe skirt
      break;
    }
  }
  for (int b = 0; b < b_first; ++b) mean_log[static_cast<size_t>(b)] = mean_log[static_cast<size_t>(b_first)];

  // Cepstrum of the mirrored log spectrum. Quefrency q indexes period-q
  // (in samples) spectral ripple, so the voiced comb peaks at q0 = sr/f0.
  std::vector<cplx> a(static_cast<size_t>(n_fft));
  for (int b = 0; b < bins; ++b) a[static_cast<size_t>(b)] = cplx(mean_log[static_cast<size_t>(b)], 0.0);
  for (int b = bins; b < n_fft; ++b) a[static_cast<size_t>(b)] = a[static_cast<size_t>(n_fft - b)];
  fft_inplace(a, false);

  // Pitch-adaptive raised-cosine lifter: pass everything well below the comb
  // quefrency, reject from just under it. A fixed cutoff either smears the
  // envelope at low f0 or lets comb ripple through at high f0.
  int q0 = sample_rate / 500;
  {
    const int q_lo = std::max(8, sample_rate / 500);
    const int q_hi = std::min(n_fft / 2 - 1, sample_rate / 100);
    double best = -1e30;
    for (int q = q_lo; q <= q_hi; ++q) {
      const double v = a[static_cast<size_t>(q)].real();
      if (v > best) {
        best = v;
        q0 = q;
      }
    }
  }
  const int q_pass = std::clamp(static_cast<int>(0.55 * q0), 24, 120);
  const int q_stop = std::clamp(static_cast<int>(0.90 * q0), q_pass + 16, 200);
  for (int q = 0; q < n_fft; ++q) {
    const int qq = std::min(q, n_fft - q);
    double w = 0.0;
    if (qq < q_pass)
      w = 1.0;
    else if (qq < q_stop)
      w = 0.5 * (1.0 + std::cos(kPi * (qq - q_pass) / static_cast<double>(q_stop - q_pass)));
    a[static_cast<size_t>(q)] *= w;
  }
  fft_inplace(a, true);

  std::vector<double> env(static_cast<size_t>(bins));
  for (int b = 0; b < bins; ++b) env[static_cast<size_t>(b)] = a[static_cast<size_t>(b)].real();

  // Resonance peaks below 5 kHz, ranked by topographic prominence. Raw height
  // is the wrong criterion: residual wiggles in weak spectral regions can
  // out-value a true formant, but only real resonances rise well clear of
  // their saddles. Peaks that are shallow or far below the envelope maximum
  // are dropped entirely ("up to 3" rather than always 3).
  const int b_lo = std::max(1, static_cast<int>(80.0 / bin_hz));
  const int b_hi = std::min(bins - 2, static_cast<int>(5000.0 / bin_hz));
  double env_max = env[static_cast<size_t>(b_lo)];
  for (int b = b_lo; b <= b_hi; ++b) env_max = std::max(env_max, env[static_cast<size_t>(b)]);
  struct Peak {
    Real freq;
    int bin;
    double value;
    double prominence;
  };
  std::vector<Peak> peaks;
  for (int b = b_lo; b <= b_hi; ++b) {
    if (env[static_cast<size_t>(b)] > env[static_cast<size_t>(b - 1)] &&
        env[static_cast<size_t>(b)] >= env[static_cast<size_t>(b + 1)]) {
      const double y0 = env[static_cast<size_t>(b - 1)];
      const double y1 = env[static_cast<size_t>(b)];
      const double y2 = env[static_cast<size_t>(b + 1)];
      const double denom = y0 - 2.0 * y1 + y2;
      double off = 0.0;
      if (std::abs(denom) > 1e-12) off = 0.5 * (y0 - y2) / denom;
      peaks.push_back({(b + off) * bin_hz, b, y1, 0.0});
    }
  }
  for (auto& p : peaks) {
    double left_min = p.value, right_min = p.value;
    for (int b = p.bin - 1; b >= 0 && env[static_cast<size_t>(b)] <= p.value; --b)
      left_min = std::min(left_min, env[static_cast<size_t>(b)]);
    for (int b = p.bin + 1; b < bins && env[static_cast<size_t>(b)] <= p.value; ++b)
      right_min = std::min(right_min, env[static_cast<size_t>(b)]);
    p.prominence = p.value - std::max(left_min, right_min);
  }
  std::erase_if(peaks, [&](const Peak& p) {
    return p.prominence < 0.25 || p.value < env_max - 5.0;
  });
  std::sort(peaks.begin(), peaks.end(),
            [](const Peak& x, const Peak& y) { return x.prominence > y.prominence; });
  if (peaks.size() > 3) peaks.resize(3);
  std::sort(peaks.begin(), peaks.end(), [](const Peak& x, const Peak& y) { return x.freq < y.freq; });
  std::vector<Real> formants;
  for (const auto& p : peaks) formants.push_back(p.freq);
  return {centroid, formants};
}

}  // namespace svs::dsp
