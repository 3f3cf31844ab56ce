#pragma once

#include <vector>

#include "svs/core/tensor.hpp"

namespace svs::dsp {

// Mono audio, samples in [-1, 1].
struct AudioClip {
  std::vector<Real> samples;
  int sample_rate = 22050;
};

// Affine map between log-magnitude and the [0, 1] range the network sees.
// lo/hi are corpus-level statistics of log(1e-5 + magnitude).
struct NormInfo {
  Real lo = 0.0;
  Real hi = 0.0;
  bool valid() const { return hi > lo; }
};

// [n_bins x n_frames] normalized log-magnitude, n_bins = n_fft/2 + 1.
struct LinearSpectrogram {
  Tensor values;
  int hop_samples = 256;
  NormInfo norm;

  int n_bins() const { return values.shape.empty() ? 0 : values.dim(0); }
  int n_frames() const { return values.shape.empty() ? 0 : values.dim(1); }
};

// [n_mels x n_frames] normalized log-magnitude.
struct MelSpectrogram {
  Tensor values;
  int hop_samples = 1024;
  NormInfo norm;

  int n_mels() const { return values.shape.empty() ? 0 : values.dim(0); }
  int n_frames() const { return values.shape.empty() ? 0 : values.dim(1); }
};

// Per-frame fundamental frequency; 0 marks unvoiced frames.
struct PitchContour {
  std::vector<Real> f0_hz;
  Real frame_rate = 0.0;  // frames per second
};

struct VibratoStats {
  Real rate_hz = 0.0;
  Real extent_cents = 0.0;
  Real onset_glide_ms = 0.0;
};

constexpr Real kLogFloor = 1e-5;

}  // namespace svs::dsp
