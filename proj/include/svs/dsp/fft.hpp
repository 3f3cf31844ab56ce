#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "svs/core/error.hpp"

namespace svs::dsp {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two, which
// the STFT preconditions guarantee. Twiddles are recomputed per call; frame
// sizes here (<= 2048) keep that cheap and the results platform-stable.
inline void fft_inplace(std::vector<cplx>& a, bool inverse) {
  const int n = static_cast<int>(a.size());
  if (!is_pow2(n)) throw InvalidInput("fft size must be a power of two");
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[static_cast<size_t>(i)], a[static_cast<size_t>(j)]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / len;
    const cplx wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        cplx u = a[static_cast<size_t>(i + k)];
        cplx v = a[static_cast<size_t>(i + k + len / 2)] * w;
        a[static_cast<size_t>(i + k)] = u + v;
        a[static_cast<size_t>(i + k + len / 2)] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

// Forward DFT of a real frame; returns the n/2+1 non-redundant bins.
inline std::vector<cplx> rfft(const std::vector<double>& frame) {
  std::vector<cplx> a(frame.begin(), frame.end());
  fft_inplace(a, false);
  a.resize(frame.size() / 2 + 1);
  return a;
}

// Inverse of rfft: reconstructs a real frame of length n from n/2+1 bins.
inline std::vector<double> irfft(const std::vector<cplx>& half, int n) {
  std::vector<cplx> a(static_cast<size_t>(n));
  for (int k = 0; k <= n / 2; ++k) a[static_cast<size_t>(k)] = half[static_cast<size_t>(k)];
  for (int k = n / 2 + 1; k < n; ++k) a[static_cast<size_t>(k)] = std::conj(half[static_cast<size_t>(n - k)]);
  fft_inplace(a, true);
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = a[static_cast<size_t>(i)].real();
  return out;
}

}  // namespace svs::dsp
