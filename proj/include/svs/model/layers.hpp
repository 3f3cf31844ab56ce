#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "svs/core/error.hpp"
#include "svs/core/tensor.hpp"

namespace svs::model {

// Padding policy for 1-d convolutions over [C x L] feature maps.
//   kSame:   zero padding both sides, Lout = L
//   kCausal: zero padding on the left only, Lout = L; output t sees x[<= t]
//   kValid:  no padding, Lout = L - (k-1)*dilation
enum class Pad { kSame, kCausal, kValid };

inline int conv_out_len(int L, int k, int dilation, Pad pad) {
  return pad == Pad::kValid ? L - (k - 1) * dilation : L;
}

inline int conv_base_offset(int k, int dilation, Pad pad) {
  switch (pad) {
    case Pad::kSame: return -((k - 1) / 2) * dilation;
    case Pad::kCausal: return -(k - 1) * dilation;
    default: return 0;
  }
}

// x: [Cin x L], W: [Cout x Cin x k], b: [Cout] or null. Accumulation order is
// fixed (co, ci, tap, then time) so repeated runs are bit-identical.
inline Tensor conv1d(const Tensor& x, const Tensor& W, const Tensor* b, int dilation,
                     Pad pad) {
  const int Cin = x.shape[0], L = x.shape[1];
  const int Cout = W.shape[0], k = W.shape[2];
  if (W.shape[1] != Cin) throw InvalidInput("conv1d: channel mismatch");
  const int Lout = conv_out_len(L, k, dilation, pad);
  if (Lout <= 0) throw InvalidInput("conv1d: input shorter than kernel span");
  const int base = conv_base_offset(k, dilation, pad);

  Tensor y({Cout, Lout});
  for (int co = 0; co < Cout; ++co) {
    Real* yr = y.row(co);
    if (b) {
      const Real bias = b->v[static_cast<size_t>(co)];
      for (int t = 0; t < Lout; ++t) yr[t] = bias;
    }
    for (int ci = 0; ci < Cin; ++ci) {
      const Real* xr = x.row(ci);
      for (int j = 0; j < k; ++j) {
        const Real w = W.v[(static_cast<size_t>(co) * Cin + ci) * k + j];
        if (w == Real(0)) continue;
        const int s = base + j * dilation;
        const int t0 = std::max(0, -s);
        const int t1 = std::min(Lout, L - s);
        for (int t = t0; t < t1; ++t) yr[t] += w * xr[t + s];
      }
    }
  }
  return y;
}

// Returns dx; accumulates into dW and (optionally) db.
inline Tensor conv1d_backward(const Tensor& x, const Tensor& W, int dilation, Pad pad,
                              const Tensor& dy, Tensor& dW, Tensor* db) {
  const int Cin = x.shape[0], L = x.shape[1];
  const int Cout = W.shape[0], k = W.shape[2];
  const int Lout = dy.shape[1];
  const int base = conv_base_offset(k, dilation, pad);

  Tensor dx({Cin, L});
  for (int co = 0; co < Cout; ++co) {
    const Real* dyr = dy.row(co);
    if (db) {
      Real acc = 0;
      for (int t = 0; t < Lout; ++t) acc += dyr[t];
      db->v[static_cast<size_t>(co)] += acc;
    }
    for (int ci = 0; ci < Cin; ++ci) {
      const Real* xr = x.row(ci);
      Real* dxr = dx.row(ci);
      for (int j = 0; j < k; ++j) {
        const size_t wi = (static_cast<size_t>(co) * Cin + ci) * k + j;
        const Real w = W.v[wi];
        const int s = base + j * dilation;
        const int t0 = std::max(0, -s);
        const int t1 = std::min(Lout, L - s);
        Real acc = 0;
        for (int t = t0; t < t1; ++t) acc += xr[t + s] * dyr[t];
        dW.v[wi] += acc;
        for (int t = t0; t < t1; ++t) dxr[t + s] += w * dyr[t];
      }
    }
  }
  return dx;
}

// Transposed conv for time upsampling. x: [Cin x L], W: [Cin x Cout x k],
// stride s, symmetric crop `pad`; Lout = (L-1)*s - 2*pad + k. The defaults
// used by the super-resolution stack (k=8, s=4, pad=2) give Lout = 4L.
inline Tensor tconv1d(const Tensor& x, const Tensor& W, const Tensor* b, int stride,
                      int pad) {
  const int Cin = x.shape[0], L = x.shape[1];
  const int Cout = W.shape[1], k = W.shape[2];
  if (W.shape[0] != Cin) throw InvalidInput("tconv1d: channel mismatch");
  const int Lout = (L - 1) * stride - 2 * pad + k;
  if (Lout <= 0) throw InvalidInput("tconv1d: degenerate output length");

  Tensor y({Cout, Lout});
  if (b)
    for (int co = 0; co < Cout; ++co) {
      Real* yr = y.row(co);
      const Real bias = b->v[static_cast<size_t>(co)];
      for (int u = 0; u < Lout; ++u) yr[u] = bias;
    }
  for (int ci = 0; ci < Cin; ++ci) {
    const Real* xr = x.row(ci);
    for (int co = 0; co < Cout; ++co) {
      Real* yr = y.row(co);
      for (int j = 0; j < k; ++j) {
        const Real w = W.v[(static_cast<size_t>(ci) * Cout + co) * k + j];
        if (w == Real(0)) continue;
        for (int t = 0; t < L; ++t) {
          const int u = t * stride + j - pad;
          if (u >= 0 && u < Lout) yr[u] += w * xr[t];
        }
      }
    }
  }
  return y;
}

inline Tensor tconv1d_backward(const Tensor& x, const Tensor& W, int stride, int pad,
                               const Tensor& dy, Tensor& dW, Tensor* db) {
  const int Cin = x.shape[0], L = x.shape[1];
  const int Cout = W.shape[1], k = W.shape[2];
  const int Lout = dy.shape[1];

  Tensor dx({Cin, L});
  if (db)
    for (int co = 0; co < Cout; ++co) {
      const Real* dyr = dy.row(co);
      Real acc = 0;
      for (int u = 0; u < Lout; ++u) acc += dyr[u];
      db->v[static_cast<size_t>(co)] += acc;
    }
  for (int ci = 0; ci < Cin; ++ci) {
    const Real* xr = x.row(ci);
    Real* dxr = dx.row(ci);
    for (int co = 0; co < Cout; ++co) {
      const Real* dyr = dy.row(co);
      for (int j = 0; j < k; ++j) {
        const size_t wi = (static_cast<size_t>(ci) * Cout + co) * k + j;
        const Real w = W.v[wi];
        Real acc = 0;
        for (int t = 0; t < L; ++t) {
          const int u = t * stride + j - pad;
          if (u < 0 || u >= Lout) continue;
          acc += xr[t] * dyr[u];
          dxr[t] += w * dyr[u];
        }
        dW.v[wi] += acc;
      }
    }
  }
  return dx;
}

// 2-d strided conv for the discriminator. x: [Cin x H x W] (rank 3),
// W flat-indexed as [Cout][Cin][kh][kw], stride/pad symmetric.
inline Tensor conv2d(const Tensor& x, const Tensor& W, const Tensor* b, int Cout, int kh,
                     int kw, int stride, int pad) {
  const int Cin = x.shape[0], H = x.shape[1], Wd = x.shape[2];
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (Wd + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw InvalidInput("conv2d: degenerate output");

  Tensor y({Cout, Ho, Wo});
  for (int co = 0; co < Cout; ++co) {
    const Real bias = b ? b->v[static_cast<size_t>(co)] : Real(0);
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j) {
        Real acc = bias;
        for (int ci = 0; ci < Cin; ++ci)
          for (int a = 0; a < kh; ++a) {
            const int r = i * stride + a - pad;
            if (r < 0 || r >= H) continue;
            for (int c = 0; c < kw; ++c) {
              const int s = j * stride + c - pad;
              if (s < 0 || s >= Wd) continue;
              acc += W.v[((static_cast<size_t>(co) * Cin + ci) * kh + a) * kw + c] *
                     x.at(ci, r, s);
            }
          }
        y.at(co, i, j) = acc;
      }
  }
  return y;
}

inline Tensor conv2d_backward(const Tensor& x, const Tensor& W, int Cout, int kh, int kw,
                              int stride, int pad, const Tensor& dy, Tensor& dW,
                              Tensor* db) {
  const int Cin = x.shape[0], H = x.shape[1], Wd = x.shape[2];
  const int Ho = dy.shape[1], Wo = dy.shape[2];

  Tensor dx({Cin, H, Wd});
  for (int co = 0; co < Cout; ++co) {
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j) {
        const Real g = dy.at(co, i, j);
        if (db) db->v[static_cast<size_t>(co)] += g;
        for (int ci = 0; ci < Cin; ++ci)
          for (int a = 0; a < kh; ++a) {
            const int r = i * stride + a - pad;
            if (r < 0 || r >= H) continue;
            for (int c = 0; c < kw; ++c) {
              const int s = j * stride + c - pad;
              if (s < 0 || s >= Wd) continue;
              const size_t wi = ((static_cast<size_t>(co) * Cin + ci) * kh + a) * kw + c;
              dW.v[wi] += x.at(ci, r, s) * g;
              dx.at(ci, r, s) += W.v[wi] * g;
            }
          }
      }
  }
  return dx;
}

// Dense map of a vector: y = W x + b. x: [n], W: [m x n], b: [m].
inline Tensor dense(const Tensor& x, const Tensor& W, const Tensor* b) {
  const int n = static_cast<int>(x.v.size());
  const int m = W.shape[0];
  if (W.shape[1] != n) throw InvalidInput("dense: size mismatch");
  Tensor y({m});
  for (int i = 0; i < m; ++i) {
    Real acc = b ? b->v[static_cast<size_t>(i)] : Real(0);
    const Real* wr = W.row(i);
    for (int j = 0; j < n; ++j) acc += wr[j] * x.v[static_cast<size_t>(j)];
    y.v[static_cast<size_t>(i)] = acc;
  }
  return y;
}

inline Tensor dense_backward(const Tensor& x, const Tensor& W, const Tensor& dy,
                             Tensor& dW, Tensor* db) {
  const int n = static_cast<int>(x.v.size());
  const int m = W.shape[0];
  Tensor dx({n});
  for (int i = 0; i < m; ++i) {
    const Real g = dy.v[static_cast<size_t>(i)];
    if (db) db->v[static_cast<size_t>(i)] += g;
    const Real* wr = W.row(i);
    Real* dwr = dW.row(i);
    for (int j = 0; j < n; ++j) {
      dwr[j] += x.v[static_cast<size_t>(j)] * g;
      dx.v[static_cast<size_t>(j)] += wr[j] * g;
    }
  }
  return dx;
}

// Embedding lookup: ids (values < vocab) -> [C x L] with column t = E[ids[t]].
inline Tensor embedding(const std::vector<int>& ids, const Tensor& E) {
  const int vocab = E.shape[0], C = E.shape[1];
  const int L = static_cast<int>(ids.size());
  Tensor y({C, L});
  for (int t = 0; t < L; ++t) {
    const int id = ids[static_cast<size_t>(t)];
    if (id < 0 || id >= vocab) throw InvalidInput("embedding: id out of range");
    for (int c = 0; c < C; ++c) y.at(c, t) = E.at(id, c);
  }
  return y;
}

inline void embedding_backward(const std::vector<int>& ids, const Tensor& dy, Tensor& dE) {
  const int C = dy.shape[0], L = dy.shape[1];
  for (int t = 0; t < L; ++t) {
    const int id = ids[static_cast<size_t>(t)];
    for (int c = 0; c < C; ++c) dE.at(id, c) += dy.at(c, t);
  }
}

inline Real sigmoid(Real x) { return Real(1) / (Real(1) + std::exp(-x)); }

}  // namespace svs::model
