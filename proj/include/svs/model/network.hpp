#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "svs/core/error.hpp"
#include "svs/core/tensor.hpp"
#include "svs/model/layers.hpp"
#include "svs/model/weights.hpp"

namespace svs::model {

// Dilation schedule for highway stacks: 1, 3, 9, ...
inline std::vector<int> block_dilations(int n) {
  std::vector<int> d(static_cast<size_t>(n));
  int v = 1;
  for (int i = 0; i < n; ++i, v *= 3) d[static_cast<size_t>(i)] = v;
  return d;
}

// ---------------------------------------------------------------------------
// Highway conv block: y = sigma(H1) . H2 + (1 - sigma(H1)) . x, where H1 and
// H2 are dilated width-3 convs of x. Identity map at zero weights.

struct HighwayCache {
  Tensor x, h1, h2;
};

inline Tensor highway_forward(const WeightSet& w, const std::string& prefix,
                              const Tensor& x, Pad pad, int dilation,
                              HighwayCache* cache) {
  Tensor h1 = conv1d(x, w.p(prefix + ".h1.w"), &w.p(prefix + ".h1.b"), dilation, pad);
  Tensor h2 = conv1d(x, w.p(prefix + ".h2.w"), &w.p(prefix + ".h2.b"), dilation, pad);
  Tensor y = x;
  for (size_t i = 0; i < y.v.size(); ++i) {
    const Real g = sigmoid(h1.v[i]);
    y.v[i] = g * h2.v[i] + (Real(1) - g) * x.v[i];
  }
  if (cache) {
    cache->x = x;
    cache->h1 = std::move(h1);
    cache->h2 = std::move(h2);
  }
  return y;
}

inline Tensor highway_backward(const WeightSet& w, const std::string& prefix,
                               const HighwayCache& c, Pad pad, int dilation,
                               const Tensor& dy, Grads& g) {
  Tensor dh1 = zeros_like(c.h1);
  Tensor dh2 = zeros_like(c.h2);
  Tensor dx = zeros_like(c.x);
  for (size_t i = 0; i < dy.v.size(); ++i) {
    const Real gate = sigmoid(c.h1.v[i]);
    dh2.v[i] = dy.v[i] * gate;
    dh1.v[i] = dy.v[i] * (c.h2.v[i] - c.x.v[i]) * gate * (Real(1) - gate);
    dx.v[i] = dy.v[i] * (Real(1) - gate);
  }
  Tensor dx1 = conv1d_backward(c.x, w.p(prefix + ".h1.w"), dilation, pad, dh1,
                               g.like(w, prefix + ".h1.w"), &g.like(w, prefix + ".h1.b"));
  Tensor dx2 = conv1d_backward(c.x, w.p(prefix + ".h2.w"), dilation, pad, dh2,
                               g.like(w, prefix + ".h2.w"), &g.like(w, prefix + ".h2.b"));
  for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dx1.v[i] + dx2.v[i];
  return dx;
}

struct StackCache {
  std::vector<HighwayCache> blocks;
};

inline Tensor stack_forward(const WeightSet& w, const std::string& prefix,
                            const Tensor& x0, Pad pad, StackCache* cache) {
  const auto dil = block_dilations(w.config.n_conv_blocks);
  if (cache) cache->blocks.resize(dil.size());
  Tensor x = x0;
  for (size_t i = 0; i < dil.size(); ++i)
    x = highway_forward(w, prefix + ".b" + std::to_string(i), x, pad,
                        dil[i], cache ? &cache->blocks[i] : nullptr);
  return x;
}

inline Tensor stack_backward(const WeightSet& w, const std::string& prefix,
                             const StackCache& cache, Pad pad, const Tensor& dy,
                             Grads& g) {
  const auto dil = block_dilations(w.config.n_conv_blocks);
  Tensor dx = dy;
  for (int i = static_cast<int>(dil.size()) - 1; i >= 0; --i)
    dx = highway_backward(w, prefix + ".b" + std::to_string(i),
                          cache.blocks[static_cast<size_t>(i)], pad,
                          dil[static_cast<size_t>(i)], dx, g);
  return dx;
}

// ---------------------------------------------------------------------------
// Gated conditioning: z = sigma(W1*x + V1*c) . relu(W2*x + V2*c).
// W1/W2 are width-3 convs of the features (with bias); V1/V2 are width-1
// convs of the condition (no bias). In-network the condition is a tiled
// singer embedding, so V*c is one matrix-vector product broadcast over time.

struct GateCache {
  Tensor x, e, a, b;  // a, b are the pre-activations of the two branches
};

inline Tensor gate_forward(const WeightSet& w, const std::string& prefix,
                           const Tensor& x, const Tensor& e, Pad pad,
                           GateCache* cache) {
  const int C = x.shape[0], L = x.shape[1];
  const int E = static_cast<int>(e.v.size());
  const Tensor& V1 = w.p(prefix + ".v1.w");
  const Tensor& V2 = w.p(prefix + ".v2.w");
  Tensor a = conv1d(x, w.p(prefix + ".w1.w"), &w.p(prefix + ".w1.b"), 1, pad);
  Tensor b = conv1d(x, w.p(prefix + ".w2.w"), &w.p(prefix + ".w2.b"), 1, pad);
  for (int co = 0; co < C; ++co) {
    Real va = 0, vb = 0;
    for (int k = 0; k < E; ++k) {
      va += V1.v[static_cast<size_t>(co) * E + k] * e.v[static_cast<size_t>(k)];
      vb += V2.v[static_cast<size_t>(co) * E + k] * e.v[static_cast<size_t>(k)];
    }
    Real* ar = a.row(co);
    Real* br = b.row(co);
    for (int t = 0; t < L; ++t) {
      ar[t] += va;
      br[t] += vb;
    }
  }
  Tensor z({C, L});
  for (size_t i = 0; i < z.v.size(); ++i)
    z.v[i] = sigmoid(a.v[i]) * std::max(Real(0), b.v[i]);
  if (cache) {
    cache->x = x;
    cache->e = e;
    cache->a = std::move(a);
    cache->b = std::move(b);
  }
  return z;
}

// Accumulates parameter grads into g and the embedding grad into de.
inline Tensor gate_backward(const WeightSet& w, const std::string& prefix,
                            const GateCache& c, Pad pad, const Tensor& dz, Grads& g,
                            Tensor& de) {
  const int C = c.x.shape[0];
  const int E = static_cast<int>(c.e.v.size());
  Tensor da = zeros_like(c.a);
  Tensor db = zeros_like(c.b);
  for (size_t i = 0; i < dz.v.size(); ++i) {
    const Real s = sigmoid(c.a.v[i]);
    const Real r = std::max(Real(0), c.b.v[i]);
    da.v[i] = dz.v[i] * r * s * (Real(1) - s);
    db.v[i] = c.b.v[i] > Real(0) ? dz.v[i] * s : Real(0);
  }
  Tensor dx = conv1d_backward(c.x, w.p(prefix + ".w1.w"), 1, pad, da,
                              g.like(w, prefix + ".w1.w"), &g.like(w, prefix + ".w1.b"));
  Tensor dx2 = conv1d_backward(c.x, w.p(prefix + ".w2.w"), 1, pad, db,
                               g.like(w, prefix + ".w2.w"), &g.like(w, prefix + ".w2.b"));
  for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dx2.v[i];

  const Tensor& V1 = w.p(prefix + ".v1.w");
  const Tensor& V2 = w.p(prefix + ".v2.w");
  Tensor& gV1 = g.like(w, prefix + ".v1.w");
  Tensor& gV2 = g.like(w, prefix + ".v2.w");
  const int L = da.shape[1];
  for (int co = 0; co < C; ++co) {
    Real sa = 0, sb = 0;
    const Real* dar = da.row(co);
    const Real* dbr = db.row(co);
    for (int t = 0; t < L; ++t) {
      sa += dar[t];
      sb += dbr[t];
    }
    for (int k = 0; k < E; ++k) {
      const size_t vi = static_cast<size_t>(co) * E + k;
      gV1.v[vi] += sa * c.e.v[static_cast<size_t>(k)];
      gV2.v[vi] += sb * c.e.v[static_cast<size_t>(k)];
      de.v[static_cast<size_t>(k)] += V1.v[vi] * sa + V2.v[vi] * sb;
    }
  }
  return dx;
}

// Contract-level form over an explicit [E x L] condition map.
inline Tensor tile_condition(const Tensor& e, int L) {
  const int E = static_cast<int>(e.v.size());
  if (L < 1) throw InvalidInput("tile_condition: length must be positive");
  Tensor c({E, L});
  for (int k = 0; k < E; ++k) {
    Real* r = c.row(k);
    for (int t = 0; t < L; ++t) r[t] = e.v[static_cast<size_t>(k)];
  }
  return c;
}

inline Tensor gated_condition(const Tensor& x, const Tensor& c, const Tensor& W1,
                              const Tensor& b1, const Tensor& W2, const Tensor& b2,
                              const Tensor& V1, const Tensor& V2,
                              Pad pad = Pad::kSame) {
  if (c.shape[1] != x.shape[1])
    throw InvalidInput("gated_condition: condition length mismatch");
  Tensor a = conv1d(x, W1, &b1, 1, pad);
  Tensor b = conv1d(x, W2, &b2, 1, pad);
  Tensor va = conv1d(c, V1, nullptr, 1, Pad::kSame);
  Tensor vb = conv1d(c, V2, nullptr, 1, Pad::kSame);
  Tensor z = zeros_like(a);
  for (size_t i = 0; i < z.v.size(); ++i)
    z.v[i] = sigmoid(a.v[i] + va.v[i]) * std::max(Real(0), b.v[i] + vb.v[i]);
  return z;
}

// ---------------------------------------------------------------------------
// Input encoders. Text and pitch are embedding lookups followed by a
// non-causal highway stack; the mel context encoder projects the previous
// mel frames and runs a causal stack, so feature t never sees frames > t.

struct TokenEncCache {
  std::vector<int> ids;
  StackCache stack;
};

inline Tensor encode_tokens(const WeightSet& w, const std::string& embed_name,
                            const std::string& prefix, const std::vector<int>& ids,
                            TokenEncCache* cache) {
  if (ids.empty()) throw InvalidInput("encode_tokens: empty sequence");
  Tensor x = embedding(ids, w.p(embed_name));
  if (cache) cache->ids = ids;
  return stack_forward(w, prefix, x, Pad::kSame, cache ? &cache->stack : nullptr);
}

inline void encode_tokens_backward(const WeightSet& w, const std::string& embed_name,
                                   const std::string& prefix, const TokenEncCache& c,
                                   const Tensor& dy, Grads& g) {
  Tensor dx = stack_backward(w, prefix, c.stack, Pad::kSame, dy, g);
  embedding_backward(c.ids, dx, g.like(w, embed_name));
}

struct MelEncCache {
  Tensor m, proj;
  StackCache stack;
};

inline Tensor encode_mel(const WeightSet& w, const Tensor& m_prev, MelEncCache* cache) {
  if (m_prev.shape.size() != 2 || m_prev.shape[0] != w.config.n_mels ||
      m_prev.shape[1] < 1)
    throw InvalidInput("encode_mel: expected [n_mels x L] input");
  Tensor proj = conv1d(m_prev, w.p("menc.in.w"), &w.p("menc.in.b"), 1, Pad::kCausal);
  if (cache) {
    cache->m = m_prev;
    cache->proj = proj;
  }
  return stack_forward(w, "menc", proj, Pad::kCausal, cache ? &cache->stack : nullptr);
}

inline void encode_mel_backward(const WeightSet& w, const MelEncCache& c,
                                const Tensor& dy, Grads& g) {
  Tensor dproj = stack_backward(w, "menc", c.stack, Pad::kCausal, dy, g);
  conv1d_backward(c.m, w.p("menc.in.w"), 1, Pad::kCausal, dproj,
                  g.like(w, "menc.in.w"), &g.like(w, "menc.in.b"));
}

struct EncodedFeatures {
  Tensor e_t, e_p, e_m;  // each [channels x L]
};

struct EncodeCache {
  TokenEncCache tenc, penc;
  MelEncCache menc;
};

inline EncodedFeatures encode_inputs(const WeightSet& w, const std::vector<int>& phonemes,
                                     const std::vector<int>& pitches, const Tensor& m_prev,
                                     EncodeCache* cache = nullptr) {
  if (phonemes.empty()) throw InvalidInput("encode_inputs: empty sequence");
  if (phonemes.size() != pitches.size())
    throw InvalidInput("encode_inputs: phoneme/pitch length mismatch");
  if (m_prev.shape.size() != 2 || m_prev.shape[0] != w.config.n_mels ||
      m_prev.shape[1] != static_cast<int>(phonemes.size()))
    throw InvalidInput("encode_inputs: mel context shape mismatch");
  EncodedFeatures f;
  f.e_t = encode_tokens(w, "text_embed", "tenc", phonemes, cache ? &cache->tenc : nullptr);
  f.e_p = encode_tokens(w, "pitch_embed", "penc", pitches, cache ? &cache->penc : nullptr);
  f.e_m = encode_mel(w, m_prev, cache ? &cache->menc : nullptr);
  return f;
}

// ---------------------------------------------------------------------------
// Singer encoder: two valid-padding convs with relu, mean pooling over time,
// then a dense map to the 256-dim embedding. Valid padding keeps every
// retained frame free of zero-padding effects, so a time-constant query
// pools to exactly one frame's activation.

struct SingerEncCache {
  Tensor q, z1, z2;
};

inline Tensor encode_singer(const WeightSet& w, const Tensor& q,
                            SingerEncCache* cache = nullptr) {
  require_shape(q, {w.config.n_mels, 256}, "singer query");
  Tensor z1 = conv1d(q, w.p("senc.c1.w"), &w.p("senc.c1.b"), 1, Pad::kValid);
  Tensor a1 = z1;
  for (Real& v : a1.v) v = std::max(Real(0), v);
  Tensor z2 = conv1d(a1, w.p("senc.c2.w"), &w.p("senc.c2.b"), 1, Pad::kValid);
  const int C = z2.shape[0], T = z2.shape[1];
  Tensor pooled({C});
  for (int c = 0; c < C; ++c) {
    const Real* r = z2.row(c);
    Real acc = 0;
    for (int t = 0; t < T; ++t) acc += std::max(Real(0), r[t]);
    pooled.v[static_cast<size_t>(c)] = acc / static_cast<Real>(T);
  }
  if (cache) {
    cache->q = q;
    cache->z1 = std::move(z1);
    cache->z2 = std::move(z2);
  }
  return dense(pooled, w.p("senc.dense.w"), &w.p("senc.dense.b"));
}

inline void encode_singer_backward(const WeightSet& w, const SingerEncCache& c,
                                   const Tensor& de, Grads& g) {
  const int C = c.z2.shape[0], T = c.z2.shape[1];
  Tensor pooled({C});
  for (int ch = 0; ch < C; ++ch) {
    const Real* r = c.z2.row(ch);
    Real acc = 0;
    for (int t = 0; t < T; ++t) acc += std::max(Real(0), r[t]);
    pooled.v[static_cast<size_t>(ch)] = acc / static_cast<Real>(T);
  }
  Tensor dpooled = dense_backward(pooled, w.p("senc.dense.w"), de,
                                  g.like(w, "senc.dense.w"), &g.like(w, "senc.dense.b"));
  Tensor dz2 = zeros_like(c.z2);
  for (int ch = 0; ch < C; ++ch) {
    const Real gch = dpooled.v[static_cast<size_t>(ch)] / static_cast<Real>(T);
    const Real* zr = c.z2.row(ch);
    Real* dr = dz2.row(ch);
    for (int t = 0; t < T; ++t) dr[t] = zr[t] > Real(0) ? gch : Real(0);
  }
  Tensor a1 = c.z1;
  for (Real& v : a1.v) v = std::max(Real(0), v);
  Tensor da1 = conv1d_backward(a1, w.p("senc.c2.w"), 1, Pad::kValid, dz2,
                               g.like(w, "senc.c2.w"), &g.like(w, "senc.c2.b"));
  for (size_t i = 0; i < da1.v.size(); ++i)
    if (c.z1.v[i] <= Real(0)) da1.v[i] = Real(0);
  conv1d_backward(c.q, w.p("senc.c1.w"), 1, Pad::kValid, da1, g.like(w, "senc.c1.w"),
                  &g.like(w, "senc.c1.b"));
}

// ---------------------------------------------------------------------------
// Decoders. Each block is a dilated highway conv followed by gated
// conditioning on the singer embedding; a width-1 conv plus sigmoid maps the
// result to [n_mels x L] in (0, 1). The formant-mask decoder is non-causal
// over E_T; the pitch-skeleton decoder is causal over E_M + E_P.

struct DecoderCache {
  Tensor in;
  std::vector<HighwayCache> hw;
  std::vector<GateCache> gates;
  Tensor top, out;
};

inline Tensor decoder_forward(const WeightSet& w, const std::string& prefix,
                              const Tensor& in, const Tensor& e, Pad pad,
                              DecoderCache* cache) {
  const auto dil = block_dilations(w.config.n_conv_blocks);
  if (cache) {
    cache->in = in;
    cache->hw.resize(dil.size());
    cache->gates.resize(dil.size());
  }
  Tensor x = in;
  for (size_t i = 0; i < dil.size(); ++i) {
    const std::string b = prefix + ".b" + std::to_string(i);
    x = highway_forward(w, b, x, pad, dil[i], cache ? &cache->hw[i] : nullptr);
    x = gate_forward(w, b + ".g", x, e, pad, cache ? &cache->gates[i] : nullptr);
  }
  Tensor out = conv1d(x, w.p(prefix + ".out.w"), &w.p(prefix + ".out.b"), 1, pad);
  for (Real& v : out.v) v = sigmoid(v);
  if (cache) {
    cache->top = std::move(x);
    cache->out = out;
  }
  return out;
}

inline Tensor decoder_backward(const WeightSet& w, const std::string& prefix,
                               const DecoderCache& c, Pad pad, const Tensor& dout,
                               Grads& g, Tensor& de) {
  Tensor dpre = zeros_like(c.out);
  for (size_t i = 0; i < dpre.v.size(); ++i)
    dpre.v[i] = dout.v[i] * c.out.v[i] * (Real(1) - c.out.v[i]);
  Tensor dx = conv1d_backward(c.top, w.p(prefix + ".out.w"), 1, pad, dpre,
                              g.like(w, prefix + ".out.w"), &g.like(w, prefix + ".out.b"));
  const auto dil = block_dilations(w.config.n_conv_blocks);
  for (int i = static_cast<int>(dil.size()) - 1; i >= 0; --i) {
    const std::string b = prefix + ".b" + std::to_string(i);
    dx = gate_backward(w, b + ".g", c.gates[static_cast<size_t>(i)], pad, dx, g, de);
    dx = highway_backward(w, b, c.hw[static_cast<size_t>(i)], pad,
                          dil[static_cast<size_t>(i)], dx, g);
  }
  return dx;
}

inline Tensor formant_mask_decoder(const WeightSet& w, const Tensor& e_t, const Tensor& e,
                                   DecoderCache* cache = nullptr) {
  return decoder_forward(w, "fm", e_t, e, Pad::kSame, cache);
}

inline Tensor pitch_skeleton_decoder(const WeightSet& w, const Tensor& e_m,
                                     const Tensor& e_p, const Tensor& e,
                                     DecoderCache* cache = nullptr) {
  if (e_m.shape != e_p.shape)
    throw InvalidInput("pitch_skeleton_decoder: E_M / E_P shape mismatch");
  Tensor in = e_m;
  for (size_t i = 0; i < in.v.size(); ++i) in.v[i] += e_p.v[i];
  return decoder_forward(w, "ps", in, e, Pad::kCausal, cache);
}

inline Tensor compose_mel(const Tensor& fm, const Tensor& ps) {
  if (fm.shape != ps.shape) throw InvalidInput("compose_mel: shape mismatch");
  Tensor m = fm;
  for (size_t i = 0; i < m.v.size(); ++i) m.v[i] *= ps.v[i];
  return m;
}

// ---------------------------------------------------------------------------
// Super-resolution: width-1 projection, transposed conv x4 in time, two
// highway blocks, width-1 conv to linear bins, sigmoid.

struct SrCache {
  Tensor m, proj, up;
  HighwayCache b0, b1;
  Tensor top, out;
};

inline Tensor super_resolution(const WeightSet& w, const Tensor& mel,
                               SrCache* cache = nullptr) {
  if (mel.shape.size() != 2 || mel.shape[0] != w.config.n_mels)
    throw InvalidInput("super_resolution: expected [n_mels x L] input");
  Tensor proj = conv1d(mel, w.p("sr.in.w"), &w.p("sr.in.b"), 1, Pad::kSame);
  Tensor up = tconv1d(proj, w.p("sr.up.w"), &w.p("sr.up.b"), w.config.time_upsample, 2);
  Tensor x = highway_forward(w, "sr.b0", up, Pad::kSame, 1, cache ? &cache->b0 : nullptr);
  x = highway_forward(w, "sr.b1", x, Pad::kSame, 3, cache ? &cache->b1 : nullptr);
  Tensor out = conv1d(x, w.p("sr.out.w"), &w.p("sr.out.b"), 1, Pad::kSame);
  for (Real& v : out.v) v = sigmoid(v);
  if (cache) {
    cache->m = mel;
    cache->proj = std::move(proj);
    cache->up = std::move(up);
    cache->top = std::move(x);
    cache->out = out;
  }
  return out;
}

inline Tensor super_resolution_backward(const WeightSet& w, const SrCache& c,
                                        const Tensor& dout, Grads& g) {
  Tensor dpre = zeros_like(c.out);
  for (size_t i = 0; i < dpre.v.size(); ++i)
    dpre.v[i] = dout.v[i] * c.out.v[i] * (Real(1) - c.out.v[i]);
  Tensor dx = conv1d_backward(c.top, w.p("sr.out.w"), 1, Pad::kSame, dpre,
                              g.like(w, "sr.out.w"), &g.like(w, "sr.out.b"));
  dx = highway_backward(w, "sr.b1", c.b1, Pad::kSame, 3, dx, g);
  dx = highway_backward(w, "sr.b0", c.b0, Pad::kSame, 1, dx, g);
  Tensor dproj = tconv1d_backward(c.proj, w.p("sr.up.w"), w.config.time_upsample, 2, dx,
                                  g.like(w, "sr.up.w"), &g.like(w, "sr.up.b"));
  return conv1d_backward(c.m, w.p("sr.in.w"), 1, Pad::kSame, dproj,
                         g.like(w, "sr.in.w"), &g.like(w, "sr.in.b"));
}

// ---------------------------------------------------------------------------
// Discriminator: three strided 5x5 convs with leaky relu over a
// [n_linear_bins x 32] patch, flattened into a dense scalar head. No output
// nonlinearity (least-squares objective).

struct DiscCache {
  Tensor x, z1, z2, z3;
  Tensor flat;
};

inline Real leaky(Real v) { return v > Real(0) ? v : Real(0.2) * v; }

inline Real discriminate(const WeightSet& w, const Tensor& patch,
                         DiscCache* cache = nullptr) {
  require_shape(patch, {w.config.n_linear_bins, kPatchFrames}, "discriminator patch");
  Tensor x({1, patch.shape[0], patch.shape[1]});
  x.v = patch.v;
  Tensor z1 = conv2d(x, w.p("d.c1.w"), &w.p("d.c1.b"), kDiscChannels[0], kDiscKernel,
                     kDiscKernel, kDiscStride, kDiscPad);
  Tensor a1 = z1;
  for (Real& v : a1.v) v = leaky(v);
  Tensor z2 = conv2d(a1, w.p("d.c2.w"), &w.p("d.c2.b"), kDiscChannels[1], kDiscKernel,
                     kDiscKernel, kDiscStride, kDiscPad);
  Tensor a2 = z2;
  for (Real& v : a2.v) v = leaky(v);
  Tensor z3 = conv2d(a2, w.p("d.c3.w"), &w.p("d.c3.b"), kDiscChannels[2], kDiscKernel,
                     kDiscKernel, kDiscStride, kDiscPad);
  Tensor flat({static_cast<int>(z3.v.size())});
  for (size_t i = 0; i < z3.v.size(); ++i) flat.v[i] = leaky(z3.v[i]);
  const Tensor out = dense(flat, w.p("d.dense.w"), &w.p("d.dense.b"));
  if (cache) {
    cache->x = std::move(x);
    cache->z1 = std::move(z1);
    cache->z2 = std::move(z2);
    cache->z3 = std::move(z3);
    cache->flat = std::move(flat);
  }
  return out.v[0];
}

// Returns the gradient w.r.t. the input patch (needed for the generator's
// adversarial term); parameter grads accumulate into g.
inline Tensor discriminate_backward(const WeightSet& w, const DiscCache& c, Real dout,
                                    Grads& g) {
  Tensor dy({1});
  dy.v[0] = dout;
  Tensor dflat = dense_backward(c.flat, w.p("d.dense.w"), dy, g.like(w, "d.dense.w"),
                                &g.like(w, "d.dense.b"));
  Tensor dz3 = zeros_like(c.z3);
  for (size_t i = 0; i < dz3.v.size(); ++i)
    dz3.v[i] = dflat.v[i] * (c.z3.v[i] > Real(0) ? Real(1) : Real(0.2));
  Tensor a2 = c.z2;
  for (Real& v : a2.v) v = leaky(v);
  Tensor da2 = conv2d_backward(a2, w.p("d.c3.w"), kDiscChannels[2], kDiscKernel,
                               kDiscKernel, kDiscStride, kDiscPad, dz3,
                               g.like(w, "d.c3.w"), &g.like(w, "d.c3.b"));
  for (size_t i = 0; i < da2.v.size(); ++i)
    da2.v[i] *= c.z2.v[i] > Real(0) ? Real(1) : Real(0.2);
  Tensor a1 = c.z1;
  for (Real& v : a1.v) v = leaky(v);
  Tensor da1 = conv2d_backward(a1, w.p("d.c2.w"), kDiscChannels[1], kDiscKernel,
                               kDiscKernel, kDiscStride, kDiscPad, da2,
                               g.like(w, "d.c2.w"), &g.like(w, "d.c2.b"));
  for (size_t i = 0; i < da1.v.size(); ++i)
    da1.v[i] *= c.z1.v[i] > Real(0) ? Real(1) : Real(0.2);
  Tensor dx3 = conv2d_backward(c.x, w.p("d.c1.w"), kDiscChannels[0], kDiscKernel,
                               kDiscKernel, kDiscStride, kDiscPad, da1,
                               g.like(w, "d.c1.w"), &g.like(w, "d.c1.b"));
  Tensor dpatch({c.x.shape[1], c.x.shape[2]});
  dpatch.v = dx3.v;
  return dpatch;
}

// ---------------------------------------------------------------------------
// Full generator pass for one segment. The caller encodes the singer
// query/queries; timbre conditions the formant mask, style conditions the
// pitch skeleton (identical embeddings during training).

struct GenCache {
  EncodeCache enc;
  DecoderCache fm, ps;
  Tensor fm_out, ps_out, mel;
  SrCache sr;
};

struct GenOut {
  Tensor mel;     // [n_mels x L]
  Tensor linear;  // [n_linear_bins x 4L]
};

inline GenOut generator_forward(const WeightSet& w, const std::vector<int>& phonemes,
                                const std::vector<int>& pitches, const Tensor& m_prev,
                                const Tensor& e_timbre, const Tensor& e_style,
                                GenCache* cache = nullptr) {
  EncodedFeatures f = encode_inputs(w, phonemes, pitches, m_prev,
                                    cache ? &cache->enc : nullptr);
  Tensor fm = formant_mask_decoder(w, f.e_t, e_timbre, cache ? &cache->fm : nullptr);
  Tensor ps = pitch_skeleton_decoder(w, f.e_m, f.e_p, e_style,
                                     cache ? &cache->ps : nullptr);
  GenOut out;
  out.mel = compose_mel(fm, ps);
  out.linear = super_resolution(w, out.mel, cache ? &cache->sr : nullptr);
  if (cache) {
    cache->fm_out = std::move(fm);
    cache->ps_out = std::move(ps);
    cache->mel = out.mel;
  }
  return out;
}

// dmel/dlinear are loss grads w.r.t. the generator outputs. Embedding grads
// come back through de_timbre / de_style; the caller backpropagates them
// through the singer encoder (summing if both embeddings share a query).
inline void generator_backward(const WeightSet& w, const GenCache& c, const Tensor& dmel,
                               const Tensor& dlinear, Grads& g, Tensor& de_timbre,
                               Tensor& de_style) {
  Tensor dmel_total = super_resolution_backward(w, c.sr, dlinear, g);
  for (size_t i = 0; i < dmel_total.v.size(); ++i) dmel_total.v[i] += dmel.v[i];

  Tensor dfm = zeros_like(c.fm_out);
  Tensor dps = zeros_like(c.ps_out);
  for (size_t i = 0; i < dfm.v.size(); ++i) {
    dfm.v[i] = dmel_total.v[i] * c.ps_out.v[i];
    dps.v[i] = dmel_total.v[i] * c.fm_out.v[i];
  }
  Tensor de_t = decoder_backward(w, "fm", c.fm, Pad::kSame, dfm, g, de_timbre);
  Tensor de_mp = decoder_backward(w, "ps", c.ps, Pad::kCausal, dps, g, de_style);

  encode_tokens_backward(w, "text_embed", "tenc", c.enc.tenc, de_t, g);
  encode_tokens_backward(w, "pitch_embed", "penc", c.enc.penc, de_mp, g);
  encode_mel_backward(w, c.enc.menc, de_mp, g);
}

// Frames of look-back the causal chain (mel context encoder + pitch-skeleton
// decoder) needs: past this many frames, earlier input cannot affect the
// current output. Used by autoregressive inference to bound recomputation.
inline int causal_receptive_field(const ModelConfig& cfg) {
  int r = 0;
  for (int d : block_dilations(cfg.n_conv_blocks)) r += 2 * d;  // menc highway
  for (int d : block_dilations(cfg.n_conv_blocks)) r += 2 * d + 2;  // ps highway + gate
  return r;
}

}  // namespace svs::model
