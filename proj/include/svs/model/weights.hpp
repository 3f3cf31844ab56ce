#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "svs/core/error.hpp"
#include "svs/core/rng.hpp"
#include "svs/core/tensor.hpp"
#include "svs/dsp/types.hpp"
#include "svs/model/config.hpp"

namespace svs::model {

// Discriminator channel ladder is fixed regardless of `channels`: the patch
// geometry (513 x 32) and the flattened dense input depend only on it.
inline constexpr int kDiscChannels[3] = {8, 16, 32};
inline constexpr int kDiscKernel = 5;
inline constexpr int kDiscStride = 2;
inline constexpr int kDiscPad = 2;
inline constexpr int kPatchFrames = 32;

inline int disc_out_dim(int n, int layers) {
  for (int i = 0; i < layers; ++i) n = (n + 2 * kDiscPad - kDiscKernel) / kDiscStride + 1;
  return n;
}

// Flattened input width of the discriminator head for 513 x 32 patches.
inline int disc_flat_dim(int n_linear_bins) {
  return kDiscChannels[2] * disc_out_dim(n_linear_bins, 3) * disc_out_dim(kPatchFrames, 3);
}

// Every learnable array, keyed by name. Shapes, with C = channels, E = 256,
// B = n_conv_blocks, V convs conditioning from the singer embedding:
//
//   text_embed            [phoneme_vocab, C]
//   pitch_embed           [pitch_vocab, C]
//   tenc.b{i}.h1.w/.h2.w  [C, C, 3]     (+ .b [C])      non-causal, dil 3^i
//   penc.b{i}.*           same as tenc
//   menc.in.w             [C, n_mels, 1] (+ .b [C])
//   menc.b{i}.*           same shapes, causal
//   senc.c1.w             [C, n_mels, 5] (+ .b [C])     valid padding
//   senc.c2.w             [C, C, 5]      (+ .b [C])     valid padding
//   senc.dense.w          [E, C]         (+ .b [E])
//   fm.b{i}.h1/.h2        [C, C, 3]      (+ bias)       non-causal
//   fm.b{i}.g.w1/.w2      [C, C, 3]      (+ bias)       gate input convs
//   fm.b{i}.g.v1/.v2      [C, E, 1]      no bias        gate condition convs
//   fm.out.w              [n_mels, C, 1] (+ .b)
//   ps.*                  same as fm.*, all convs causal
//   sr.in.w               [C, n_mels, 1] (+ .b)
//   sr.up.w               [C, C, 8]      (+ .b)         transposed, stride 4
//   sr.b{0,1}.*           [C, C, 3]      (+ bias)       dil 1, 3
//   sr.out.w              [n_linear_bins, C, 1] (+ .b)
//   d.c{1,2,3}.w          [8,1,5,5] [16,8,5,5] [32,16,5,5] (+ bias)
//   d.dense.w             [1, disc_flat_dim] (+ .b [1])
inline std::map<std::string, std::vector<int>> param_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const int C = cfg.channels, E = cfg.embed_dim, M = cfg.n_mels;
  std::map<std::string, std::vector<int>> s;
  auto conv = [&](const std::string& name, int co, int ci, int k, bool bias = true) {
    s[name + ".w"] = {co, ci, k};
    if (bias) s[name + ".b"] = {co};
  };
  auto highway_stack = [&](const std::string& prefix) {
    for (int i = 0; i < cfg.n_conv_blocks; ++i) {
      conv(prefix + ".b" + std::to_string(i) + ".h1", C, C, 3);
      conv(prefix + ".b" + std::to_string(i) + ".h2", C, C, 3);
    }
  };

  s["text_embed"] = {cfg.phoneme_vocab, C};
  s["pitch_embed"] = {cfg.pitch_vocab, C};
  highway_stack("tenc");
  highway_stack("penc");
  conv("menc.in", C, M, 1);
  highway_stack("menc");

  conv("senc.c1", C, M, 5);
  conv("senc.c2", C, C, 5);
  s["senc.dense.w"] = {E, C};
  s["senc.dense.b"] = {E};

  for (const std::string dec : {"fm", "ps"}) {
    highway_stack(dec);
    for (int i = 0; i < cfg.n_conv_blocks; ++i) {
      const std::string g = dec + ".b" + std::to_string(i) + ".g";
      conv(g + ".w1", C, C, 3);
      conv(g + ".w2", C, C, 3);
      conv(g + ".v1", C, E, 1, false);
      conv(g + ".v2", C, E, 1, false);
    }
    conv(dec + ".out", M, C, 1);
  }

  conv("sr.in", C, M, 1);
  s["sr.up.w"] = {C, C, 8};
  s["sr.up.b"] = {C};
  for (int i = 0; i < 2; ++i) {
    conv("sr.b" + std::to_string(i) + ".h1", C, C, 3);
    conv("sr.b" + std::to_string(i) + ".h2", C, C, 3);
  }
  conv("sr.out", cfg.n_linear_bins, C, 1);

  s["d.c1.w"] = {kDiscChannels[0], 1, kDiscKernel, kDiscKernel};
  s["d.c1.b"] = {kDiscChannels[0]};
  s["d.c2.w"] = {kDiscChannels[1], kDiscChannels[0], kDiscKernel, kDiscKernel};
  s["d.c2.b"] = {kDiscChannels[1]};
  s["d.c3.w"] = {kDiscChannels[2], kDiscChannels[1], kDiscKernel, kDiscKernel};
  s["d.c3.b"] = {kDiscChannels[2]};
  s["d.dense.w"] = {1, disc_flat_dim(cfg.n_linear_bins)};
  s["d.dense.b"] = {1};
  return s;
}

struct WeightSet {
  ModelConfig config;
  dsp::NormInfo mel_norm{};
  dsp::NormInfo linear_norm{};
  std::map<std::string, Tensor> params;

  const Tensor& p(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ModelError("missing parameter: " + name);
    return it->second;
  }
  Tensor& p(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ModelError("missing parameter: " + name);
    return it->second;
  }

  template <class F>
  void for_each_param(F&& f) {
    for (auto& [name, t] : params) f(name, t);
  }
  template <class F>
  void for_each_param(F&& f) const {
    for (const auto& [name, t] : params) f(name, t);
  }

  size_t param_count() const {
    size_t n = 0;
    for (const auto& [name, t] : params) n += t.v.size();
    return n;
  }
};

// Fan-in for the uniform init bound. Biases stay zero; weight arrays draw
// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with a per-array forked stream, so
// the result is independent of parameter iteration order.
inline size_t init_fan_in(const std::string& name, const std::vector<int>& shape) {
  if (shape.size() == 1) return 0;        // bias
  if (name == "text_embed" || name == "pitch_embed")
    return static_cast<size_t>(shape[1]);  // rows feed C-wide features
  if (shape.size() == 2) return static_cast<size_t>(shape[1]);
  if (name == "sr.up.w") return static_cast<size_t>(shape[0]) * shape[2];  // [Cin,Cout,k]
  if (shape.size() == 3) return static_cast<size_t>(shape[1]) * shape[2];
  return static_cast<size_t>(shape[1]) * shape[2] * shape[3];
}

inline WeightSet init_weights(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  WeightSet w;
  w.config = cfg;
  const Rng root(seed);
  for (const auto& [name, shape] : param_shapes(cfg)) {
    Tensor t(shape);
    const size_t fan = init_fan_in(name, shape);
    if (fan > 0) {
      Rng rng = root.fork(name);
      const Real bound = Real(1) / std::sqrt(static_cast<Real>(fan));
      for (Real& v : t.v) v = rng.uniform(-bound, bound);
    }
    w.params.emplace(name, std::move(t));
  }
  return w;
}

inline void check_finite(const WeightSet& w) {
  for (const auto& [name, t] : w.params)
    for (Real v : t.v)
      if (!std::isfinite(v)) throw ModelError("non-finite weight in " + name);
}

// Gradient accumulator aligned with a WeightSet's parameter names.
struct Grads {
  std::map<std::string, Tensor> g;

  Tensor& at(const std::string& name, const std::vector<int>& shape) {
    auto it = g.find(name);
    if (it == g.end()) it = g.emplace(name, Tensor(shape)).first;
    return it->second;
  }
  Tensor& like(const WeightSet& w, const std::string& name) {
    return at(name, w.p(name).shape);
  }
};

}  // namespace svs::model
