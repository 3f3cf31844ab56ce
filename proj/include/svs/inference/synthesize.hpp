#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "svs/corpus/types.hpp"
#include "svs/dsp/griffin_lim.hpp"
#include "svs/model/network.hpp"

namespace svs::inference {

constexpr int kMaxScoreFrames = 4096;

// Frame-aligned phoneme/pitch id streams, the same mapping the corpus
// example builder uses: rests put id 0 on both streams.
inline void frame_ids(const corpus::ScoreSequence& score, std::vector<int>& phonemes,
                      std::vector<int>& pitches) {
  const int total = score.total_frames();
  if (total < 1) throw InvalidInput("frame_ids: empty score");
  if (total > kMaxScoreFrames)
    throw InvalidInput("frame_ids: score exceeds " + std::to_string(kMaxScoreFrames) +
                       " frames");
  phonemes.assign(static_cast<size_t>(total), 0);
  pitches.assign(static_cast<size_t>(total), 0);
  int cursor = 0;
  for (const auto& note : score.notes) {
    const int pid = note.phoneme == "-" ? 0 : corpus::phoneme_id(note.phoneme);
    const int tid = note.phoneme == "-" ? 0 : corpus::pitch_id(note.midi_pitch);
    for (int k = 0; k < note.duration_frames; ++k) {
      phonemes[static_cast<size_t>(cursor + k)] = pid;
      pitches[static_cast<size_t>(cursor + k)] = tid;
    }
    cursor += note.duration_frames;
  }
}

struct SynthFeatures {
  Tensor fm;      // [80 x L]
  Tensor ps;      // [80 x L]
  Tensor mel;     // [80 x L], fm * ps
  Tensor linear;  // [513 x 4L]
};

// Autoregressive generation. The formant mask has no mel dependence, so it
// is decoded for the whole score in one pass; the pitch skeleton feeds
// predicted mel frames back one frame at a time, starting from a zero frame.
//
// Each step recomputes the causal chain (mel context encoder + pitch
// skeleton decoder) on the trailing window [t - R, t], R the chain's
// receptive field. Frame t of a causal stack depends on layer-k activations
// no older than t minus the reach of the layers above k, and those
// activations in turn never read below the window start, so the windowed
// result is bit-identical to running the full prefix. The loop is therefore
// exactly the training-time computation applied to its own output, at
// O(L * R) cost instead of O(L^2).
inline SynthFeatures synthesize_features(const model::WeightSet& w,
                                         const std::vector<int>& phonemes,
                                         const std::vector<int>& pitches,
                                         const Tensor& e_timbre, const Tensor& e_style) {
  model::check_finite(w);
  if (phonemes.empty() || phonemes.size() != pitches.size())
    throw InvalidInput("synthesize_features: bad id streams");
  const auto& cfg = w.config;
  const int L = static_cast<int>(phonemes.size());

  const Tensor e_t = model::encode_tokens(w, "text_embed", "tenc", phonemes, nullptr);
  const Tensor e_p = model::encode_tokens(w, "pitch_embed", "penc", pitches, nullptr);

  SynthFeatures out;
  out.fm = model::formant_mask_decoder(w, e_t, e_timbre);
  out.ps = Tensor({cfg.n_mels, L});
  out.mel = Tensor({cfg.n_mels, L});

  const int R = model::causal_receptive_field(cfg);
  for (int t = 0; t < L; ++t) {
    const int s = std::max(0, t - R);
    const int wlen = t - s + 1;
    Tensor m_prev({cfg.n_mels, wlen});
    for (int j = 0; j < wlen; ++j) {
      const int col = s + j;
      if (col == 0) continue;  // M_0 is the zero frame
      for (int r = 0; r < cfg.n_mels; ++r)
        m_prev.at(r, j) = out.mel.at(r, col - 1);
    }
    const Tensor e_m = model::encode_mel(w, m_prev, nullptr);
    Tensor e_p_win({cfg.channels, wlen});
    for (int r = 0; r < cfg.channels; ++r)
      for (int j = 0; j < wlen; ++j) e_p_win.at(r, j) = e_p.at(r, s + j);
    const Tensor ps = model::pitch_skeleton_decoder(w, e_m, e_p_win, e_style);
    for (int r = 0; r < cfg.n_mels; ++r) {
      const Real v = ps.at(r, wlen - 1);
      out.ps.at(r, t) = v;
      out.mel.at(r, t) = out.fm.at(r, t) * v;
    }
  }

  out.linear = model::super_resolution(w, out.mel);
  for (Real v : out.linear.v)
    if (!std::isfinite(v)) throw ModelError("synthesis produced non-finite output");
  return out;
}

// Normalized network output -> waveform. The linear stream lives on the
// corpus log-magnitude scale stamped into the weights at training time; a
// model that never trained has no scale to invert.
inline dsp::AudioClip features_to_audio(const model::WeightSet& w, const Tensor& linear,
                                        int gl_iters = 60) {
  if (!w.linear_norm.valid())
    throw ModelError("weights carry no normalization statistics; train a model first");
  dsp::LinearSpectrogram spec;
  spec.values = linear;
  spec.hop_samples = 256;
  spec.norm = w.linear_norm;
  return dsp::griffin_lim(spec, gl_iters);
}

struct SynthResult {
  Tensor fm, ps, mel, linear;
  dsp::AudioClip clip;
};

// Formant mask conditioned on the timbre donor, pitch skeleton on the style
// donor. With the same query on both sides this IS plain synthesis.
inline SynthResult cross_synthesize(const model::WeightSet& w,
                                    const corpus::ScoreSequence& score,
                                    const Tensor& timbre_query, const Tensor& style_query,
                                    int gl_iters = 60) {
  std::vector<int> phonemes, pitches;
  frame_ids(score, phonemes, pitches);
  const Tensor e_t = model::encode_singer(w, timbre_query);
  const Tensor e_s = model::encode_singer(w, style_query);
  SynthFeatures f = synthesize_features(w, phonemes, pitches, e_t, e_s);
  SynthResult r{std::move(f.fm), std::move(f.ps), std::move(f.mel), std::move(f.linear), {}};
  r.clip = features_to_audio(w, r.linear, gl_iters);
  return r;
}

inline SynthResult synthesize(const model::WeightSet& w, const corpus::ScoreSequence& score,
                              const Tensor& query, int gl_iters = 60) {
  return cross_synthesize(w, score, query, query, gl_iters);
}

// One blended embedding drives both decoders. Endpoints bypass the blend
// arithmetic so alpha = 0 / 1 reproduce plain synthesis bit for bit.
inline SynthResult interpolate_singers(const model::WeightSet& w, const Tensor& query_a,
                                       const Tensor& query_b, double alpha,
                                       const corpus::ScoreSequence& score,
                                       int gl_iters = 60) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw InvalidInput("interpolate_singers: alpha must lie in [0, 1]");
  std::vector<int> phonemes, pitches;
  frame_ids(score, phonemes, pitches);
  const Tensor e_a = model::encode_singer(w, query_a);
  const Tensor e_b = model::encode_singer(w, query_b);
  Tensor e = e_a;
  if (alpha == 1.0) {
    e = e_b;
  } else if (alpha > 0.0) {
    for (size_t i = 0; i < e.v.size(); ++i)
      e.v[i] = (1.0 - alpha) * e_a.v[i] + alpha * e_b.v[i];
  }
  SynthFeatures f = synthesize_features(w, phonemes, pitches, e, e);
  SynthResult r{std::move(f.fm), std::move(f.ps), std::move(f.mel), std::move(f.linear), {}};
  r.clip = features_to_audio(w, r.linear, gl_iters);
  return r;
}

}  // namespace svs::inference
