#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "svs/core/rng.hpp"
#include "svs/corpus/build.hpp"
#include "svs/corpus/examples.hpp"
#include "svs/model/checkpoint.hpp"
#include "svs/model/network.hpp"
#include "svs/training/config.hpp"
#include "svs/training/loss.hpp"

namespace svs::training {

struct TrainState {
  model::WeightSet weights;
  std::map<std::string, Tensor> m, v;  // Adam moments, keyed like the params
  uint64_t adam_t = 0;
  uint64_t step = 0;  // completed optimizer steps
  uint64_t seed = 0;  // root of every stochastic choice made while training
  double best_eval = std::numeric_limits<double>::infinity();
};

inline bool is_disc_param(const std::string& name) { return name.rfind("d.", 0) == 0; }

inline TrainState init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.weights = model::init_weights(cfg.model_config(), cfg.seed);
  st.seed = cfg.seed;
  for (const auto& [name, t] : st.weights.params) {
    st.m.emplace(name, Tensor(t.shape));
    st.v.emplace(name, Tensor(t.shape));
  }
  return st;
}

// ---------------------------------------------------------------------------
// Optimizer: Adam with a global-norm clip applied separately to the
// generator and discriminator parameter groups.

inline double grad_norm(const model::Grads& g, bool disc) {
  double s = 0;
  for (const auto& [name, t] : g.g) {
    if (is_disc_param(name) != disc) continue;
    for (Real x : t.v) s += static_cast<double>(x) * x;
  }
  return std::sqrt(s);
}

inline void adam_apply(TrainState& state, const model::Grads& g, bool disc,
                       const TrainConfig& cfg, uint64_t t) {
  const double norm = grad_norm(g, disc);
  const double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (const auto& [name, gt] : g.g) {
    if (is_disc_param(name) != disc) continue;
    Tensor& p = state.weights.p(name);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (size_t i = 0; i < p.v.size(); ++i) {
      const double gr = gt.v[i] * scale;
      m.v[i] = b1 * m.v[i] + (1.0 - b1) * gr;
      v.v[i] = b2 * v.v[i] + (1.0 - b2) * gr * gr;
      p.v[i] -= cfg.lr * (m.v[i] / bc1) / (std::sqrt(v.v[i] / bc2) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Batch item view trimmed to valid frames. Batches pad at the tail, so the
// mask is a prefix of ones; slicing the prefix both skips wasted compute and
// keeps padded frames out of every loss by construction.

struct ItemView {
  std::vector<int> phonemes, pitches;
  Tensor mel_input, mel_target, linear_target, query;
  int len = 0;
};

inline ItemView slice_item(const corpus::Batch& batch, size_t b) {
  const int Lmax = static_cast<int>(batch.max_frames);
  ItemView it;
  for (int t = 0; t < Lmax; ++t)
    if (batch.mask.at(static_cast<int>(b), t) > Real(0.5)) ++it.len;
  const int L = it.len;
  if (L == 0) throw InvalidInput("slice_item: empty item");
  it.phonemes.assign(batch.phoneme_ids[b].begin(), batch.phoneme_ids[b].begin() + L);
  it.pitches.assign(batch.pitch_ids[b].begin(), batch.pitch_ids[b].begin() + L);
  it.mel_input = Tensor({80, L});
  it.mel_target = Tensor({80, L});
  for (int r = 0; r < 80; ++r)
    for (int t = 0; t < L; ++t) {
      it.mel_input.at(r, t) = batch.mel_input.at(static_cast<int>(b), r, t);
      it.mel_target.at(r, t) = batch.mel_target.at(static_cast<int>(b), r, t);
    }
  it.linear_target = Tensor({513, 4 * L});
  for (int r = 0; r < 513; ++r)
    for (int t = 0; t < 4 * L; ++t)
      it.linear_target.at(r, t) = batch.linear_target.at(static_cast<int>(b), r, t);
  it.query = Tensor({80, 256});
  for (int r = 0; r < 80; ++r)
    for (int t = 0; t < 256; ++t)
      it.query.at(r, t) = batch.query.at(static_cast<int>(b), r, t);
  return it;
}

// ---------------------------------------------------------------------------
// One optimizer step: generator update from the reconstruction losses plus
// the least-squares adversarial term, then one discriminator update on the
// same patches. Everything is a pure function of (state, batch, config).

inline LossReport train_step(TrainState& state, const corpus::Batch& batch,
                             const TrainConfig& cfg) {
  model::WeightSet& w = state.weights;
  const double lambda = cfg.use_adversarial ? cfg.lambda_adv : 0.0;
  const Rng srng = Rng(state.seed).fork("train_step", state.step);

  const size_t B = batch.size();
  if (B == 0) throw InvalidInput("train_step: empty batch");
  std::vector<int> lens(B);
  std::int64_t total_frames = 0;
  for (size_t b = 0; b < B; ++b) {
    int len = 0;
    for (size_t t = 0; t < batch.max_frames; ++t)
      if (batch.mask.at(static_cast<int>(b), static_cast<int>(t)) > Real(0.5)) ++len;
    lens[b] = len;
    total_frames += len;
  }
  const Real n_mel = Real(80) * static_cast<Real>(total_frames);
  const Real n_lin = Real(513) * Real(4) * static_cast<Real>(total_frames);

  struct PatchRef {
    size_t item;
    int offset;
  };
  std::vector<PatchRef> plan;
  if (cfg.use_adversarial && cfg.patches_per_item > 0)
    for (size_t b = 0; b < B; ++b) {
      const int lin_len = 4 * lens[b];
      if (lin_len < model::kPatchFrames) continue;
      for (int k = 0; k < cfg.patches_per_item; ++k) {
        const int off = static_cast<int>(
            srng.fork("patch", b, static_cast<uint64_t>(k))
                .below(static_cast<uint64_t>(lin_len - model::kPatchFrames + 1)));
        plan.push_back({b, off});
      }
    }
  const size_t n_patch = plan.size();

  model::Grads g;
  double l1m = 0, l1l = 0;
  std::vector<double> d_fake, d_real;
  std::vector<model::DiscCache> fake_caches;
  std::vector<Tensor> real_patches;
  size_t plan_pos = 0;

  for (size_t b = 0; b < B; ++b) {
    ItemView it = slice_item(batch, b);
    model::SingerEncCache sc;
    Tensor e = model::encode_singer(w, it.query, &sc);
    model::GenCache gc;
    model::GenOut out =
        model::generator_forward(w, it.phonemes, it.pitches, it.mel_input, e, e, &gc);

    Tensor dmel = zeros_like(out.mel);
    for (size_t i = 0; i < dmel.v.size(); ++i) {
      const Real d = out.mel.v[i] - it.mel_target.v[i];
      l1m += std::abs(d);
      dmel.v[i] = (d > 0 ? Real(1) : d < 0 ? Real(-1) : Real(0)) / n_mel;
    }
    Tensor dlin = zeros_like(out.linear);
    for (size_t i = 0; i < dlin.v.size(); ++i) {
      const Real d = out.linear.v[i] - it.linear_target.v[i];
      l1l += std::abs(d);
      dlin.v[i] = (d > 0 ? Real(1) : d < 0 ? Real(-1) : Real(0)) / n_lin;
    }

    model::Grads scratch;  // adv_g must not touch discriminator grads
    while (plan_pos < plan.size() && plan[plan_pos].item == b) {
      const int off = plan[plan_pos].offset;
      Tensor patch({513, model::kPatchFrames});
      for (int r = 0; r < 513; ++r)
        for (int t = 0; t < model::kPatchFrames; ++t)
          patch.at(r, t) = out.linear.at(r, off + t);
      model::DiscCache dc;
      const double df = model::discriminate(w, patch, &dc);
      d_fake.push_back(df);
      if (lambda > 0) {
        Tensor dpatch = model::discriminate_backward(
            w, dc, lambda * 2.0 * (df - 1.0) / static_cast<double>(n_patch), scratch);
        for (int r = 0; r < 513; ++r)
          for (int t = 0; t < model::kPatchFrames; ++t)
            dlin.at(r, off + t) += dpatch.at(r, t);
      }
      fake_caches.push_back(std::move(dc));
      Tensor rp({513, model::kPatchFrames});
      for (int r = 0; r < 513; ++r)
        for (int t = 0; t < model::kPatchFrames; ++t)
          rp.at(r, t) = it.linear_target.at(r, off + t);
      real_patches.push_back(std::move(rp));
      ++plan_pos;
    }

    Tensor de_t({w.config.embed_dim}), de_s({w.config.embed_dim});
    model::generator_backward(w, gc, dmel, dlin, g, de_t, de_s);
    for (size_t i = 0; i < de_t.v.size(); ++i) de_t.v[i] += de_s.v[i];
    model::encode_singer_backward(w, sc, de_t, g);
  }

  l1m /= n_mel;
  l1l /= n_lin;
  if (!std::isfinite(l1m) || !std::isfinite(l1l))
    throw ModelError("non-finite loss at step " + std::to_string(state.step + 1) +
                     ": l1_mel=" + std::to_string(l1m) +
                     " l1_linear=" + std::to_string(l1l));

  const uint64_t t_adam = ++state.adam_t;
  adam_apply(state, g, /*disc=*/false, cfg, t_adam);

  AdvLosses adv;
  if (cfg.use_adversarial && n_patch > 0) {
    model::Grads gd;
    for (size_t i = 0; i < fake_caches.size(); ++i)
      model::discriminate_backward(w, fake_caches[i],
                                   2.0 * d_fake[i] / static_cast<double>(n_patch), gd);
    for (const Tensor& rp : real_patches) {
      model::DiscCache rc;
      const double dr = model::discriminate(w, rp, &rc);
      d_real.push_back(dr);
      model::discriminate_backward(w, rc, 2.0 * (dr - 1.0) / static_cast<double>(n_patch),
                                   gd);
    }
    adv = adversarial_losses(d_real, d_fake);
    if (!std::isfinite(adv.adv_d) || !std::isfinite(adv.adv_g))
      throw ModelError("non-finite adversarial loss at step " +
                       std::to_string(state.step + 1));
    adam_apply(state, gd, /*disc=*/true, cfg, t_adam);
  }

  LossReport r;
  r.l1_mel = l1m;
  r.l1_linear = l1l;
  r.adv_g = adv.adv_g;
  r.adv_d = adv.adv_d;
  r.total = l1m + l1l + lambda * adv.adv_g;
  r.step = ++state.step;
  state.best_eval = std::min(state.best_eval, r.total);
  return r;
}

// ---------------------------------------------------------------------------
// Checkpointing: one container file holding the weights (with config and
// normalization), both moment maps, and the loop counters. Maps serialize
// sorted, so save -> load -> save is byte-stable. Writes go through a temp
// file and rename, so a crash never leaves a half-written checkpoint behind.

inline constexpr char kCkptMagic[8] = {'S', 'V', 'S', 'C', 'K', 'P', 'T', '1'};

inline void save_checkpoint(const std::string& path, const TrainState& st) {
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open " + tmp + " for writing");
    model::ckio::put_bytes(os, kCkptMagic, sizeof kCkptMagic);
    model::ckio::put_weights_body(os, st.weights);
    model::ckio::put_tensor_map(os, st.m);
    model::ckio::put_tensor_map(os, st.v);
    model::ckio::put<uint64_t>(os, st.adam_t);
    model::ckio::put<uint64_t>(os, st.step);
    model::ckio::put<uint64_t>(os, st.seed);
    model::ckio::put<double>(os, st.best_eval);
    os.flush();
    if (!os) throw CheckpointError("write failed: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place: " + ec.message());
}

inline TrainState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  char magic[8];
  model::ckio::get_bytes(is, magic, sizeof magic);
  if (std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw CheckpointError("not a training checkpoint: " + path);
  TrainState st;
  st.weights = model::ckio::get_weights_body(is);
  st.m = model::ckio::get_tensor_map(is);
  st.v = model::ckio::get_tensor_map(is);
  st.adam_t = model::ckio::get<uint64_t>(is);
  st.step = model::ckio::get<uint64_t>(is);
  st.seed = model::ckio::get<uint64_t>(is);
  st.best_eval = model::ckio::get<double>(is);
  if (is.peek() != std::char_traits<char>::eof())
    throw CheckpointError("trailing bytes in " + path);
  for (const auto& [name, t] : st.weights.params) {
    auto im = st.m.find(name);
    auto iv = st.v.find(name);
    if (im == st.m.end() || iv == st.v.end() || im->second.shape != t.shape ||
        iv->second.shape != t.shape)
      throw CheckpointError("optimizer moments do not match parameters");
  }
  return st;
}

inline void append_loss_csv(const std::string& path, const LossReport& r) {
  namespace fs = std::filesystem;
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw IoError("cannot open loss log: " + path);
  if (fresh) os << "step,l1_mel,l1_linear,adv_g,adv_d,total\n";
  os << r.step << ',' << std::setprecision(17) << r.l1_mel << ',' << r.l1_linear << ','
     << r.adv_g << ',' << r.adv_d << ',' << r.total << '\n';
  if (!os) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Training loop. Resuming from a checkpoint reproduces the exact step
// sequence a single uninterrupted run would have produced: the batch
// iterator seeks to the stored step and every stochastic choice is keyed on
// (seed, step).

struct TrainResult {
  std::string checkpoint_path;
  std::string csv_path;
  LossReport last;
};

inline TrainResult run_training(
    const TrainConfig& cfg, const std::string& resume_path = "",
    const std::function<void(const LossReport&)>& on_step = {}) {
  cfg.validate();
  if (cfg.corpus_dir.empty()) throw InvalidConfig("corpus_dir is required");
  corpus::LoadedCorpus corpus = corpus::load_corpus(cfg.corpus_dir);
  const auto examples = corpus::make_examples(corpus, "train", cfg.segment_cap);
  corpus::BatchIterator it(corpus, examples, cfg.batch_size, cfg.seed);

  TrainState st;
  if (!resume_path.empty()) {
    st = load_checkpoint(resume_path);
    if (!(st.weights.config == cfg.model_config()))
      throw InvalidConfig("checkpoint architecture differs from config");
  } else {
    st = init_train_state(cfg);
    st.weights.mel_norm = corpus.mel_norm;
    st.weights.linear_norm = corpus.linear_norm;
  }

  std::filesystem::create_directories(cfg.out_dir);
  const std::string ckpt = cfg.out_dir + "/checkpoint.bin";
  const std::string csv = cfg.out_dir + "/loss.csv";

  it.seek(st.step);
  TrainResult res{ckpt, csv, {}};
  while (st.step < static_cast<uint64_t>(cfg.max_steps)) {
    const corpus::Batch batch = it.next();
    const LossReport r = train_step(st, batch, cfg);
    append_loss_csv(csv, r);
    if (on_step) on_step(r);
    if (r.step % static_cast<uint64_t>(cfg.checkpoint_every) == 0 ||
        r.step == static_cast<uint64_t>(cfg.max_steps))
      save_checkpoint(ckpt, st);
    res.last = r;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Gradient check: central differences through the full generator loss on a
// synthetic toy problem. Returns the worst relative error over n_params
// randomly chosen generator parameters.

namespace detail {

struct GcProblem {
  std::vector<int> phonemes, pitches;
  Tensor mel_input, mel_target, linear_target, query;
  std::vector<Real> mask;
  double lambda = 0;
};

inline GcProblem gc_problem(const model::ModelConfig& cfg, uint64_t seed, int L = 8) {
  GcProblem p;
  Rng rng = Rng(seed).fork("gc_problem");
  p.phonemes.resize(static_cast<size_t>(L));
  p.pitches.resize(static_cast<size_t>(L));
  for (int& id : p.phonemes)
    id = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.phoneme_vocab)));
  for (int& id : p.pitches)
    id = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.pitch_vocab)));
  auto rand_01 = [&rng](Tensor& t) {
    for (Real& v : t.v) v = rng.uniform(0.0, 1.0);
  };
  p.mel_input = Tensor({cfg.n_mels, L});
  p.mel_target = Tensor({cfg.n_mels, L});
  p.linear_target = Tensor({cfg.n_linear_bins, 4 * L});
  p.query = Tensor({cfg.n_mels, 256});
  rand_01(p.mel_input);
  rand_01(p.mel_target);
  rand_01(p.linear_target);
  rand_01(p.query);
  p.mask.assign(static_cast<size_t>(L), Real(1));
  p.lambda = cfg.use_adversarial ? cfg.adversarial_weight : 0.0;
  return p;
}

inline double gc_loss(const model::WeightSet& w, const GcProblem& p) {
  Tensor e = model::encode_singer(w, p.query);
  model::GenOut out =
      model::generator_forward(w, p.phonemes, p.pitches, p.mel_input, e, e);
  double loss = reconstruction_loss(out.mel, p.mel_target, p.mask, 1) +
                reconstruction_loss(out.linear, p.linear_target, p.mask, 4);
  if (p.lambda > 0) {
    // Toy segments are exactly one patch wide; the whole output is the patch.
    const double df = model::discriminate(w, out.linear);
    loss += p.lambda * (df - 1.0) * (df - 1.0);
  }
  return loss;
}

inline double gc_grads(const model::WeightSet& w, const GcProblem& p, model::Grads& g) {
  model::SingerEncCache sc;
  Tensor e = model::encode_singer(w, p.query, &sc);
  model::GenCache gc;
  model::GenOut out =
      model::generator_forward(w, p.phonemes, p.pitches, p.mel_input, e, e, &gc);
  Tensor dmel, dlin;
  double loss = reconstruction_loss(out.mel, p.mel_target, p.mask, 1, &dmel) +
                reconstruction_loss(out.linear, p.linear_target, p.mask, 4, &dlin);
  if (p.lambda > 0) {
    model::DiscCache dc;
    const double df = model::discriminate(w, out.linear, &dc);
    loss += p.lambda * (df - 1.0) * (df - 1.0);
    model::Grads scratch;
    Tensor dpatch =
        model::discriminate_backward(w, dc, p.lambda * 2.0 * (df - 1.0), scratch);
    for (size_t i = 0; i < dlin.v.size(); ++i) dlin.v[i] += dpatch.v[i];
  }
  Tensor de_t({w.config.embed_dim}), de_s({w.config.embed_dim});
  model::generator_backward(w, gc, dmel, dlin, g, de_t, de_s);
  for (size_t i = 0; i < de_t.v.size(); ++i) de_t.v[i] += de_s.v[i];
  model::encode_singer_backward(w, sc, de_t, g);
  return loss;
}

}  // namespace detail

// Exhaustive central-difference check of the gated-conditioning block in
// isolation (every parameter plus both inputs), against a fixed random
// projection loss. Retries the seed fork until all relu pre-activations
// clear the kink, so the finite-difference reference stays trustworthy.
inline double gated_block_gradient_check(uint64_t seed, double eps = 1e-5) {
  const int C = 2, L = 4, E = 5;
  model::WeightSet w;
  Tensor x({C, L}), e({E}), G({C, L});
  model::GateCache cache;
  for (uint64_t attempt = 0;; ++attempt) {
    Rng rng = Rng(seed).fork("gated_check", attempt);
    auto fill = [&rng](Tensor& t, double lo, double hi) {
      for (Real& v : t.v) v = rng.uniform(lo, hi);
    };
    w.params.clear();
    for (const char* name : {"g.w1.w", "g.w2.w"})
      w.params.emplace(name, Tensor({C, C, 3}));
    for (const char* name : {"g.w1.b", "g.w2.b"}) w.params.emplace(name, Tensor({C}));
    for (const char* name : {"g.v1.w", "g.v2.w"})
      w.params.emplace(name, Tensor({C, E, 1}));
    for (auto& [name, t] : w.params)
      fill(t, t.shape.size() == 1 ? -0.3 : -0.8, t.shape.size() == 1 ? 0.3 : 0.8);
    fill(x, -1.0, 1.0);
    fill(e, -1.0, 1.0);
    fill(G, -1.0, 1.0);
    model::gate_forward(w, "g", x, e, model::Pad::kSame, &cache);
    bool clear = true;
    for (Real v : cache.b.v) clear = clear && std::abs(v) > 1e-3;
    if (clear) break;
  }

  auto loss = [&](const Tensor& xs, const Tensor& es) {
    Tensor z = model::gate_forward(w, "g", xs, es, model::Pad::kSame, nullptr);
    Real acc = 0;
    for (size_t i = 0; i < z.v.size(); ++i) acc += G.v[i] * z.v[i];
    return acc;
  };

  model::Grads g;
  Tensor de({E});
  Tensor dx = model::gate_backward(w, "g", cache, model::Pad::kSame, G, g, de);

  double worst = 0;
  auto compare = [&](double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  auto sweep = [&](Tensor& t, const Tensor& analytic) {
    for (size_t i = 0; i < t.v.size(); ++i) {
      const Real keep = t.v[i];
      t.v[i] = keep + eps;
      const double up = loss(x, e);
      t.v[i] = keep - eps;
      const double dn = loss(x, e);
      t.v[i] = keep;
      compare(analytic.v[i], (up - dn) / (2 * eps));
    }
  };
  for (auto& [name, t] : w.params) sweep(t, g.g.at(name));
  sweep(x, dx);
  sweep(e, de);
  return worst;
}

inline double gradient_check(const model::ModelConfig& toy_cfg, uint64_t seed,
                             int n_params = 50, double eps = 1e-5) {
  toy_cfg.validate();
  model::WeightSet w = model::init_weights(toy_cfg, seed);
  detail::GcProblem p = detail::gc_problem(toy_cfg, seed);

  model::Grads g;
  detail::gc_grads(w, p, g);

  std::vector<std::string> names;
  for (const auto& [name, t] : w.params)
    if (!is_disc_param(name)) names.push_back(name);

  Rng pick = Rng(seed).fork("gc_pick");
  double worst = 0;
  for (int n = 0; n < n_params; ++n) {
    const std::string& name = names[pick.below(names.size())];
    Tensor& t = w.p(name);
    const size_t i = pick.below(t.v.size());
    const Real keep = t.v[i];
    t.v[i] = keep + eps;
    const double up = detail::gc_loss(w, p);
    t.v[i] = keep - eps;
    const double dn = detail::gc_loss(w, p);
    t.v[i] = keep;
    const double numeric = (up - dn) / (2 * eps);
    const double analytic = g.g.count(name) ? g.g.at(name).v[i] : 0.0;
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace svs::training
