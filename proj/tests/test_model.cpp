// Network-level contracts: parameter layout, hand-computed activation values,
// data-path isolation between the two decoders, causality of the mel context
// path, and gradient checks against central differences.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "svs/core/rng.hpp"
#include "svs/model/checkpoint.hpp"
#include "svs/model/config.hpp"
#include "svs/model/layers.hpp"
#include "svs/model/network.hpp"
#include "svs/model/weights.hpp"

namespace {

using namespace svs;
using namespace svs::model;

ModelConfig toy_config(int channels = 4) {
  ModelConfig cfg;
  cfg.channels = channels;
  return cfg;
}

void randomize(WeightSet& w, uint64_t seed, Real scale = 0.5) {
  Rng root(seed);
  for (auto& [name, t] : w.params) {
    Rng r = root.fork(name);
    for (Real& v : t.v) v = r.uniform(-scale, scale);
  }
}

Tensor random_tensor(const std::vector<int>& shape, uint64_t seed, Real lo = -1,
                     Real hi = 1) {
  Tensor t(shape);
  Rng r(seed);
  for (Real& v : t.v) v = r.uniform(lo, hi);
  return t;
}

std::vector<int> random_ids(int n, int vocab, uint64_t seed) {
  Rng r(seed);
  std::vector<int> ids(static_cast<size_t>(n));
  for (int& id : ids) id = static_cast<int>(r.below(static_cast<uint64_t>(vocab)));
  return ids;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape &&
         std::memcmp(a.v.data(), b.v.data(), a.v.size() * sizeof(Real)) == 0;
}

// Columns [0, t) bitwise equal, claim about the causal boundary.
bool prefix_equal(const Tensor& a, const Tensor& b, int t) {
  if (a.shape != b.shape) return false;
  for (int r = 0; r < a.shape[0]; ++r)
    for (int c = 0; c < t; ++c)
      if (a.at(r, c) != b.at(r, c)) return false;
  return true;
}

}  // namespace

TEST_CASE("parameter table and initialization", "[model]") {
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 11);

  // Independent recount of the documented shape table at C = 4.
  const int C = 4;
  auto conv_n = [](int co, int ci, int k) { return co * ci * k + co; };
  const int highway = 2 * conv_n(C, C, 3);
  size_t expected = 0;
  expected += 9 * C + 26 * C;                      // embeddings
  expected += 3 * highway * 2;                     // tenc + penc stacks
  expected += conv_n(C, 80, 1) + 3 * highway;      // menc
  expected += conv_n(C, 80, 5) + conv_n(C, C, 5);  // senc convs
  expected += 256 * C + 256;                       // senc dense
  const int gate = 2 * conv_n(C, C, 3) + 2 * C * 256;
  expected += 2 * (3 * (highway + gate) + conv_n(80, C, 1));  // fm + ps
  expected += conv_n(C, 80, 1) + (C * C * 8 + C) + 2 * highway + conv_n(513, C, 1);
  expected += conv_n(8, 1, 25) + conv_n(16, 8, 25) + conv_n(32, 16, 25);
  expected += (32 * 65 * 4) + 1;  // discriminator head
  REQUIRE(w.param_count() == expected);

  SECTION("biases zero, weights bounded by fan-in") {
    for (const auto& [name, t] : w.params) {
      if (t.shape.size() == 1) {
        for (Real v : t.v) REQUIRE(v == 0.0);
      } else {
        const Real bound = 1.0 / std::sqrt(static_cast<Real>(init_fan_in(name, t.shape)));
        Real mx = 0;
        for (Real v : t.v) mx = std::max(mx, std::abs(v));
        REQUIRE(mx <= bound);
        REQUIRE(mx > 0.0);
      }
    }
  }

  SECTION("deterministic in the seed") {
    WeightSet w2 = init_weights(cfg, 11);
    for (const auto& [name, t] : w.params) REQUIRE(bitwise_equal(t, w2.p(name)));
    WeightSet w3 = init_weights(cfg, 12);
    bool any_diff = false;
    for (const auto& [name, t] : w.params)
      if (!bitwise_equal(t, w3.p(name))) any_diff = true;
    REQUIRE(any_diff);
  }

  SECTION("embedding width is architectural") {
    ModelConfig bad = cfg;
    bad.embed_dim = 128;
    REQUIRE_THROWS_AS(init_weights(bad, 1), InvalidConfig);
  }
}

TEST_CASE("gated conditioning hand value", "[model][oracle]") {
  // Scalar case: one channel, one frame, unit weights, zero biases.
  // a = W1*x + V1*c = 1 + 1 = 2 (side taps hit padding), likewise b = 2,
  // so z = sigmoid(2) * relu(2) = 1.76159.
  Tensor x({1, 1}), c({1, 1});
  x.v[0] = 1.0;
  c.v[0] = 1.0;
  Tensor W1({1, 1, 3}), W2({1, 1, 3});
  W1.fill(1.0);
  W2.fill(1.0);
  Tensor b1({1}), b2({1});
  Tensor V1({1, 1, 1}), V2({1, 1, 1});
  V1.v[0] = 1.0;
  V2.v[0] = 1.0;

  Tensor z = gated_condition(x, c, W1, b1, W2, b2, V1, V2);
  REQUIRE(z.shape == std::vector<int>({1, 1}));
  REQUIRE(z.v[0] == Catch::Approx(1.76159).margin(1e-4));

  SECTION("zero weights give zero output") {
    W1.zero();
    W2.zero();
    V1.zero();
    V2.zero();
    Tensor z0 = gated_condition(x, c, W1, b1, W2, b2, V1, V2);
    REQUIRE(z0.v[0] == 0.0);
  }

  SECTION("output is non-negative") {
    Tensor xr = random_tensor({1, 6}, 3);
    Tensor cr = random_tensor({1, 6}, 4);
    Tensor zr = gated_condition(xr, cr, W1, b1, W2, b2, V1, V2);
    for (Real v : zr.v) REQUIRE(v >= 0.0);
  }
}

TEST_CASE("in-network gate matches tiled contract form", "[model]") {
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 5);
  randomize(w, 21);
  const int L = 7;
  Tensor x = random_tensor({4, L}, 31);
  Tensor e = random_tensor({256}, 32);

  Tensor fast = gate_forward(w, "fm.b0.g", x, e, Pad::kSame, nullptr);
  Tensor tiled = gated_condition(x, tile_condition(e, L), w.p("fm.b0.g.w1.w"),
                                 w.p("fm.b0.g.w1.b"), w.p("fm.b0.g.w2.w"),
                                 w.p("fm.b0.g.w2.b"), w.p("fm.b0.g.v1.w"),
                                 w.p("fm.b0.g.v2.w"), Pad::kSame);
  REQUIRE(bitwise_equal(fast, tiled));

  SECTION("tile_condition columns all equal the embedding") {
    Tensor c = tile_condition(e, 3);
    REQUIRE(c.shape == std::vector<int>({256, 3}));
    for (int k = 0; k < 256; ++k)
      for (int t = 0; t < 3; ++t) REQUIRE(c.at(k, t) == e.v[static_cast<size_t>(k)]);
    REQUIRE_THROWS_AS(tile_condition(e, 0), InvalidInput);
  }
}

TEST_CASE("gated conditioning gradients", "[model][gradcheck]") {
  // C = 2 channels, L = 4 frames, 5-dim condition; loss is a fixed random
  // projection of z. Every parameter, x, and e are checked against central
  // differences.
  const int C = 2, L = 4, E = 5;
  WeightSet w;  // minimal set holding just the gate arrays
  w.params.emplace("g.w1.w", random_tensor({C, C, 3}, 101, -0.8, 0.8));
  w.params.emplace("g.w1.b", random_tensor({C}, 102, -0.3, 0.3));
  w.params.emplace("g.w2.w", random_tensor({C, C, 3}, 103, -0.8, 0.8));
  w.params.emplace("g.w2.b", random_tensor({C}, 104, -0.3, 0.3));
  w.params.emplace("g.v1.w", random_tensor({C, E, 1}, 105, -0.8, 0.8));
  w.params.emplace("g.v2.w", random_tensor({C, E, 1}, 106, -0.8, 0.8));
  Tensor x = random_tensor({C, L}, 107);
  Tensor e = random_tensor({E}, 108);
  Tensor G = random_tensor({C, L}, 109);

  auto loss = [&](const WeightSet& ws, const Tensor& xs, const Tensor& es) {
    Tensor z = gate_forward(ws, "g", xs, es, Pad::kSame, nullptr);
    Real acc = 0;
    for (size_t i = 0; i < z.v.size(); ++i) acc += G.v[i] * z.v[i];
    return acc;
  };

  // Keep the relu pre-activation away from its kink so the finite-difference
  // reference is trustworthy.
  {
    GateCache cache;
    gate_forward(w, "g", x, e, Pad::kSame, &cache);
    for (Real v : cache.b.v) REQUIRE(std::abs(v) > 1e-3);
  }

  GateCache cache;
  gate_forward(w, "g", x, e, Pad::kSame, &cache);
  Grads g;
  Tensor de({E});
  Tensor dx = gate_backward(w, "g", cache, Pad::kSame, G, g, de);

  const Real eps = 1e-5;
  auto check = [&](Real analytic, Real numeric) {
    const Real denom = std::max({std::abs(analytic), std::abs(numeric), Real(1e-8)});
    REQUIRE(std::abs(analytic - numeric) / denom < 1e-4);
  };

  for (auto& [name, t] : w.params)
    for (size_t i = 0; i < t.v.size(); ++i) {
      const Real keep = t.v[i];
      t.v[i] = keep + eps;
      const Real up = loss(w, x, e);
      t.v[i] = keep - eps;
      const Real dn = loss(w, x, e);
      t.v[i] = keep;
      check(g.g.at(name).v[i], (up - dn) / (2 * eps));
    }
  for (size_t i = 0; i < x.v.size(); ++i) {
    const Real keep = x.v[i];
    x.v[i] = keep + eps;
    const Real up = loss(w, x, e);
    x.v[i] = keep - eps;
    const Real dn = loss(w, x, e);
    x.v[i] = keep;
    check(dx.v[i], (up - dn) / (2 * eps));
  }
  for (size_t i = 0; i < e.v.size(); ++i) {
    const Real keep = e.v[i];
    e.v[i] = keep + eps;
    const Real up = loss(w, x, e);
    e.v[i] = keep - eps;
    const Real dn = loss(w, x, e);
    e.v[i] = keep;
    check(de.v[i], (up - dn) / (2 * eps));
  }
}

TEST_CASE("input encoders", "[model]") {
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 7);
  const int L = 7;
  const auto T = random_ids(L, cfg.phoneme_vocab, 41);
  const auto P = random_ids(L, cfg.pitch_vocab, 42);
  Tensor M = random_tensor({80, L}, 43, 0, 1);

  EncodedFeatures f = encode_inputs(w, T, P, M);
  REQUIRE(f.e_t.shape == std::vector<int>({4, L}));
  REQUIRE(f.e_p.shape == std::vector<int>({4, L}));
  REQUIRE(f.e_m.shape == std::vector<int>({4, L}));
  for (Real v : f.e_t.v) REQUIRE(std::isfinite(v));

  SECTION("zero weights give zero features") {
    for (auto& [name, t] : w.params) t.zero();
    EncodedFeatures z = encode_inputs(w, T, P, M);
    for (Real v : z.e_t.v) REQUIRE(v == 0.0);
    for (Real v : z.e_p.v) REQUIRE(v == 0.0);
    for (Real v : z.e_m.v) REQUIRE(v == 0.0);
  }

  SECTION("input validation") {
    auto P_short = P;
    P_short.pop_back();
    REQUIRE_THROWS_AS(encode_inputs(w, T, P_short, M), InvalidInput);
    REQUIRE_THROWS_AS(encode_inputs(w, {}, {}, Tensor({80, 0})), InvalidInput);
    Tensor bad = random_tensor({79, L}, 44);
    REQUIRE_THROWS_AS(encode_inputs(w, T, P, bad), InvalidInput);
  }

  SECTION("mel context path is causal") {
    const int t = 3;
    Tensor M2 = M;
    for (int r = 0; r < 80; ++r) M2.at(r, t) += 0.25;
    EncodedFeatures f2 = encode_inputs(w, T, P, M2);
    REQUIRE(prefix_equal(f.e_m, f2.e_m, t));
    bool changed = false;
    for (int r = 0; r < 4; ++r)
      if (f.e_m.at(r, t) != f2.e_m.at(r, t)) changed = true;
    REQUIRE(changed);
  }
}

TEST_CASE("singer encoder", "[model]") {
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 13);
  randomize(w, 99, 0.2);

  SECTION("time-constant query pools to one interior frame") {
    Tensor u = random_tensor({80}, 55, 0, 1);
    Tensor q({80, 256});
    for (int r = 0; r < 80; ++r)
      for (int t = 0; t < 256; ++t) q.at(r, t) = u.v[static_cast<size_t>(r)];

    // Independent arithmetic: with identical columns and valid padding, every
    // conv output column equals the same vector, so pooling reproduces it.
    const Tensor& C1 = w.p("senc.c1.w");
    const Tensor& B1 = w.p("senc.c1.b");
    Tensor y1({4});
    for (int co = 0; co < 4; ++co) {
      Real acc = B1.v[static_cast<size_t>(co)];
      for (int ci = 0; ci < 80; ++ci)
        for (int k = 0; k < 5; ++k) acc += C1.at(co, ci, k) * u.v[static_cast<size_t>(ci)];
      y1.v[static_cast<size_t>(co)] = std::max(0.0, acc);
    }
    const Tensor& C2 = w.p("senc.c2.w");
    const Tensor& B2 = w.p("senc.c2.b");
    Tensor y2({4});
    for (int co = 0; co < 4; ++co) {
      Real acc = B2.v[static_cast<size_t>(co)];
      for (int ci = 0; ci < 4; ++ci)
        for (int k = 0; k < 5; ++k) acc += C2.at(co, ci, k) * y1.v[static_cast<size_t>(ci)];
      y2.v[static_cast<size_t>(co)] = std::max(0.0, acc);
    }
    Tensor expected = dense(y2, w.p("senc.dense.w"), &w.p("senc.dense.b"));

    Tensor e = encode_singer(w, q);
    REQUIRE(e.shape == std::vector<int>({256}));
    for (int k = 0; k < 256; ++k)
      REQUIRE(e.v[static_cast<size_t>(k)] ==
              Catch::Approx(expected.v[static_cast<size_t>(k)]).margin(1e-9));
  }

  SECTION("query shape is enforced") {
    REQUIRE_THROWS_AS(encode_singer(w, random_tensor({80, 255}, 1)), InvalidInput);
    REQUIRE_THROWS_AS(encode_singer(w, random_tensor({79, 256}, 1)), InvalidInput);
  }

  SECTION("deterministic") {
    Tensor q = random_tensor({80, 256}, 66, 0, 1);
    REQUIRE(bitwise_equal(encode_singer(w, q), encode_singer(w, q)));
  }
}

TEST_CASE("decoder data paths are disentangled", "[model][disentangle]") {
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 17);
  randomize(w, 18, 0.3);
  const int L = 9;
  const auto T = random_ids(L, cfg.phoneme_vocab, 71);
  const auto P = random_ids(L, cfg.pitch_vocab, 72);
  Tensor M = random_tensor({80, L}, 73, 0, 1);
  Tensor e_timbre = random_tensor({256}, 74, -0.5, 0.5);
  Tensor e_style = random_tensor({256}, 75, -0.5, 0.5);

  GenCache base;
  generator_forward(w, T, P, M, e_timbre, e_style, &base);

  SECTION("formant mask ignores pitch, mel context, and style embedding") {
    auto P2 = P;
    P2[2] = (P2[2] + 1) % cfg.pitch_vocab;
    Tensor M2 = random_tensor({80, L}, 99, 0, 1);
    Tensor e_style2 = random_tensor({256}, 98);
    GenCache c2;
    generator_forward(w, T, P2, M2, e_timbre, e_style2, &c2);
    REQUIRE(bitwise_equal(base.fm_out, c2.fm_out));
    REQUIRE_FALSE(bitwise_equal(base.ps_out, c2.ps_out));
  }

  SECTION("pitch skeleton ignores text and timbre embedding") {
    auto T2 = T;
    T2[4] = (T2[4] + 1) % cfg.phoneme_vocab;
    Tensor e_timbre2 = random_tensor({256}, 97);
    GenCache c2;
    generator_forward(w, T2, P, M, e_timbre2, e_style, &c2);
    REQUIRE(bitwise_equal(base.ps_out, c2.ps_out));
    REQUIRE_FALSE(bitwise_equal(base.fm_out, c2.fm_out));
  }

  SECTION("pitch skeleton is causal in the mel context") {
    const int t = 5;
    Tensor M2 = M;
    for (int r = 0; r < 80; ++r) M2.at(r, t) = 1.0 - M2.at(r, t);
    GenCache c2;
    generator_forward(w, T, P, M2, e_timbre, e_style, &c2);
    REQUIRE(prefix_equal(base.ps_out, c2.ps_out, t));
    bool changed = false;
    for (int r = 0; r < 80; ++r)
      if (base.ps_out.at(r, t) != c2.ps_out.at(r, t)) changed = true;
    REQUIRE(changed);
  }
}

TEST_CASE("mask composition", "[model][oracle]") {
  Tensor fm({2, 2}), ps({2, 2});
  fm.fill(0.5);
  ps.fill(0.8);
  Tensor m = compose_mel(fm, ps);
  for (Real v : m.v) REQUIRE(v == Catch::Approx(0.4).margin(1e-12));

  fm.fill(1.0);
  REQUIRE(bitwise_equal(compose_mel(fm, ps), ps));
  REQUIRE_THROWS_AS(compose_mel(fm, Tensor({2, 3})), InvalidInput);
}

TEST_CASE("shape closure over segment lengths", "[model]") {
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 23);
  for (int L : {1, 5, 17}) {
    const auto T = random_ids(L, cfg.phoneme_vocab, 81);
    const auto P = random_ids(L, cfg.pitch_vocab, 82);
    Tensor M = random_tensor({80, L}, 83, 0, 1);
    Tensor e = random_tensor({256}, 84);
    GenOut out = generator_forward(w, T, P, M, e, e);
    REQUIRE(out.mel.shape == std::vector<int>({80, L}));
    REQUIRE(out.linear.shape == std::vector<int>({513, 4 * L}));
    for (Real v : out.mel.v) {
      REQUIRE(v > 0.0);
      REQUIRE(v < 1.0);
    }
    for (Real v : out.linear.v) {
      REQUIRE(v > 0.0);
      REQUIRE(v < 1.0);
    }
  }
}

TEST_CASE("super resolution zero case", "[model][oracle]") {
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 29);
  for (auto& [name, t] : w.params) t.zero();
  Tensor mel({80, 8});
  Tensor out = super_resolution(w, mel);
  REQUIRE(out.shape == std::vector<int>({513, 32}));
  for (Real v : out.v) REQUIRE(v == 0.5);
}

TEST_CASE("discriminator", "[model]") {
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 31);

  SECTION("zero weights score zero") {
    WeightSet w0 = w;
    for (auto& [name, t] : w0.params) t.zero();
    Tensor patch = random_tensor({513, 32}, 91, 0, 1);
    REQUIRE(discriminate(w0, patch) == 0.0);
  }

  SECTION("deterministic and finite") {
    Tensor patch = random_tensor({513, 32}, 92, 0, 1);
    const Real a = discriminate(w, patch);
    const Real b = discriminate(w, patch);
    REQUIRE(a == b);
    REQUIRE(std::isfinite(a));
  }

  SECTION("patch shape enforced") {
    REQUIRE_THROWS_AS(discriminate(w, random_tensor({513, 31}, 93)), InvalidInput);
    REQUIRE_THROWS_AS(discriminate(w, random_tensor({512, 32}, 94)), InvalidInput);
  }
}

TEST_CASE("generator determinism", "[model]") {
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 37);
  const int L = 6;
  const auto T = random_ids(L, cfg.phoneme_vocab, 61);
  const auto P = random_ids(L, cfg.pitch_vocab, 62);
  Tensor M = random_tensor({80, L}, 63, 0, 1);
  Tensor e = random_tensor({256}, 64);
  GenOut a = generator_forward(w, T, P, M, e, e);
  GenOut b = generator_forward(w, T, P, M, e, e);
  REQUIRE(bitwise_equal(a.mel, b.mel));
  REQUIRE(bitwise_equal(a.linear, b.linear));
}

TEST_CASE("generator gradients (toy)", "[model][gradcheck]") {
  // C = 4, L = 8. Loss is a fixed random projection of both outputs; 30
  // randomly chosen parameters plus both embeddings are checked against
  // central differences at 1e-3 relative error.
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 41);
  const int L = 8;
  const auto T = random_ids(L, cfg.phoneme_vocab, 141);
  const auto P = random_ids(L, cfg.pitch_vocab, 142);
  Tensor M = random_tensor({80, L}, 143, 0, 1);
  Tensor e_t = random_tensor({256}, 144, -0.5, 0.5);
  Tensor e_s = random_tensor({256}, 145, -0.5, 0.5);
  Tensor Gm = random_tensor({80, L}, 146);
  Tensor Gl = random_tensor({513, 4 * L}, 147);

  auto loss = [&](const WeightSet& ws) {
    GenOut out = generator_forward(ws, T, P, M, e_t, e_s);
    Real acc = 0;
    for (size_t i = 0; i < out.mel.v.size(); ++i) acc += Gm.v[i] * out.mel.v[i];
    for (size_t i = 0; i < out.linear.v.size(); ++i) acc += Gl.v[i] * out.linear.v[i];
    return acc;
  };

  GenCache cache;
  generator_forward(w, T, P, M, e_t, e_s, &cache);
  Grads g;
  Tensor de_t({256}), de_s({256});
  generator_backward(w, cache, Gm, Gl, g, de_t, de_s);

  // Sample parameter coordinates across all generator arrays (the
  // discriminator is not part of this loss).
  Rng pick(4242);
  std::vector<std::string> names;
  for (const auto& [name, t] : w.params)
    if (name[0] != 'd') names.push_back(name);

  // eps trades cancellation noise (~|loss| * 1e-16 / eps) against curvature
  // bias (~eps^2); 3e-5 keeps both below 1e-4 relative for this loss scale.
  const Real eps = 3e-5;
  int checked = 0;
  Real worst = 0;
  std::string worst_name;
  Real worst_analytic = 0, worst_numeric = 0;
  while (checked < 30) {
    const std::string& name = names[pick.below(names.size())];
    Tensor& t = w.p(name);
    const size_t i = pick.below(t.v.size());
    const Real keep = t.v[i];
    t.v[i] = keep + eps;
    const Real up = loss(w);
    t.v[i] = keep - eps;
    const Real dn = loss(w);
    t.v[i] = keep;
    const Real numeric = (up - dn) / (2 * eps);
    const Real analytic = g.g.count(name) ? g.g.at(name).v[i] : 0.0;
    // The projection loss has magnitude ~50, so central differences carry
    // ~1e-9 of cancellation noise; gradients below 1e-5 are checked against
    // that absolute floor rather than relatively.
    const Real denom = std::max({std::abs(analytic), std::abs(numeric), Real(1e-5)});
    const Real rel = std::abs(analytic - numeric) / denom;
    if (rel > worst) {
      worst = rel;
      worst_name = name;
      worst_analytic = analytic;
      worst_numeric = numeric;
    }
    ++checked;
  }
  INFO("worst parameter relative error: " << worst << " at " << worst_name
       << " analytic=" << worst_analytic << " numeric=" << worst_numeric);
  REQUIRE(worst < 1e-3);

  Rng epick(777);
  Real worst_e = 0;
  for (int n = 0; n < 10; ++n) {
    const size_t i = epick.below(256);
    for (auto* pair : {&e_t, &e_s}) {
      Tensor& e = *pair;
      const Real keep = e.v[i];
      e.v[i] = keep + eps;
      const Real up = loss(w);
      e.v[i] = keep - eps;
      const Real dn = loss(w);
      e.v[i] = keep;
      const Real numeric = (up - dn) / (2 * eps);
      const Real analytic = (pair == &e_t ? de_t : de_s).v[i];
      const Real denom = std::max({std::abs(analytic), std::abs(numeric), Real(1e-6)});
      worst_e = std::max(worst_e, std::abs(analytic - numeric) / denom);
    }
  }
  INFO("worst embedding relative error: " << worst_e);
  REQUIRE(worst_e < 1e-3);
}

TEST_CASE("singer encoder gradients", "[model][gradcheck]") {
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 43);
  Tensor q = random_tensor({80, 256}, 151, 0, 1);
  Tensor G = random_tensor({256}, 152);

  auto loss = [&](const WeightSet& ws) {
    Tensor e = encode_singer(ws, q);
    Real acc = 0;
    for (size_t i = 0; i < e.v.size(); ++i) acc += G.v[i] * e.v[i];
    return acc;
  };

  SingerEncCache cache;
  encode_singer(w, q, &cache);
  Grads g;
  encode_singer_backward(w, cache, G, g);

  Rng pick(5353);
  const std::vector<std::string> names = {"senc.c1.w", "senc.c1.b", "senc.c2.w",
                                          "senc.c2.b", "senc.dense.w", "senc.dense.b"};
  const Real eps = 1e-5;
  Real worst = 0;
  for (int n = 0; n < 18; ++n) {
    const std::string& name = names[pick.below(names.size())];
    Tensor& t = w.p(name);
    const size_t i = pick.below(t.v.size());
    const Real keep = t.v[i];
    t.v[i] = keep + eps;
    const Real up = loss(w);
    t.v[i] = keep - eps;
    const Real dn = loss(w);
    t.v[i] = keep;
    const Real numeric = (up - dn) / (2 * eps);
    const Real analytic = g.g.count(name) ? g.g.at(name).v[i] : 0.0;
    const Real denom = std::max({std::abs(analytic), std::abs(numeric), Real(1e-6)});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  INFO("worst relative error: " << worst);
  REQUIRE(worst < 1e-3);
}

TEST_CASE("discriminator gradients", "[model][gradcheck]") {
  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 47);
  Tensor patch = random_tensor({513, 32}, 161, 0, 1);

  auto loss = [&](const WeightSet& ws, const Tensor& p) {
    const Real d = discriminate(ws, p);
    return (d - 1.0) * (d - 1.0);
  };

  DiscCache cache;
  const Real d0 = discriminate(w, patch, &cache);
  Grads g;
  Tensor dpatch = discriminate_backward(w, cache, 2.0 * (d0 - 1.0), g);

  Rng pick(6464);
  const std::vector<std::string> names = {"d.c1.w", "d.c1.b", "d.c2.w", "d.c2.b",
                                          "d.c3.w", "d.c3.b", "d.dense.w", "d.dense.b"};
  const Real eps = 1e-5;
  Real worst = 0;
  for (int n = 0; n < 16; ++n) {
    const std::string& name = names[pick.below(names.size())];
    Tensor& t = w.p(name);
    const size_t i = pick.below(t.v.size());
    const Real keep = t.v[i];
    t.v[i] = keep + eps;
    const Real up = loss(w, patch);
    t.v[i] = keep - eps;
    const Real dn = loss(w, patch);
    t.v[i] = keep;
    const Real numeric = (up - dn) / (2 * eps);
    const Real analytic = g.g.count(name) ? g.g.at(name).v[i] : 0.0;
    const Real denom = std::max({std::abs(analytic), std::abs(numeric), Real(1e-6)});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  INFO("worst relative error: " << worst);
  REQUIRE(worst < 1e-3);

  Rng ppick(7575);
  for (int n = 0; n < 8; ++n) {
    const size_t i = ppick.below(patch.v.size());
    const Real keep = patch.v[i];
    patch.v[i] = keep + eps;
    const Real up = loss(w, patch);
    patch.v[i] = keep - eps;
    const Real dn = loss(w, patch);
    patch.v[i] = keep;
    const Real numeric = (up - dn) / (2 * eps);
    const Real denom = std::max({std::abs(dpatch.v[i]), std::abs(numeric), Real(1e-6)});
    REQUIRE(std::abs(dpatch.v[i] - numeric) / denom < 1e-3);
  }
}

TEST_CASE("weights file round trip", "[model][checkpoint]") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "svs_model_ckpt";
  fs::create_directories(dir);

  const ModelConfig cfg = toy_config(4);
  WeightSet w = init_weights(cfg, 53);
  w.mel_norm = {-11.5, 2.25};
  w.linear_norm = {-11.5, 3.5};

  const std::string p1 = (dir / "a.bin").string();
  const std::string p2 = (dir / "b.bin").string();
  save_weights(p1, w);
  WeightSet r = load_weights(p1);
  REQUIRE(r.config == cfg);
  REQUIRE(r.mel_norm.lo == w.mel_norm.lo);
  REQUIRE(r.linear_norm.hi == w.linear_norm.hi);
  for (const auto& [name, t] : w.params) REQUIRE(bitwise_equal(t, r.p(name)));

  SECTION("save -> load -> save is byte stable") {
    save_weights(p2, r);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::vector<char> b1((std::istreambuf_iterator<char>(f1)), {});
    std::vector<char> b2((std::istreambuf_iterator<char>(f2)), {});
    REQUIRE(b1 == b2);
    REQUIRE_FALSE(b1.empty());
  }

  SECTION("truncation is detected") {
    std::ifstream f1(p1, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(f1)), {});
    bytes.resize(bytes.size() / 2);
    const std::string pt = (dir / "trunc.bin").string();
    std::ofstream out(pt, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    REQUIRE_THROWS_AS(load_weights(pt), CheckpointError);
  }

  SECTION("foreign file is rejected") {
    const std::string pg = (dir / "garbage.bin").string();
    std::ofstream out(pg, std::ios::binary);
    out << "definitely not a weights file, long enough to pass the magic read";
    out.close();
    REQUIRE_THROWS_AS(load_weights(pg), CheckpointError);
  }
}
