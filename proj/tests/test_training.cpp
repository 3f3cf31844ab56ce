#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "svs/corpus/build.hpp"
#include "svs/corpus/examples.hpp"
#include "svs/training/trainer.hpp"

using namespace svs;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

std::filesystem::path temp_root() {
  const auto p = std::filesystem::temp_directory_path() / "svs_training_tests";
  std::filesystem::create_directories(p);
  return p;
}

// Directory wiped before use; the loss log appends across runs, so stale
// files from an earlier test invocation would corrupt line counts.
std::filesystem::path fresh_dir(const std::string& name) {
  const auto p = temp_root() / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Two singers, two songs each (one train + one test per singer), built once
// per process. Everything downstream is a pure function of this directory.
const std::filesystem::path& corpus_dir() {
  static const std::filesystem::path dir = [] {
    const auto p = temp_root() / "corpus2x2";
    corpus::build_corpus(p, 2, 2, 11);
    return p;
  }();
  return dir;
}

const corpus::LoadedCorpus& toy_corpus() {
  static const corpus::LoadedCorpus c = corpus::load_corpus(corpus_dir());
  return c;
}

training::TrainConfig small_cfg() {
  training::TrainConfig cfg;
  cfg.model.channels = 8;
  cfg.corpus_dir = corpus_dir().string();
  cfg.batch_size = 2;
  cfg.segment_cap = 48;
  cfg.seed = 3;
  return cfg;
}

corpus::Batch first_batch(const training::TrainConfig& cfg) {
  const auto ex = corpus::make_examples(toy_corpus(), "train", cfg.segment_cap);
  corpus::BatchIterator it(toy_corpus(), ex, cfg.batch_size, cfg.seed);
  return it.next();
}

bool same_weights(const model::WeightSet& a, const model::WeightSet& b) {
  if (a.params.size() != b.params.size()) return false;
  for (const auto& [name, t] : a.params) {
    const auto it = b.params.find(name);
    if (it == b.params.end() || it->second.shape != t.shape) return false;
    if (std::memcmp(t.v.data(), it->second.v.data(), t.v.size() * sizeof(Real)) != 0)
      return false;
  }
  return true;
}

bool same_report(const training::LossReport& a, const training::LossReport& b) {
  return a.step == b.step && a.l1_mel == b.l1_mel && a.l1_linear == b.l1_linear &&
         a.adv_g == b.adv_g && a.adv_d == b.adv_d && a.total == b.total;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("masked mean absolute error", "[training][oracle]") {
  SECTION("hand value with padding excluded") {
    // Diffs: col0 = (+0.25, -0.25), col1 = 0, col2 = (+0.5, +0.5), col3 is
    // padding filled with garbage. loss = (0.25*2 + 0.5*2) / (2 bins * 3
    // valid frames) = 0.25.
    Tensor target({2, 4});
    for (Real& v : target.v) v = 0.25;
    Tensor pred = target;
    pred.at(0, 0) += 0.25;
    pred.at(1, 0) -= 0.25;
    pred.at(0, 2) += 0.5;
    pred.at(1, 2) += 0.5;
    pred.at(0, 3) = 77.0;
    pred.at(1, 3) = -4.0;
    const std::vector<Real> mask{1, 1, 1, 0};
    Tensor d;
    const double loss = training::reconstruction_loss(pred, target, mask, 1, &d);
    REQUIRE(loss == 0.25);
    const Real u = 1.0 / 6.0;  // 1 / (bins * valid frames)
    REQUIRE(d.at(0, 0) == u);
    REQUIRE(d.at(1, 0) == -u);
    REQUIRE(d.at(0, 1) == 0.0);
    REQUIRE(d.at(0, 2) == u);
    REQUIRE(d.at(0, 3) == 0.0);
    REQUIRE(d.at(1, 3) == 0.0);
  }

  SECTION("uniform offset gives the offset back") {
    Tensor target({3, 5});
    Rng rng(4);
    for (Real& v : target.v) v = rng.uniform(0.0, 1.0);
    Tensor pred = target;
    for (Real& v : pred.v) v += 0.1;
    const std::vector<Real> mask(5, Real(1));
    REQUIRE(training::reconstruction_loss(pred, target, mask, 1) ==
            Approx(0.1).margin(1e-12));
  }

  SECTION("perfect prediction has zero loss and exactly zero gradient") {
    Tensor target({4, 6});
    Rng rng(9);
    for (Real& v : target.v) v = rng.uniform(0.0, 1.0);
    const std::vector<Real> mask(6, Real(1));
    Tensor d;
    REQUIRE(training::reconstruction_loss(target, target, mask, 1, &d) == 0.0);
    for (Real v : d.v) REQUIRE(v == 0.0);
  }

  SECTION("mask frame covers a block of columns") {
    // fpm=4 mirrors the linear stream: one mask frame per 4 columns.
    Tensor target({1, 8});
    Tensor pred({1, 8});
    for (int t = 0; t < 8; ++t) pred.at(0, t) = target.at(0, t) + (t < 4 ? 0.5 : 9.0);
    const std::vector<Real> mask{1, 0};
    REQUIRE(training::reconstruction_loss(pred, target, mask, 4) == 0.5);
  }

  SECTION("validation") {
    Tensor a({2, 4}), b({2, 5});
    REQUIRE_THROWS_AS(training::reconstruction_loss(a, b, {1, 1, 1, 1}, 1),
                      InvalidInput);
    REQUIRE_THROWS_AS(training::reconstruction_loss(a, a, {1, 1, 1}, 1), InvalidInput);
    REQUIRE_THROWS_AS(training::reconstruction_loss(a, a, {0, 0, 0, 0}, 1),
                      InsufficientData);
  }
}

TEST_CASE("least squares adversarial hand values", "[training][oracle]") {
  // Untrained discriminator outputting zero everywhere.
  auto z = training::adversarial_losses({0.0}, {0.0});
  REQUIRE(z.adv_d == 1.0);
  REQUIRE(z.adv_g == 1.0);

  // Perfect discriminator: real -> 1, fake -> 0.
  auto p = training::adversarial_losses({1.0, 1.0}, {0.0, 0.0});
  REQUIRE(p.adv_d == 0.0);
  REQUIRE(p.adv_g == 1.0);

  // Generic point, exact in binary: adv_d = (0.5-1)^2 + 0.25^2, adv_g = 0.75^2.
  auto g = training::adversarial_losses({0.5}, {0.25});
  REQUIRE(g.adv_d == 0.3125);
  REQUIRE(g.adv_g == 0.5625);

  auto e = training::adversarial_losses({}, {});
  REQUIRE(e.adv_d == 0.0);
  REQUIRE(e.adv_g == 0.0);

  REQUIRE_THROWS_AS(training::adversarial_losses({0.5}, {0.5, 0.5}), InvalidInput);
}

TEST_CASE("training config parsing", "[training][config]") {
  SECTION("defaults") {
    const auto cfg = training::parse_config_text("");
    REQUIRE(cfg.lr == 2e-4);
    REQUIRE(cfg.batch_size == 8);
    REQUIRE(cfg.model.channels == 64);
    REQUIRE(cfg.use_adversarial);
    REQUIRE(cfg.lambda_adv == 0.1);
  }

  SECTION("file text with comments and spacing") {
    const std::string text =
        "# run settings\n"
        "channels = 16\n"
        "lr=0.001   # inline comment\n"
        "\n"
        "use_adversarial = false\n"
        "corpus_dir = /data/corpus\n"
        "max_steps = 42\n";
    const auto cfg = training::parse_config_text(text);
    REQUIRE(cfg.model.channels == 16);
    REQUIRE(cfg.lr == 0.001);
    REQUIRE_FALSE(cfg.use_adversarial);
    REQUIRE(cfg.corpus_dir == "/data/corpus");
    REQUIRE(cfg.max_steps == 42);
    // The adversarial switch rides along into the model config.
    REQUIRE_FALSE(cfg.model_config().use_adversarial);
    REQUIRE(cfg.model_config().adversarial_weight == 0.1);
  }

  SECTION("errors name the problem") {
    REQUIRE_THROWS_WITH(training::parse_config_text("warp_factor = 9\n"),
                        ContainsSubstring("unknown config key"));
    REQUIRE_THROWS_WITH(training::parse_config_text("lr = fast\n"),
                        ContainsSubstring("lr"));
    REQUIRE_THROWS_WITH(training::parse_config_text("use_adversarial = maybe\n"),
                        ContainsSubstring("use_adversarial"));
    REQUIRE_THROWS_WITH(training::parse_config_text("channels = 8\nnonsense\n"),
                        ContainsSubstring("line 2"));
    REQUIRE_THROWS_AS(training::load_train_config("/no/such/config.cfg"), IoError);
  }

  SECTION("command line overrides") {
    training::TrainConfig cfg;
    training::apply_config_override(cfg, "channels=24");
    training::apply_config_override(cfg, " lambda_adv = 0.25 ");
    REQUIRE(cfg.model.channels == 24);
    REQUIRE(cfg.lambda_adv == 0.25);
    REQUIRE_THROWS_AS(training::apply_config_override(cfg, "no_equals_sign"),
                      InvalidConfig);
  }

  SECTION("validation") {
    training::TrainConfig cfg;
    cfg.lr = 0;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg = {};
    cfg.model.embed_dim = 128;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg = {};
    cfg.segment_cap = 8;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidConfig);
  }

  SECTION("round trip through a file") {
    const auto dir = fresh_dir("config_rt");
    const auto path = dir / "train.cfg";
    std::ofstream(path) << "channels = 8\nseed = 77\nlr = 0.002\n";
    const auto cfg = training::load_train_config(path.string());
    REQUIRE(cfg.model.channels == 8);
    REQUIRE(cfg.seed == 77);
    REQUIRE(cfg.lr == 0.002);
  }
}

TEST_CASE("train step determinism and report contract", "[training]") {
  auto cfg = small_cfg();
  const corpus::Batch batch = first_batch(cfg);

  auto s1 = training::init_train_state(cfg);
  auto s2 = training::init_train_state(cfg);
  REQUIRE(same_weights(s1.weights, s2.weights));

  const auto r1 = training::train_step(s1, batch, cfg);
  const auto r2 = training::train_step(s2, batch, cfg);
  REQUIRE(same_report(r1, r2));
  REQUIRE(same_weights(s1.weights, s2.weights));
  REQUIRE(r1.step == 1);
  REQUIRE(std::isfinite(r1.total));
  REQUIRE(r1.l1_mel > 0);
  REQUIRE(r1.l1_linear > 0);
  // Exact identity, same evaluation order as the trainer.
  REQUIRE(r1.total == r1.l1_mel + r1.l1_linear + cfg.lambda_adv * r1.adv_g);

  const auto r1b = training::train_step(s1, batch, cfg);
  REQUIRE(r1b.step == 2);
  // The step index keys the stochastic patch choice, so a second step on the
  // same batch is a different (but still deterministic) update.
  const auto r2b = training::train_step(s2, batch, cfg);
  REQUIRE(same_report(r1b, r2b));
}

TEST_CASE("adversarial switch off zeroes the adversarial terms", "[training]") {
  auto cfg = small_cfg();
  cfg.use_adversarial = false;
  const corpus::Batch batch = first_batch(cfg);
  auto st = training::init_train_state(cfg);
  const auto r = training::train_step(st, batch, cfg);
  REQUIRE(r.adv_g == 0.0);
  REQUIRE(r.adv_d == 0.0);
  REQUIRE(r.total == r.l1_mel + r.l1_linear);
}

TEST_CASE("non-finite weights abort with a step diagnostic", "[training]") {
  auto cfg = small_cfg();
  const corpus::Batch batch = first_batch(cfg);
  auto st = training::init_train_state(cfg);
  st.weights.p("fm.b0.h1.w").v[0] = std::numeric_limits<Real>::quiet_NaN();
  REQUIRE_THROWS_MATCHES(training::train_step(st, batch, cfg), ModelError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("step")));
}

TEST_CASE("teacher forcing does not leak the current frame", "[training]") {
  auto cfg = small_cfg();
  const corpus::Batch batch = first_batch(cfg);
  auto st = training::init_train_state(cfg);
  const auto it = training::slice_item(batch, 0);
  REQUIRE(it.len >= 8);

  const Tensor e = model::encode_singer(st.weights, it.query);
  const model::GenOut base =
      model::generator_forward(st.weights, it.phonemes, it.pitches, it.mel_input, e, e);

  // A change to the ground-truth mel at frame t reaches the network input
  // only at column t+1 (teacher forcing shifts by one), so predictions at
  // columns <= t must be bit-identical.
  const int tcut = it.len / 2;
  Tensor bumped = it.mel_input;
  for (int r = 0; r < 80; ++r) bumped.at(r, tcut + 1) += 0.7;
  const model::GenOut probe =
      model::generator_forward(st.weights, it.phonemes, it.pitches, bumped, e, e);

  bool tail_changed = false;
  for (int r = 0; r < 80; ++r) {
    for (int t = 0; t <= tcut; ++t)
      REQUIRE(probe.mel.at(r, t) == base.mel.at(r, t));
    for (int t = tcut + 1; t < it.len; ++t)
      if (probe.mel.at(r, t) != base.mel.at(r, t)) tail_changed = true;
  }
  REQUIRE(tail_changed);
}

TEST_CASE("generator gradient check on a toy problem", "[training][gradcheck]") {
  model::ModelConfig cfg;
  cfg.channels = 4;

  SECTION("with the adversarial term") {
    REQUIRE(training::gradient_check(cfg, 7) <= 1e-3);
  }

  SECTION("reconstruction only") {
    cfg.use_adversarial = false;
    REQUIRE(training::gradient_check(cfg, 13) <= 1e-3);
  }

  SECTION("gated conditioning block in isolation, exhaustively") {
    REQUIRE(training::gated_block_gradient_check(7) <= 1e-4);
    REQUIRE(training::gated_block_gradient_check(21) <= 1e-4);
  }

  SECTION("zero-loss point has zero gradient") {
    cfg.use_adversarial = false;
    const model::WeightSet w = model::init_weights(cfg, 5);
    auto p = training::detail::gc_problem(cfg, 5);
    const Tensor e = model::encode_singer(w, p.query);
    const model::GenOut out =
        model::generator_forward(w, p.phonemes, p.pitches, p.mel_input, e, e);
    p.mel_target = out.mel;
    p.linear_target = out.linear;
    model::Grads g;
    const double loss = training::detail::gc_grads(w, p, g);
    REQUIRE(loss == 0.0);
    double worst = 0;
    for (const auto& [name, t] : g.g)
      for (Real v : t.v) worst = std::max(worst, std::abs(static_cast<double>(v)));
    REQUIRE(worst <= 1e-8);
  }
}

TEST_CASE("discriminator learns to separate fixed patches", "[training][adv]") {
  auto cfg = small_cfg();
  cfg.lr = 1e-3;
  auto st = training::init_train_state(cfg);

  // Trivially separable inputs: real patches live in [0.6, 1), fakes in
  // [0, 0.4). Only the discriminator parameters move.
  const int n = 4;
  std::vector<Tensor> real(n, Tensor({513, model::kPatchFrames}));
  std::vector<Tensor> fake(n, Tensor({513, model::kPatchFrames}));
  for (int i = 0; i < n; ++i) {
    Rng rr = Rng(21).fork("real", static_cast<uint64_t>(i));
    Rng rf = Rng(21).fork("fake", static_cast<uint64_t>(i));
    for (Real& v : real[static_cast<size_t>(i)].v) v = rr.uniform(0.6, 1.0);
    for (Real& v : fake[static_cast<size_t>(i)].v) v = rf.uniform(0.0, 0.4);
  }

  double first = 0, last = 0;
  for (int step = 0; step < 100; ++step) {
    model::Grads gd;
    std::vector<double> d_real, d_fake;
    for (int i = 0; i < n; ++i) {
      model::DiscCache dc;
      const double df = model::discriminate(st.weights, fake[static_cast<size_t>(i)], &dc);
      d_fake.push_back(df);
      model::discriminate_backward(st.weights, dc, 2.0 * df / n, gd);
      model::DiscCache rc;
      const double dr = model::discriminate(st.weights, real[static_cast<size_t>(i)], &rc);
      d_real.push_back(dr);
      model::discriminate_backward(st.weights, rc, 2.0 * (dr - 1.0) / n, gd);
    }
    const auto adv = training::adversarial_losses(d_real, d_fake);
    if (step == 0) first = adv.adv_d;
    last = adv.adv_d;
    training::adam_apply(st, gd, /*disc=*/true, cfg, ++st.adam_t);
  }
  INFO("adv_d first " << first << " last " << last);
  REQUIRE(last < 0.5 * first);
}

TEST_CASE("loss descends on a two singer toy corpus", "[training][descent]") {
  auto cfg = small_cfg();
  cfg.use_adversarial = false;
  cfg.lr = 3e-3;  // production default 2e-4 is too slow to halve in 200 steps
  cfg.max_steps = 200;
  cfg.checkpoint_every = 1000;
  cfg.out_dir = fresh_dir("run_descent").string();

  std::vector<training::LossReport> reports;
  const auto res =
      training::run_training(cfg, "", [&](const training::LossReport& r) {
        reports.push_back(r);
      });

  REQUIRE(reports.size() == 200);
  REQUIRE(reports.front().step == 1);
  REQUIRE(reports.back().step == 200);
  INFO("total: step 1 = " << reports.front().total
                          << ", step 200 = " << reports.back().total);
  REQUIRE(reports.back().total <= 0.5 * reports.front().total);

  // The run leaves a parseable loss log and a final checkpoint behind.
  const auto lines = read_lines(res.csv_path);
  REQUIRE(lines.size() == 201);
  REQUIRE(lines[0] == "step,l1_mel,l1_linear,adv_g,adv_d,total");
  REQUIRE(lines[1].rfind("1,", 0) == 0);
  REQUIRE(lines[200].rfind("200,", 0) == 0);
  for (const auto& line : {lines[1], lines[200]}) {
    size_t commas = 0;
    for (char c : line) commas += c == ',' ? 1 : 0;
    REQUIRE(commas == 5);
  }
  REQUIRE(std::filesystem::exists(res.checkpoint_path));
}

TEST_CASE("checkpoint round trip resumes identically", "[training][checkpoint]") {
  auto cfg = small_cfg();
  cfg.max_steps = 6;
  cfg.checkpoint_every = 100;  // only the final-step save fires
  cfg.out_dir = fresh_dir("run_full").string();

  std::vector<training::LossReport> full;
  const auto res_full =
      training::run_training(cfg, "", [&](const training::LossReport& r) {
        full.push_back(r);
      });
  REQUIRE(full.size() == 6);

  // Same run split in two: 4 steps, then resume for the last 2.
  auto cfg_b = cfg;
  cfg_b.max_steps = 4;
  cfg_b.out_dir = fresh_dir("run_split").string();
  training::run_training(cfg_b, "");
  const std::string ckpt_b = cfg_b.out_dir + "/checkpoint.bin";

  auto cfg_b2 = cfg_b;
  cfg_b2.max_steps = 6;
  std::vector<training::LossReport> tail;
  training::run_training(cfg_b2, ckpt_b, [&](const training::LossReport& r) {
    tail.push_back(r);
  });
  REQUIRE(tail.size() == 2);
  REQUIRE(tail[0].step == 5);
  REQUIRE(same_report(tail[0], full[4]));
  REQUIRE(same_report(tail[1], full[5]));

  // The split run's final checkpoint is byte-identical to the straight
  // run's, and the loss log carries all six steps in order.
  REQUIRE(read_bytes(res_full.checkpoint_path) == read_bytes(ckpt_b));
  const auto lines = read_lines(cfg_b.out_dir + "/loss.csv");
  REQUIRE(lines.size() == 7);
  for (int i = 1; i <= 6; ++i)
    REQUIRE(lines[static_cast<size_t>(i)].rfind(std::to_string(i) + ",", 0) == 0);

  SECTION("save -> load -> save is byte stable") {
    const auto st = training::load_checkpoint(res_full.checkpoint_path);
    REQUIRE(st.step == 6);
    const auto copy = (temp_root() / "ckpt_copy.bin").string();
    training::save_checkpoint(copy, st);
    REQUIRE(read_bytes(copy) == read_bytes(res_full.checkpoint_path));
  }

  SECTION("truncated checkpoints are rejected") {
    const auto bytes = read_bytes(res_full.checkpoint_path);
    const auto cut = temp_root() / "ckpt_cut.bin";
    std::ofstream(cut, std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
    REQUIRE_THROWS_AS(training::load_checkpoint(cut.string()), CheckpointError);

    const auto junk = temp_root() / "ckpt_junk.bin";
    std::ofstream(junk, std::ios::binary) << "not a checkpoint at all";
    REQUIRE_THROWS_AS(training::load_checkpoint(junk.string()), CheckpointError);
  }

  SECTION("architecture mismatch is rejected on resume") {
    auto cfg_c = cfg;
    cfg_c.model.channels = 16;
    cfg_c.out_dir = fresh_dir("run_mismatch").string();
    REQUIRE_THROWS_AS(training::run_training(cfg_c, res_full.checkpoint_path),
                      InvalidConfig);
  }
}
