#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "svs/corpus/build.hpp"
#include "svs/eval/abx.hpp"
#include "svs/eval/panel.hpp"

using namespace svs;
using Catch::Approx;

namespace {

std::filesystem::path temp_root() {
  const auto p = std::filesystem::temp_directory_path() / "svs_eval_tests";
  std::filesystem::create_directories(p);
  return p;
}

const std::filesystem::path& corpus_dir() {
  static const std::filesystem::path dir = [] {
    const auto p = temp_root() / "corpus4x2";
    corpus::build_corpus(p, 4, 2, 19);
    return p;
  }();
  return dir;
}

const corpus::LoadedCorpus& eval_corpus() {
  static const corpus::LoadedCorpus c = corpus::load_corpus(corpus_dir());
  return c;
}

model::WeightSet untrained_weights(uint64_t seed = 6) {
  model::ModelConfig cfg;
  cfg.channels = 8;
  model::WeightSet w = model::init_weights(cfg, seed);
  w.mel_norm = eval_corpus().mel_norm;
  w.linear_norm = eval_corpus().linear_norm;
  return w;
}

corpus::SingerProfile base_profile() {
  corpus::SingerProfile p;
  p.singer_id = "probe";
  p.formant_shift_ratio = 1.0;
  p.spectral_tilt_db_per_oct = -3.0;
  p.breathiness = 0.1;
  p.vibrato_rate_hz = 5.5;
  p.vibrato_extent_cents = 50.0;
  p.onset_glide_ms = 40.0;
  p.vibrato_onset_delay_ms = 200.0;
  return p;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

uint32_t be32(const std::vector<char>& b, size_t off) {
  return (static_cast<uint32_t>(static_cast<unsigned char>(b[off])) << 24) |
         (static_cast<uint32_t>(static_cast<unsigned char>(b[off + 1])) << 16) |
         (static_cast<uint32_t>(static_cast<unsigned char>(b[off + 2])) << 8) |
         static_cast<uint32_t>(static_cast<unsigned char>(b[off + 3]));
}

}  // namespace

TEST_CASE("measurements recover known render parameters", "[eval]") {
  const auto score = eval::probe_score();
  auto p = base_profile();
  const auto clip = corpus::render_song(score, p, 101);

  const auto style = eval::measure_style(clip);
  REQUIRE(style.rate_hz == Approx(5.5).margin(0.5));
  REQUIRE(style.extent_cents == Approx(50.0).margin(10.0));
  REQUIRE(style.glide_ms >= 0.0);

  // Absolute glide times are floored by the vibrato smoother, but the
  // ordering between fast and slow onsets survives the whole pipeline.
  auto slow_onset = p;
  slow_onset.onset_glide_ms = 150.0;
  const auto slow = eval::measure_style(corpus::render_song(score, slow_onset, 101));
  REQUIRE(style.glide_ms < slow.glide_ms);

  const auto timbre = eval::measure_timbre(clip);
  REQUIRE(timbre.centroid_hz > 200.0);
  REQUIRE(timbre.centroid_hz < 4000.0);
  REQUIRE(timbre.f1_hz < timbre.f2_hz);
  REQUIRE(timbre.f1_hz > 150.0);

  // Formant shift moves the measured envelope in the same direction.
  auto lo = p, hi = p;
  lo.formant_shift_ratio = 0.8;
  hi.formant_shift_ratio = 1.25;
  const auto t_lo = eval::measure_timbre(corpus::render_song(score, lo, 102));
  const auto t_hi = eval::measure_timbre(corpus::render_song(score, hi, 102));
  REQUIRE(t_lo.f1_hz < t_hi.f1_hz);
  REQUIRE(t_lo.centroid_hz < t_hi.centroid_hz);

  // Silence is unmeasurable on both branches.
  dsp::AudioClip silent;
  silent.sample_rate = 22050;
  silent.samples.assign(44100, 0.0);
  REQUIRE_THROWS_AS(eval::measure_timbre(silent), InsufficientData);
  REQUIRE_THROWS_AS(eval::measure_style(silent), InsufficientData);
}

TEST_CASE("match functions: identity, tie rule, symmetry", "[eval][oracle]") {
  eval::FeatureScale unit;
  unit.mean = {0, 0, 0};
  unit.sd = {1, 1, 1};
  const eval::TimbreMeasure fa{700.0, 650.0, 1080.0};
  const eval::TimbreMeasure fb{900.0, 800.0, 1200.0};

  // C identical to A chooses A with zero distance.
  REQUIRE(eval::timbre_match(fa, fa, fb, unit) == eval::Choice::A);

  // Exact midpoint is a tie; ties break toward A by contract.
  const eval::TimbreMeasure mid{800.0, 725.0, 1140.0};
  REQUIRE(eval::timbre_match(mid, fa, fb, unit) == eval::Choice::A);
  REQUIRE(eval::timbre_match(mid, fb, fa, unit) == eval::Choice::A);

  // Swapping the references flips a non-tied answer.
  const eval::TimbreMeasure near_b{890.0, 795.0, 1190.0};
  REQUIRE(eval::timbre_match(near_b, fa, fb, unit) == eval::Choice::B);
  REQUIRE(eval::timbre_match(near_b, fb, fa, unit) == eval::Choice::A);

  // z-scoring: a dimension with huge spread stops dominating the distance.
  const eval::StyleMeasure sa{5.0, 20.0, 40.0};
  const eval::StyleMeasure sb{7.0, 70.0, 120.0};
  const eval::StyleMeasure c{5.2, 65.0, 50.0};  // rate like A, extent like B
  eval::FeatureScale sc = eval::fit_scale({eval::to_vec(sa), eval::to_vec(sb)});
  REQUIRE(sc.sd[0] == Approx(1.0));   // (7-5)/2
  REQUIRE(sc.sd[1] == Approx(25.0));  // (70-20)/2
  const double da = eval::scaled_distance(eval::to_vec(c), eval::to_vec(sa), sc);
  const double db = eval::scaled_distance(eval::to_vec(c), eval::to_vec(sb), sc);
  REQUIRE(da == Approx(std::sqrt(0.04 + 3.24 + 0.0625)).margin(1e-9));
  REQUIRE(db == Approx(std::sqrt(3.24 + 0.04 + 3.0625)).margin(1e-9));
}

TEST_CASE("case plans are balanced and validated", "[eval]") {
  const auto profiles = corpus::sample_profiles(8, Rng(31).fork("profiles"));
  const auto plans = eval::plan_cases(profiles, 50, 77);
  REQUIRE(plans.size() == 50);
  int a_correct = 0;
  for (const auto& p : plans) {
    REQUIRE(p.a != p.b);
    REQUIRE(((p.timbre_donor == p.a && p.style_donor == p.b) ||
             (p.timbre_donor == p.b && p.style_donor == p.a)));
    a_correct += p.timbre_donor == p.a ? 1 : 0;
  }
  // Binomial 95% band around 25/50.
  REQUIRE(a_correct >= 18);
  REQUIRE(a_correct <= 32);

  // Quartile planning needs at least 4 singers.
  const auto three = corpus::sample_profiles(3, Rng(1));
  REQUIRE_THROWS_AS(eval::plan_cases(three, 10, 1), InvalidConfig);

  // Determinism: same seed, same plan.
  const auto again = eval::plan_cases(profiles, 50, 77);
  for (size_t i = 0; i < plans.size(); ++i) {
    REQUIRE(plans[i].a == again[i].a);
    REQUIRE(plans[i].timbre_donor == again[i].timbre_donor);
  }
}

TEST_CASE("metric oracle separates ground-truth renders", "[eval][oracle][slow]") {
  // No model in the loop: candidates are source-filter renders whose timbre
  // comes from one donor and style from the other. This validates that the
  // feature classifiers can read the factors out of real audio.
  const auto profiles = corpus::sample_profiles(8, Rng(31).fork("profiles"));
  const auto rep = eval::run_abx_oracle(profiles, 50, 500);
  INFO("timbre " << rep.timbre_accuracy << " style " << rep.style_accuracy);
  REQUIRE(rep.n_timbre_cases == 50);
  REQUIRE(rep.n_style_cases == 50);
  REQUIRE(rep.timbre_accuracy >= 0.95);
  REQUIRE(rep.style_accuracy >= 0.90);

  // Serialization round trip.
  const auto dir = temp_root();
  eval::write_report((dir / "oracle_report.json").string(), rep);
  eval::write_case_csv((dir / "oracle_cases.csv").string(), rep);
  std::ifstream jf(dir / "oracle_report.json");
  const auto j = nlohmann::json::parse(jf);
  REQUIRE(j["timbre_accuracy"].get<double>() == rep.timbre_accuracy);
  REQUIRE(j["style_accuracy"].get<double>() == rep.style_accuracy);
  std::ifstream cf(dir / "oracle_cases.csv");
  std::string line;
  int rows = 0;
  while (std::getline(cf, line)) ++rows;
  REQUIRE(rows == 51);  // header + one row per case
}

TEST_CASE("untrained model scores at chance", "[eval][slow]") {
  const auto& corpus = eval_corpus();
  const auto w = untrained_weights();
  const auto rep = eval::run_abx_suite(w, corpus, 50, 900, 15);
  INFO("timbre " << rep.timbre_accuracy << " style " << rep.style_accuracy);
  REQUIRE(rep.n_timbre_cases == 50);
  REQUIRE(rep.n_style_cases == 50);
  // Two-sided binomial 95% band around 0.5 for n = 50.
  REQUIRE(rep.timbre_accuracy >= 0.36);
  REQUIRE(rep.timbre_accuracy <= 0.64);
  REQUIRE(rep.style_accuracy >= 0.36);
  REQUIRE(rep.style_accuracy <= 0.64);
  REQUIRE(rep.embedding.n_singers == 4);
}

TEST_CASE("embedding diagnostics", "[eval]") {
  const auto& corpus = eval_corpus();
  const auto w = untrained_weights();

  const Tensor q = corpus::sample_query(corpus, "s000", "", 5);
  const Tensor e = model::encode_singer(w, q);
  REQUIRE(eval::cosine_similarity(e, e) == Approx(1.0).margin(1e-12));

  const auto st1 = eval::embedding_diagnostics(w, corpus, 10, 42);
  const auto st2 = eval::embedding_diagnostics(w, corpus, 10, 42);
  REQUIRE(st1.n_singers == 4);
  REQUIRE(st1.crops_per_singer == 10);
  REQUIRE(st1.gap == st1.mean_same - st1.mean_cross);
  REQUIRE(st1.mean_same == st2.mean_same);
  REQUIRE(st1.silhouette == st2.silhouette);
  REQUIRE(st1.mean_same >= -1.0);
  REQUIRE(st1.mean_same <= 1.0);

  REQUIRE_THROWS_AS(eval::embedding_diagnostics(w, corpus, 1, 42), InvalidConfig);
}

TEST_CASE("spectrogram panels", "[eval]") {
  const auto w = untrained_weights(9);
  corpus::ScoreSequence score;
  score.notes.push_back({"a", 55, 8});
  score.notes.push_back({"i", 58, 8});
  score.notes.push_back({"u", 52, 8});
  const int L = score.total_frames();

  Tensor qa({80, 256}), qb({80, 256});
  Rng rng(12);
  for (Real& v : qa.v) v = rng.uniform(0.0, 1.0);
  for (Real& v : qb.v) v = rng.uniform(0.0, 1.0);

  const auto dir = temp_root();
  const auto singers_png = dir / "panel_singers.png";
  eval::spectrogram_panel(w, score, {qa, qb}, singers_png.string());
  auto bytes = read_bytes(singers_png);
  // PNG signature, then IHDR width/height at offsets 16 and 20.
  REQUIRE(bytes.size() > 24);
  REQUIRE(static_cast<unsigned char>(bytes[1]) == 'P');
  REQUIRE(be32(bytes, 16) == static_cast<uint32_t>(3 * L + 2 * eval::kPanelGutter));
  REQUIRE(be32(bytes, 20) == static_cast<uint32_t>(2 * 80 + eval::kPanelGutter));

  // Deterministic bytes on re-render.
  eval::spectrogram_panel(w, score, {qa, qb}, singers_png.string());
  REQUIRE(read_bytes(singers_png) == bytes);

  const auto alpha_png = dir / "panel_alpha.png";
  eval::spectrogram_panel_alpha(w, score, qa, qb, {0.0, 0.5, 1.0}, alpha_png.string());
  const auto ab = read_bytes(alpha_png);
  REQUIRE(be32(ab, 20) == static_cast<uint32_t>(3 * 80 + 2 * eval::kPanelGutter));

  REQUIRE_THROWS_AS(
      eval::spectrogram_panel_alpha(w, score, qa, qb, {0.0, 1.2}, alpha_png.string()),
      InvalidInput);
}
