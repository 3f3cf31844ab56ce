// Command-line front end. One binary, one subcommand per operation; every
// command is deterministic given its --seed. Exit codes: 0 on success with
// all outputs written, 2 for usage and validation problems, 1 for
// operational failures.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "svs/corpus/build.hpp"
#include "svs/eval/abx.hpp"
#include "svs/eval/panel.hpp"
#include "svs/inference/synthesize.hpp"
#include "svs/io/wav.hpp"
#include "svs/training/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using svs::Tensor;

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path))
    throw svs::InvalidInput(std::string(what) + " not found: " + path);
}

void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path))
    throw svs::InvalidInput(std::string(what) + " not found: " + path);
}

svs::model::WeightSet load_weights(const std::string& ckpt) {
  require_file(ckpt, "checkpoint");
  return svs::training::load_checkpoint(ckpt).weights;
}

// A query is a 256-frame mel crop on the normalization scale stamped into
// the checkpoint. Longer recordings are center-cropped so lead-in silence
// does not dominate; shorter ones get the corpus sampler's zero-tail
// convention.
Tensor query_from_wav(const std::string& path, const svs::model::WeightSet& w) {
  require_file(path, "query");
  const svs::dsp::AudioClip clip = svs::io::read_wav(path);
  svs::dsp::MelConfig mc;
  mc.sample_rate = clip.sample_rate;
  mc.norm = w.mel_norm;
  if (!mc.norm.valid())
    throw svs::InvalidInput("checkpoint carries no mel statistics; train a model first");
  const Tensor mel = svs::dsp::mel_spectrogram(clip, mc).values;
  const int frames = mel.dim(1);
  if (frames < 1) throw svs::InvalidInput("query WAV is empty: " + path);
  const int start = frames > 256 ? (frames - 256) / 2 : 0;
  Tensor q({mel.dim(0), 256});
  for (int r = 0; r < mel.dim(0); ++r)
    for (int t = 0; t < 256; ++t)
      q.at(r, t) = start + t < frames ? mel.at(r, start + t) : 0.0;
  return q;
}

void write_matrix_csv(const std::string& path, const Tensor& t) {
  std::ofstream f(path);
  if (!f) throw svs::IoError("cannot write " + path);
  char buf[32];
  for (int r = 0; r < t.dim(0); ++r) {
    for (int c = 0; c < t.dim(1); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(t.at(r, c)));
      f << (c ? "," : "") << buf;
    }
    f << '\n';
  }
  if (!f) throw svs::IoError("write failed: " + path);
}

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / p.stem()).string() + suffix;
}

// Shared by synth, cross-synth and interpolate: write the waveform, then
// optionally the four feature planes for inspection.
void emit_result(const svs::inference::SynthResult& r, const std::string& out,
                 bool dump_features) {
  if (!out.empty() && out.find('/') != std::string::npos)
    fs::create_directories(fs::path(out).parent_path());
  svs::io::write_wav(out, r.clip);
  if (dump_features) {
    write_matrix_csv(sibling(out, ".fm.csv"), r.fm);
    write_matrix_csv(sibling(out, ".ps.csv"), r.ps);
    write_matrix_csv(sibling(out, ".mel.csv"), r.mel);
    write_matrix_csv(sibling(out, ".linear.csv"), r.linear);
  }
  const double seconds =
      static_cast<double>(r.clip.samples.size()) / r.clip.sample_rate;
  std::printf("wrote %s (%d frames, %.3f s)\n", out.c_str(), r.mel.dim(1), seconds);
}

struct SynthArgs {
  std::string ckpt, score, query, style_query, out;
  double alpha = 0.5;
  int gl_iters = 60;
  bool dump_features = false;
};

void run_synth(const SynthArgs& a, bool cross, bool interp) {
  const svs::model::WeightSet w = load_weights(a.ckpt);
  require_file(a.score, "score");
  const svs::corpus::ScoreSequence score = svs::corpus::load_score(a.score);
  const Tensor q = query_from_wav(a.query, w);

  svs::inference::SynthResult r;
  if (interp) {
    const Tensor qb = query_from_wav(a.style_query, w);
    r = svs::inference::interpolate_singers(w, q, qb, a.alpha, score, a.gl_iters);
  } else if (cross) {
    const Tensor qs = query_from_wav(a.style_query, w);
    r = svs::inference::cross_synthesize(w, score, q, qs, a.gl_iters);
  } else {
    r = svs::inference::synthesize(w, score, q, a.gl_iters);
  }
  emit_result(r, a.out, a.dump_features);
}

struct TrainArgs {
  std::string config, corpus, out, resume;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  bool seed_set = false;
};

void run_train(const TrainArgs& a) {
  require_file(a.config, "config");
  svs::training::TrainConfig cfg = svs::training::load_train_config(a.config);
  for (const std::string& kv : a.overrides) svs::training::apply_config_override(cfg, kv);
  if (!a.corpus.empty()) cfg.corpus_dir = a.corpus;
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (a.seed_set) cfg.seed = a.seed;
  if (cfg.corpus_dir.empty())
    throw svs::InvalidConfig("no corpus: set corpus_dir in the config or pass --corpus");
  require_dir(cfg.corpus_dir, "corpus");
  if (!a.resume.empty()) require_file(a.resume, "resume checkpoint");

  const auto t0 = std::chrono::steady_clock::now();
  const svs::training::TrainResult res = svs::training::run_training(
      cfg, a.resume, [&](const svs::training::LossReport& r) {
        if (r.step % 100 == 0 || r.step == static_cast<uint64_t>(cfg.max_steps)) {
          const double dt = std::chrono::duration<double>(
                                std::chrono::steady_clock::now() - t0).count();
          std::fprintf(stderr, "step %" PRIu64 "/%d  total %.5f  mel %.5f  lin %.5f  [%.0fs]\n",
                       r.step, cfg.max_steps, r.total, r.l1_mel, r.l1_linear, dt);
        }
      });
  std::printf("trained to step %d\ncheckpoint %s\nloss log %s\n", cfg.max_steps,
              res.checkpoint_path.c_str(), res.csv_path.c_str());
}

struct EvalArgs {
  std::string ckpt, corpus, report, csv;
  int cases = 50;
  uint64_t seed = 1;
  int gl_iters = 60;
};

void run_disentangle(const EvalArgs& a) {
  const svs::model::WeightSet w = load_weights(a.ckpt);
  require_dir(a.corpus, "corpus");
  const svs::corpus::LoadedCorpus corpus = svs::corpus::load_corpus(a.corpus);
  const svs::eval::DisentangleReport rep =
      svs::eval::run_abx_suite(w, corpus, a.cases, a.seed, a.gl_iters);
  if (!a.report.empty() && a.report.find('/') != std::string::npos)
    fs::create_directories(fs::path(a.report).parent_path());
  svs::eval::write_report(a.report, rep);
  const std::string csv = a.csv.empty() ? sibling(a.report, ".cases.csv") : a.csv;
  svs::eval::write_case_csv(csv, rep);
  std::printf("timbre_accuracy %.4f (%d cases)\nstyle_accuracy %.4f (%d cases)\n",
              rep.timbre_accuracy, rep.n_timbre_cases, rep.style_accuracy,
              rep.n_style_cases);
  std::printf("embedding_gap %.4f\nreport %s\ncases %s\n", rep.embedding.gap,
              a.report.c_str(), csv.c_str());
}

struct GradcheckArgs {
  uint64_t seed = 7;
  double threshold = 1e-3;
  double block_threshold = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a) {
  svs::model::ModelConfig cfg;
  cfg.channels = 4;
  const double overall = svs::training::gradient_check(cfg, a.seed);
  const double block = svs::training::gated_block_gradient_check(a.seed);
  std::printf("max_rel_error %.6e\nmax_rel_error_gated_block %.6e\n", overall, block);
  const bool ok = overall <= a.threshold && block <= a.block_threshold;
  std::printf("gradcheck: %s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

struct PanelArgs {
  std::string ckpt, corpus, out, score;
  std::vector<double> alphas;
  uint64_t seed = 1;
};

void run_panel(const PanelArgs& a) {
  const svs::model::WeightSet w = load_weights(a.ckpt);
  require_dir(a.corpus, "corpus");
  const svs::corpus::LoadedCorpus corpus = svs::corpus::load_corpus(a.corpus);
  svs::corpus::ScoreSequence score;
  if (a.score.empty()) {
    score = svs::eval::probe_score();
  } else {
    require_file(a.score, "score");
    score = svs::corpus::load_score(a.score);
  }
  const auto& profiles = corpus.manifest.profiles;
  auto query_of = [&](size_t i) {
    return svs::corpus::sample_query(corpus, profiles[i].singer_id, "",
                                     svs::Rng(a.seed).fork("panel", i).next_u64(),
                                     "train");
  };
  if (!a.out.empty() && a.out.find('/') != std::string::npos)
    fs::create_directories(fs::path(a.out).parent_path());
  size_t rows = 0;
  if (!a.alphas.empty()) {
    if (profiles.size() < 2)
      throw svs::InvalidInput("alpha sweep needs at least 2 singers");
    svs::eval::spectrogram_panel_alpha(w, score, query_of(0), query_of(1), a.alphas,
                                       a.out);
    rows = a.alphas.size();
  } else {
    std::vector<Tensor> queries;
    for (size_t i = 0; i < profiles.size(); ++i) queries.push_back(query_of(i));
    svs::eval::spectrogram_panel(w, score, queries, a.out);
    rows = queries.size();
  }
  std::printf("wrote %s (%zu rows)\n", a.out.c_str(), rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Multi-singer singing voice synthesis: corpus generation, training,\n"
      "synthesis with independent timbre/style conditioning, and objective\n"
      "evaluation. SVS_NUM_THREADS caps internal parallelism."};
  app.require_subcommand(1);
  std::string device = "cpu";
  app.add_option("--device", device, "compute device")
      ->check(CLI::IsMember({"cpu"}))
      ->capture_default_str();

  // corpus build
  auto* corpus_cmd = app.add_subcommand("corpus", "synthetic corpus operations");
  corpus_cmd->require_subcommand(1);
  auto* build_cmd = corpus_cmd->add_subcommand("build", "render a corpus of singers");
  int n_singers = 0, n_songs = 0;
  uint64_t corpus_seed = 1;
  std::string corpus_out;
  build_cmd->add_option("--singers", n_singers, "number of singers (>= 2)")
      ->required()
      ->check(CLI::Range(2, 1024));
  build_cmd->add_option("--songs", n_songs, "songs per singer (>= 2)")
      ->required()
      ->check(CLI::Range(2, 1024));
  build_cmd->add_option("--seed", corpus_seed, "corpus seed")->required();
  build_cmd->add_option("--out", corpus_out, "output directory")->required();
  build_cmd->callback([&] {
    const auto manifest =
        svs::corpus::build_corpus(corpus_out, n_singers, n_songs, corpus_seed);
    std::printf("built %d singers x %d songs at %s (%zu clips)\n", n_singers, n_songs,
                corpus_out.c_str(), manifest.entries.size());
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on a corpus");
  TrainArgs ta;
  train_cmd->add_option("--config", ta.config, "key = value config file")->required();
  train_cmd->add_option("--corpus", ta.corpus, "corpus directory (overrides config)");
  train_cmd->add_option("--out", ta.out, "run directory (overrides config)");
  train_cmd->add_option("--resume", ta.resume, "checkpoint to resume from");
  train_cmd->add_option("--seed", ta.seed, "training seed (overrides config)");
  train_cmd->add_option("--set", ta.overrides,
                        "config override, key=value (repeatable; flag wins)");
  train_cmd->callback([&] {
    ta.seed_set = train_cmd->count("--seed") > 0;
    run_train(ta);
  });

  // synth / cross-synth / interpolate share an argument block
  SynthArgs sa;
  auto add_synth_opts = [&](CLI::App* cmd, bool style, bool alpha) {
    cmd->add_option("--ckpt", sa.ckpt, "trained checkpoint")->required();
    cmd->add_option("--score", sa.score, "score file, one note per line (JSONL)")
        ->required();
    cmd->add_option("--query", sa.query, "singer query WAV (>= 11.9 s)")->required();
    if (style)
      cmd->add_option("--style-query", sa.style_query,
                      alpha ? "endpoint B query WAV" : "style donor query WAV")
          ->required();
    if (alpha)
      cmd->add_option("--alpha", sa.alpha, "blend weight toward endpoint B")
          ->required()
          ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--out", sa.out, "output WAV path")->required();
    cmd->add_option("--gl-iters", sa.gl_iters, "phase reconstruction iterations")
        ->check(CLI::Range(1, 1000))
        ->capture_default_str();
    cmd->add_flag("--dump-features", sa.dump_features,
                  "also write FM/PS/mel/linear planes as CSV");
  };
  auto* synth_cmd = app.add_subcommand("synth", "synthesize a score as one singer");
  add_synth_opts(synth_cmd, false, false);
  synth_cmd->callback([&] { run_synth(sa, false, false); });

  auto* cross_cmd = app.add_subcommand(
      "cross-synth", "timbre from --query, singing style from --style-query");
  add_synth_opts(cross_cmd, true, false);
  cross_cmd->callback([&] { run_synth(sa, true, false); });

  auto* interp_cmd = app.add_subcommand(
      "interpolate", "blend two singers with one embedding driving both decoders");
  add_synth_opts(interp_cmd, true, true);
  interp_cmd->callback([&] { run_synth(sa, false, true); });

  // eval disentangle / gradcheck / panel
  auto* eval_cmd = app.add_subcommand("eval", "objective evaluation");
  eval_cmd->require_subcommand(1);

  auto* dis_cmd = eval_cmd->add_subcommand(
      "disentangle", "ABX identity tests against rendered references");
  EvalArgs ea;
  dis_cmd->add_option("--ckpt", ea.ckpt, "trained checkpoint")->required();
  dis_cmd->add_option("--corpus", ea.corpus, "corpus directory")->required();
  dis_cmd->add_option("--cases", ea.cases, "ABX cases per attribute")
      ->check(CLI::Range(1, 10000))
      ->capture_default_str();
  dis_cmd->add_option("--seed", ea.seed, "evaluation seed")->capture_default_str();
  dis_cmd->add_option("--report", ea.report, "JSON report path")->required();
  dis_cmd->add_option("--csv", ea.csv, "per-case CSV path (default: next to report)");
  dis_cmd->add_option("--gl-iters", ea.gl_iters, "phase reconstruction iterations")
      ->check(CLI::Range(1, 1000))
      ->capture_default_str();
  dis_cmd->callback([&] { run_disentangle(ea); });

  auto* gc_cmd = eval_cmd->add_subcommand(
      "gradcheck", "finite-difference check of the analytic gradients");
  GradcheckArgs ga;
  gc_cmd->add_option("--seed", ga.seed, "check seed")->capture_default_str();
  gc_cmd->add_option("--threshold", ga.threshold, "overall bar")->capture_default_str();
  gc_cmd->add_option("--block-threshold", ga.block_threshold,
                     "isolated gated-block bar")
      ->capture_default_str();
  int gc_rc = 0;
  gc_cmd->callback([&] { gc_rc = run_gradcheck(ga); });

  auto* panel_cmd = eval_cmd->add_subcommand(
      "panel", "grayscale FM/PS/mel panels, one row per singer or per alpha");
  PanelArgs pa;
  panel_cmd->add_option("--ckpt", pa.ckpt, "trained checkpoint")->required();
  panel_cmd->add_option("--corpus", pa.corpus, "corpus directory")->required();
  panel_cmd->add_option("--out", pa.out, "output PNG path")->required();
  panel_cmd->add_option("--seed", pa.seed, "query sampling seed")->capture_default_str();
  panel_cmd->add_option("--score", pa.score, "score file (default: built-in probe)");
  panel_cmd->add_option("--alphas", pa.alphas,
                        "comma-separated blend weights; sweeps the first two singers")
      ->delimiter(',');
  panel_cmd->callback([&] { run_panel(pa); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const svs::InvalidInput& e) {
    std::fprintf(stderr, "svs: %s\n", e.what());
    return 2;
  } catch (const svs::InvalidConfig& e) {
    std::fprintf(stderr, "svs: %s\n", e.what());
    return 2;
  } catch (const svs::Error& e) {
    std::fprintf(stderr, "svs: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "svs: %s\n", e.what());
    return 1;
  }
  return gc_rc;
}
