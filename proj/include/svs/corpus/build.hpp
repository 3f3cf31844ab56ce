#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "svs/core/parallel.hpp"
#include "svs/core/rng.hpp"
#include "svs/corpus/render.hpp"
#include "svs/corpus/types.hpp"
#include "svs/dsp/mel.hpp"
#include "svs/dsp/stft.hpp"
#include "svs/io/wav.hpp"

namespace svs::corpus {

// Each profile parameter is sampled with its own shuffled stratification so
// any subset of singers still spreads across every range. That spread is what
// keeps the identity metrics meaningful at small corpus sizes.
inline std::vector<SingerProfile> sample_profiles(int n_singers, Rng rng) {
  struct Param {
    const char* tag;
    double lo, hi;
    double SingerProfile::* field;
  };
  static const std::vector<Param> params = {
      {"shift", 0.8, 1.25, &SingerProfile::formant_shift_ratio},
      {"tilt", -9.0, 0.0, &SingerProfile::spectral_tilt_db_per_oct},
      {"breath", 0.0, 0.3, &SingerProfile::breathiness},
      {"vib_rate", 4.5, 7.5, &SingerProfile::vibrato_rate_hz},
      {"vib_extent", 15.0, 80.0, &SingerProfile::vibrato_extent_cents},
      {"glide", 20.0, 150.0, &SingerProfile::onset_glide_ms},
      {"vib_delay", 100.0, 400.0, &SingerProfile::vibrato_onset_delay_ms},
  };
  std::vector<SingerProfile> profiles(static_cast<size_t>(n_singers));
  for (int i = 0; i < n_singers; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%03d", i);
    profiles[static_cast<size_t>(i)].singer_id = buf;
  }
  for (const auto& p : params) {
    std::vector<int> order(static_cast<size_t>(n_singers));
    for (int i = 0; i < n_singers; ++i) order[static_cast<size_t>(i)] = i;
    auto prng = rng.fork(p.tag);
    prng.shuffle(order);
    for (int i = 0; i < n_singers; ++i) {
      const double u = 0.25 + 0.5 * prng.uniform01();  // stay inside the bin
      const double frac = (order[static_cast<size_t>(i)] + u) / n_singers;
      profiles[static_cast<size_t>(i)].*p.field = p.lo + (p.hi - p.lo) * frac;
    }
  }
  return profiles;
}

// Random melody: a bounded pitch walk over the vowel alphabet, mostly short
// notes with occasional sustained ones, and a 10% chance of a rest after
// each note. Durations are in 1024-sample frames.
inline ScoreSequence generate_score(Rng rng, int min_total_frames = 110,
                                    int max_total_frames = 190) {
  ScoreSequence score;
  const int target = rng.uniform_int(min_total_frames, max_total_frames);
  int midi = rng.uniform_int(kMidiLow, kMidiHigh);
  int total = 0;
  while (total < target) {
    NoteEvent e;
    e.phoneme = vowel_table()[static_cast<size_t>(rng.below(8))].symbol;
    midi = std::clamp(midi + rng.uniform_int(-5, 5), kMidiLow, kMidiHigh);
    e.midi_pitch = midi;
    e.duration_frames =
        rng.uniform01() < 0.25 ? rng.uniform_int(28, 50) : rng.uniform_int(6, 24);
    score.notes.push_back(e);
    total += e.duration_frames;
    if (rng.uniform01() < 0.10) {
      NoteEvent rest;
      rest.phoneme = "-";
      rest.midi_pitch = 0;
      rest.duration_frames = rng.uniform_int(2, 5);
      score.notes.push_back(rest);
      total += rest.duration_frames;
    }
  }
  return score;
}

inline void save_score(const std::filesystem::path& path, const ScoreSequence& score) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write score: " + path.string());
  for (const auto& e : score.notes) {
    nlohmann::json j{{"phoneme", e.phoneme},
                     {"midi_pitch", e.midi_pitch},
                     {"duration_frames", e.duration_frames}};
    f << j.dump() << "\n";
  }
  if (!f) throw IoError("failed writing score: " + path.string());
}

inline ScoreSequence load_score(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read score: " + path.string());
  ScoreSequence score;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    NoteEvent e;
    j.at("phoneme").get_to(e.phoneme);
    j.at("midi_pitch").get_to(e.midi_pitch);
    j.at("duration_frames").get_to(e.duration_frames);
    score.notes.push_back(e);
  }
  return score;
}

// Feature cache: little-endian binary, one normalized matrix per file.
namespace detail {

inline void write_feature_file(const std::filesystem::path& path, const Tensor& m,
                               int sample_rate, int hop, const dsp::NormInfo& norm) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write feature cache: " + path.string());
  f.write("SVSF", 4);
  auto put_u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_f64 = [&](double v) { f.write(reinterpret_cast<const char*>(&v), 8); };
  put_u32(1);
  put_u32(static_cast<std::uint32_t>(m.shape[0]));
  put_u32(static_cast<std::uint32_t>(m.shape[1]));
  put_u32(static_cast<std::uint32_t>(sample_rate));
  put_u32(static_cast<std::uint32_t>(hop));
  put_f64(norm.lo);
  put_f64(norm.hi);
  f.write(reinterpret_cast<const char*>(m.v.data()),
          static_cast<std::streamsize>(m.v.size() * sizeof(double)));
  if (!f) throw IoError("failed writing feature cache: " + path.string());
}

struct FeatureFile {
  Tensor values;
  int sample_rate = 0;
  int hop = 0;
  dsp::NormInfo norm;
};

inline FeatureFile read_feature_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read feature cache: " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "SVSF")
    throw IoError("bad feature cache header: " + path.string());
  auto get_u32 = [&] {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto get_f64 = [&] {
    double v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  const std::uint32_t version = get_u32();
  if (version != 1) throw IoError("unsupported feature cache version");
  FeatureFile out;
  const size_t rows = get_u32();
  const size_t cols = get_u32();
  out.sample_rate = static_cast<int>(get_u32());
  out.hop = static_cast<int>(get_u32());
  out.norm.lo = get_f64();
  out.norm.hi = get_f64();
  out.values = Tensor({static_cast<int>(rows), static_cast<int>(cols)});
  f.read(reinterpret_cast<char*>(out.values.v.data()),
         static_cast<std::streamsize>(rows * cols * sizeof(double)));
  if (!f) throw IoError("truncated feature cache: " + path.string());
  return out;
}

}  // namespace detail

inline void save_manifest(const std::filesystem::path& path, const CorpusManifest& m) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest: " + path.string());
  f << nlohmann::json(m).dump(2) << "\n";
  if (!f) throw IoError("failed writing manifest: " + path.string());
}

inline CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read manifest: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest: " + std::string(e.what()));
  }
  return j.get<CorpusManifest>();
}

// Builds a complete synthetic corpus under out_dir:
//   manifest.json, wav/<song>.wav, scores/<song>.jsonl,
//   features/<song>.{mel,lin}.bin
// The last song of every singer is tagged "test"; normalization constants
// come from the train split only. The whole build is a pure function of
// (n_singers, n_songs_per_singer, seed).
inline CorpusManifest build_corpus(const std::filesystem::path& out_dir, int n_singers,
                                   int n_songs_per_singer, std::uint64_t seed) {
  if (n_singers < 2)
    throw InvalidConfig("build_corpus: need at least 2 singers");
  if (n_songs_per_singer < 2)
    throw InvalidConfig("build_corpus: need at least 2 songs per singer");

  std::error_code ec;
  for (const char* sub : {"", "wav", "scores", "features"}) {
    std::filesystem::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create corpus directory: " + (out_dir / sub).string());
  }

  Rng rng(seed);
  CorpusManifest manifest;
  manifest.seed = seed;
  manifest.profiles = sample_profiles(n_singers, rng.fork("profiles"));

  struct Item {
    ManifestEntry entry;
    ScoreSequence score;
    dsp::AudioClip clip;
  };
  const size_t n_items =
      static_cast<size_t>(n_singers) * static_cast<size_t>(n_songs_per_singer);
  std::vector<Item> items(n_items);
  for (int si = 0; si < n_singers; ++si) {
    for (int gi = 0; gi < n_songs_per_singer; ++gi) {
      auto& item = items[static_cast<size_t>(si * n_songs_per_singer + gi)];
      char buf[32];
      std::snprintf(buf, sizeof buf, "s%03d_song%02d", si, gi);
      item.entry.singer_id = manifest.profiles[static_cast<size_t>(si)].singer_id;
      item.entry.song_id = buf;
      item.entry.wav_path = std::string("wav/") + buf + ".wav";
      item.entry.score_path = std::string("scores/") + buf + ".jsonl";
      item.entry.split = gi == n_songs_per_singer - 1 ? "test" : "train";
      item.score = generate_score(
          rng.fork("score", static_cast<std::uint64_t>(si), static_cast<std::uint64_t>(gi)));
    }
  }
  parallel_for(n_items, [&](size_t i) {
    const int si = static_cast<int>(i) / n_songs_per_singer;
    const int gi = static_cast<int>(i) % n_songs_per_singer;
    items[i].clip = render_song(
        items[i].score, manifest.profiles[static_cast<size_t>(si)],
        rng.fork("render", static_cast<std::uint64_t>(si), static_cast<std::uint64_t>(gi))
            .next_u64());
  });

  // Normalization stats over the train split, then cached features for all.
  dsp::MelConfig mel_cfg;
  double mel_lo = 1e30, mel_hi = -1e30, lin_lo = 1e30, lin_hi = -1e30;
  for (const auto& item : items) {
    if (item.entry.split != "train") continue;
    const auto mel_raw = dsp::mel_log_raw(item.clip, mel_cfg);
    for (double v : mel_raw.v) {
      mel_lo = std::min(mel_lo, v);
      mel_hi = std::max(mel_hi, v);
    }
    const auto mag = dsp::magnitude_stft(item.clip, 1024, 256);
    for (double v : mag.v) {
      const double lv = std::log(dsp::kLogFloor + v);
      lin_lo = std::min(lin_lo, lv);
      lin_hi = std::max(lin_hi, lv);
    }
  }
  if (mel_lo >= mel_hi || lin_lo >= lin_hi)
    throw InvalidConfig("build_corpus: degenerate normalization range");
  manifest.mel_lo = mel_lo;
  manifest.mel_hi = mel_hi;
  manifest.linear_lo = lin_lo;
  manifest.linear_hi = lin_hi;

  const dsp::NormInfo mel_norm{mel_lo, mel_hi};
  const dsp::NormInfo lin_norm{lin_lo, lin_hi};
  mel_cfg.norm = mel_norm;
  for (auto& item : items) {
    io::write_wav(out_dir / item.entry.wav_path, item.clip);
    save_score(out_dir / item.entry.score_path, item.score);
    const auto mel = dsp::mel_spectrogram(item.clip, mel_cfg);
    const auto lin = dsp::linear_spectrogram(item.clip, lin_norm);
    detail::write_feature_file(out_dir / "features" / (item.entry.song_id + ".mel.bin"),
                               mel.values, item.clip.sample_rate, mel.hop_samples,
                               mel_norm);
    detail::write_feature_file(out_dir / "features" / (item.entry.song_id + ".lin.bin"),
                               lin.values, item.clip.sample_rate, lin.hop_samples,
                               lin_norm);
    manifest.entries.push_back(item.entry);
  }
  save_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

// In-memory view of a corpus directory, with features loaded from the cache.
struct LoadedCorpus {
  std::filesystem::path root;
  CorpusManifest manifest;
  std::map<std::string, ScoreSequence> scores;             // by song_id
  std::map<std::string, dsp::MelSpectrogram> mels;         // by song_id
  std::map<std::string, dsp::LinearSpectrogram> linears;   // by song_id
  dsp::NormInfo mel_norm, linear_norm;

  const SingerProfile& profile(const std::string& singer_id) const {
    for (const auto& p : manifest.profiles)
      if (p.singer_id == singer_id) return p;
    throw InvalidInput("unknown singer: " + singer_id);
  }
};

inline LoadedCorpus load_corpus(const std::filesystem::path& root) {
  LoadedCorpus c;
  c.root = root;
  c.manifest = load_manifest(root / "manifest.json");
  c.mel_norm = {c.manifest.mel_lo, c.manifest.mel_hi};
  c.linear_norm = {c.manifest.linear_lo, c.manifest.linear_hi};
  for (const auto& e : c.manifest.entries) {
    c.scores[e.song_id] = load_score(root / e.score_path);
    auto mel_file = detail::read_feature_file(root / "features" / (e.song_id + ".mel.bin"));
    dsp::MelSpectrogram mel;
    mel.values = std::move(mel_file.values);
    mel.hop_samples = mel_file.hop;
    mel.norm = mel_file.norm;
    c.mels[e.song_id] = std::move(mel);
    auto lin_file = detail::read_feature_file(root / "features" / (e.song_id + ".lin.bin"));
    dsp::LinearSpectrogram lin;
    lin.values = std::move(lin_file.values);
    lin.hop_samples = lin_file.hop;
    lin.norm = lin_file.norm;
    c.linears[e.song_id] = std::move(lin);
  }
  return c;
}

}  // namespace svs::corpus
