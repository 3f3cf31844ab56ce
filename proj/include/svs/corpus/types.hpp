#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "svs/core/error.hpp"

namespace svs::corpus {

// Ground-truth factor split: timbre = what the vocal tract does to the
// spectrum, style = how the pitch moves. Every corpus singer is fully
// described by these seven numbers, which is what makes objective
// identity/style evaluation possible downstream.
struct SingerProfile {
  std::string singer_id;
  // timbre
  double formant_shift_ratio = 1.0;     // [0.8, 1.25]
  double spectral_tilt_db_per_oct = 0;  // [-9, 0]
  double breathiness = 0.0;             // [0, 0.3]
  // style
  double vibrato_rate_hz = 5.5;         // [4.5, 7.5]
  double vibrato_extent_cents = 40;     // [15, 80]
  double onset_glide_ms = 60;           // [20, 150]
  double vibrato_onset_delay_ms = 200;  // [100, 400]
};

struct NoteEvent {
  std::string phoneme;     // one of the vowel alphabet, or "-" for a rest
  int midi_pitch = 0;      // 48..72, 0 for a rest
  int duration_frames = 2; // at mel hop (1024 samples)
};

struct ScoreSequence {
  std::vector<NoteEvent> notes;

  int total_frames() const {
    int n = 0;
    for (const auto& e : notes) n += e.duration_frames;
    return n;
  }
};

struct ManifestEntry {
  std::string singer_id;
  std::string song_id;
  std::string wav_path;    // relative to the corpus directory
  std::string score_path;  // relative to the corpus directory
  std::string split;       // "train" or "test"
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::vector<SingerProfile> profiles;
  std::uint64_t seed = 0;
  // Log-magnitude normalization fit on the train split.
  double mel_lo = 0.0, mel_hi = 0.0;
  double linear_lo = 0.0, linear_hi = 0.0;
};

// Vowel alphabet with two-resonance templates. Index 0 is the rest symbol.
struct VowelTemplate {
  const char* symbol;
  double f1, f2;
};

inline const std::vector<VowelTemplate>& vowel_table() {
  static const std::vector<VowelTemplate> table = {
      {"a", 800.0, 1200.0}, {"e", 400.0, 2000.0},  {"i", 300.0, 2300.0},
      {"o", 450.0, 800.0},  {"u", 325.0, 700.0},   {"ə", 500.0, 1500.0},  // ə
      {"ɛ", 550.0, 1800.0},                                               // ɛ
      {"ɔ", 500.0, 900.0},                                                // ɔ
  };
  return table;
}

constexpr int kPhonemeVocab = 9;  // rest + 8 vowels
constexpr int kPitchVocab = 26;   // rest + midi 48..72
constexpr int kMidiLow = 48;
constexpr int kMidiHigh = 72;
constexpr double kFormantB1 = 90.0;
constexpr double kFormantB2 = 140.0;

inline int phoneme_id(const std::string& symbol) {
  if (symbol == "-") return 0;
  const auto& table = vowel_table();
  for (size_t i = 0; i < table.size(); ++i)
    if (symbol == table[i].symbol) return static_cast<int>(i) + 1;
  throw InvalidInput("unknown phoneme symbol: " + symbol);
}

inline const std::string& phoneme_symbol(int id) {
  static const std::vector<std::string> symbols = [] {
    std::vector<std::string> s{"-"};
    for (const auto& v : vowel_table()) s.push_back(v.symbol);
    return s;
  }();
  if (id < 0 || id >= static_cast<int>(symbols.size()))
    throw InvalidInput("phoneme id out of range: " + std::to_string(id));
  return symbols[static_cast<size_t>(id)];
}

inline int pitch_id(int midi) {
  if (midi == 0) return 0;
  if (midi < kMidiLow || midi > kMidiHigh)
    throw InvalidInput("midi pitch out of range: " + std::to_string(midi));
  return midi - kMidiLow + 1;
}

inline double midi_to_hz(int midi) { return 440.0 * std::pow(2.0, (midi - 69) / 12.0); }

// JSON bindings.

inline void to_json(nlohmann::json& j, const SingerProfile& p) {
  j = nlohmann::json{{"singer_id", p.singer_id},
                     {"formant_shift_ratio", p.formant_shift_ratio},
                     {"spectral_tilt_db_per_oct", p.spectral_tilt_db_per_oct},
                     {"breathiness", p.breathiness},
                     {"vibrato_rate_hz", p.vibrato_rate_hz},
                     {"vibrato_extent_cents", p.vibrato_extent_cents},
                     {"onset_glide_ms", p.onset_glide_ms},
                     {"vibrato_onset_delay_ms", p.vibrato_onset_delay_ms}};
}

inline void from_json(const nlohmann::json& j, SingerProfile& p) {
  j.at("singer_id").get_to(p.singer_id);
  j.at("formant_shift_ratio").get_to(p.formant_shift_ratio);
  j.at("spectral_tilt_db_per_oct").get_to(p.spectral_tilt_db_per_oct);
  j.at("breathiness").get_to(p.breathiness);
  j.at("vibrato_rate_hz").get_to(p.vibrato_rate_hz);
  j.at("vibrato_extent_cents").get_to(p.vibrato_extent_cents);
  j.at("onset_glide_ms").get_to(p.onset_glide_ms);
  j.at("vibrato_onset_delay_ms").get_to(p.vibrato_onset_delay_ms);
}

inline void to_json(nlohmann::json& j, const ManifestEntry& e) {
  j = nlohmann::json{{"singer_id", e.singer_id},
                     {"song_id", e.song_id},
                     {"wav_path", e.wav_path},
                     {"score_path", e.score_path},
                     {"split", e.split}};
}

inline void from_json(const nlohmann::json& j, ManifestEntry& e) {
  j.at("singer_id").get_to(e.singer_id);
  j.at("song_id").get_to(e.song_id);
  j.at("wav_path").get_to(e.wav_path);
  j.at("score_path").get_to(e.score_path);
  j.at("split").get_to(e.split);
}

inline void to_json(nlohmann::json& j, const CorpusManifest& m) {
  j = nlohmann::json{{"seed", m.seed},
                     {"profiles", m.profiles},
                     {"entries", m.entries},
                     {"normalization",
                      {{"mel_lo", m.mel_lo},
                       {"mel_hi", m.mel_hi},
                       {"linear_lo", m.linear_lo},
                       {"linear_hi", m.linear_hi}}}};
}

inline void from_json(const nlohmann::json& j, CorpusManifest& m) {
  j.at("seed").get_to(m.seed);
  j.at("profiles").get_to(m.profiles);
  j.at("entries").get_to(m.entries);
  const auto& n = j.at("normalization");
  n.at("mel_lo").get_to(m.mel_lo);
  n.at("mel_hi").get_to(m.mel_hi);
  n.at("linear_lo").get_to(m.linear_lo);
  n.at("linear_hi").get_to(m.linear_hi);
}

}  // namespace svs::corpus
