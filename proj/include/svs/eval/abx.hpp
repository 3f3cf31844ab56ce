#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "svs/corpus/examples.hpp"
#include "svs/corpus/render.hpp"
#include "svs/eval/embedding.hpp"
#include "svs/eval/features.hpp"
#include "svs/inference/synthesize.hpp"

namespace svs::eval {

enum class Choice { A, B };

inline const char* to_string(Choice c) { return c == Choice::A ? "A" : "B"; }

// ---------------------------------------------------------------------------
// Feature-distance classifiers. Dimensions mix Hz, cents, and ms, so
// distances are computed after z-scoring each dimension with statistics
// from the corpus reference pool.

using Vec3 = std::array<double, 3>;

inline Vec3 to_vec(const TimbreMeasure& m) { return {m.centroid_hz, m.f1_hz, m.f2_hz}; }
inline Vec3 to_vec(const StyleMeasure& m) {
  return {m.rate_hz, m.extent_cents, m.glide_ms};
}

struct FeatureScale {
  Vec3 mean{};
  Vec3 sd{};
};

inline FeatureScale fit_scale(const std::vector<Vec3>& rows) {
  if (rows.empty()) throw InsufficientData("fit_scale: no reference features");
  FeatureScale s;
  for (const auto& r : rows)
    for (int d = 0; d < 3; ++d) s.mean[static_cast<size_t>(d)] += r[static_cast<size_t>(d)];
  for (int d = 0; d < 3; ++d) s.mean[static_cast<size_t>(d)] /= static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (int d = 0; d < 3; ++d) {
      const double c = r[static_cast<size_t>(d)] - s.mean[static_cast<size_t>(d)];
      s.sd[static_cast<size_t>(d)] += c * c;
    }
  for (int d = 0; d < 3; ++d) {
    s.sd[static_cast<size_t>(d)] =
        std::sqrt(s.sd[static_cast<size_t>(d)] / static_cast<double>(rows.size()));
    // Constant dimensions carry no information; unit scale keeps them inert.
    if (s.sd[static_cast<size_t>(d)] < 1e-9) s.sd[static_cast<size_t>(d)] = 1.0;
  }
  return s;
}

inline double scaled_distance(const Vec3& a, const Vec3& b, const FeatureScale& s) {
  double acc = 0;
  for (int d = 0; d < 3; ++d) {
    const double z = (a[static_cast<size_t>(d)] - b[static_cast<size_t>(d)]) /
                     s.sd[static_cast<size_t>(d)];
    acc += z * z;
  }
  return std::sqrt(acc);
}

// Ties break toward A: equal distances carry no evidence either way, and a
// fixed rule keeps every run deterministic.
inline Choice nearest(const Vec3& c, const Vec3& a, const Vec3& b,
                      const FeatureScale& s, double* dist_a = nullptr,
                      double* dist_b = nullptr) {
  const double da = scaled_distance(c, a, s);
  const double db = scaled_distance(c, b, s);
  if (dist_a) *dist_a = da;
  if (dist_b) *dist_b = db;
  return da <= db ? Choice::A : Choice::B;
}

inline Choice timbre_match(const TimbreMeasure& c, const TimbreMeasure& a,
                           const TimbreMeasure& b, const FeatureScale& s) {
  return nearest(to_vec(c), to_vec(a), to_vec(b), s);
}

inline Choice style_match(const StyleMeasure& c, const StyleMeasure& a,
                          const StyleMeasure& b, const FeatureScale& s) {
  return nearest(to_vec(c), to_vec(a), to_vec(b), s);
}

inline Choice timbre_match(const dsp::AudioClip& c, const dsp::AudioClip& a,
                           const dsp::AudioClip& b, const FeatureScale& s) {
  return timbre_match(measure_timbre(c), measure_timbre(a), measure_timbre(b), s);
}

inline Choice style_match(const dsp::AudioClip& c, const dsp::AudioClip& a,
                          const dsp::AudioClip& b, const FeatureScale& s) {
  return style_match(measure_style(c), measure_style(a), measure_style(b), s);
}

// ---------------------------------------------------------------------------
// Case planning. Singers are ranked by formant shift and split into four
// bands; each case draws its pair from two different bands, cycling through
// the band combinations so the full timbre range is covered evenly.

struct CasePlan {
  std::string a, b;            // reference singers (labels A and B)
  std::string timbre_donor;    // one of {a, b}
  std::string style_donor;     // the other
};

inline std::vector<std::vector<std::string>> formant_quartiles(
    const std::vector<corpus::SingerProfile>& profiles) {
  if (profiles.size() < 4)
    throw InvalidConfig("formant_quartiles: need at least 4 singers");
  std::vector<const corpus::SingerProfile*> order;
  for (const auto& p : profiles) order.push_back(&p);
  std::sort(order.begin(), order.end(), [](const auto* x, const auto* y) {
    if (x->formant_shift_ratio != y->formant_shift_ratio)
      return x->formant_shift_ratio < y->formant_shift_ratio;
    return x->singer_id < y->singer_id;
  });
  std::vector<std::vector<std::string>> bands(4);
  const size_t n = order.size();
  for (size_t i = 0; i < n; ++i)
    bands[i * 4 / n].push_back(order[i]->singer_id);
  return bands;
}

inline std::vector<CasePlan> plan_cases(const std::vector<corpus::SingerProfile>& profiles,
                                        int n_cases, uint64_t seed) {
  if (n_cases < 1) throw InvalidConfig("plan_cases: need at least one case");
  const auto bands = formant_quartiles(profiles);
  std::vector<std::pair<int, int>> band_pairs;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) band_pairs.emplace_back(i, j);

  std::vector<CasePlan> plans;
  for (int k = 0; k < n_cases; ++k) {
    const Rng rng = Rng(seed).fork("case", static_cast<uint64_t>(k));
    const auto [bi, bj] = band_pairs[static_cast<size_t>(k) % band_pairs.size()];
    const auto& ba = bands[static_cast<size_t>(bi)];
    const auto& bb = bands[static_cast<size_t>(bj)];
    CasePlan p;
    p.a = ba[rng.fork("a").below(ba.size())];
    p.b = bb[rng.fork("b").below(bb.size())];
    // Seeded coin balances the correct answers between A and B.
    const bool timbre_is_a = rng.fork("coin").below(2) == 0;
    p.timbre_donor = timbre_is_a ? p.a : p.b;
    p.style_donor = timbre_is_a ? p.b : p.a;
    plans.push_back(std::move(p));
  }
  return plans;
}

// Probe score shared by references and candidates: three long sustained
// notes at one low pitch, so the vibrato fit gets stable runs and the
// envelope gets dense harmonics. One vowel and one pitch throughout: the
// formant reader averages the log spectrum over voiced frames, so mixing
// vowels smears the average into a single broad hump, and mixing pitches
// spreads the comb-leakage bumps across bands where real formants live.
// The open-mid vowel keeps the two resonances far enough apart that they
// stay resolvable across the whole formant-shift range. 128 frames, ~6 s.
inline corpus::ScoreSequence probe_score() {
  corpus::ScoreSequence s;
  s.notes.push_back({"ɛ", 50, 40});
  s.notes.push_back({"-", 0, 4});
  s.notes.push_back({"ɛ", 50, 40});
  s.notes.push_back({"-", 0, 4});
  s.notes.push_back({"ɛ", 50, 40});
  return s;
}

// Timbre parameters from one donor, style parameters from the other: the
// ground-truth analog of cross-generation, used to validate the metric
// with no model in the loop.
inline corpus::SingerProfile mixed_profile(const corpus::SingerProfile& timbre_donor,
                                           const corpus::SingerProfile& style_donor) {
  corpus::SingerProfile p = timbre_donor;
  p.singer_id = timbre_donor.singer_id + "x" + style_donor.singer_id;
  p.vibrato_rate_hz = style_donor.vibrato_rate_hz;
  p.vibrato_extent_cents = style_donor.vibrato_extent_cents;
  p.onset_glide_ms = style_donor.onset_glide_ms;
  p.vibrato_onset_delay_ms = style_donor.vibrato_onset_delay_ms;
  return p;
}

// ---------------------------------------------------------------------------
// Suite runner. References are ground-truth renders of the probe score, one
// per singer; the candidate clip comes from a caller-supplied generator so
// the same scoring path serves both the metric-validity oracle (mixed-profile
// renders) and the model evaluation (cross-synthesis).

struct AbxCaseRow {
  int index = 0;
  CasePlan plan;
  bool timbre_valid = false, style_valid = false;
  TimbreMeasure t_c, t_a, t_b;
  StyleMeasure s_c, s_a, s_b;
  double timbre_dist_a = 0, timbre_dist_b = 0;
  double style_dist_a = 0, style_dist_b = 0;
  Choice timbre_choice = Choice::A, style_choice = Choice::A;
  Choice timbre_correct = Choice::A, style_correct = Choice::A;
};

struct DisentangleReport {
  double timbre_accuracy = 0, style_accuracy = 0;
  int n_timbre_cases = 0, n_style_cases = 0;
  Vec3 timbre_feature_dist{};  // mean |candidate - correct reference|, raw units
  Vec3 style_feature_dist{};
  EmbeddingStats embedding;
  std::vector<AbxCaseRow> cases;
};

namespace detail {

struct Reference {
  TimbreMeasure timbre;
  StyleMeasure style;
};

inline std::map<std::string, Reference> reference_features(
    const std::vector<corpus::SingerProfile>& profiles, uint64_t seed) {
  const auto score = probe_score();
  std::map<std::string, Reference> refs;
  for (const auto& p : profiles) {
    const auto clip = corpus::render_song(score, p, Rng(seed).fork("ref", 0).next_u64());
    refs[p.singer_id] = {measure_timbre(clip), measure_style(clip)};
  }
  return refs;
}

}  // namespace detail

using CandidateFn =
    std::function<dsp::AudioClip(const CasePlan& plan, int case_index)>;

inline DisentangleReport run_abx_cases(const std::vector<corpus::SingerProfile>& profiles,
                                       int n_cases, uint64_t seed,
                                       const CandidateFn& make_candidate) {
  const auto plans = plan_cases(profiles, n_cases, seed);
  const auto refs = detail::reference_features(profiles, seed);

  std::vector<Vec3> timbre_rows, style_rows;
  for (const auto& [id, r] : refs) {
    timbre_rows.push_back(to_vec(r.timbre));
    style_rows.push_back(to_vec(r.style));
  }
  const FeatureScale timbre_scale = fit_scale(timbre_rows);
  const FeatureScale style_scale = fit_scale(style_rows);

  DisentangleReport rep;
  int timbre_hits = 0, style_hits = 0, timbre_valid = 0, style_valid = 0;
  for (int k = 0; k < n_cases; ++k) {
    const auto& plan = plans[static_cast<size_t>(k)];
    AbxCaseRow row;
    row.index = k;
    row.plan = plan;
    row.t_a = refs.at(plan.a).timbre;
    row.t_b = refs.at(plan.b).timbre;
    row.s_a = refs.at(plan.a).style;
    row.s_b = refs.at(plan.b).style;
    row.timbre_correct = plan.timbre_donor == plan.a ? Choice::A : Choice::B;
    row.style_correct = plan.style_donor == plan.a ? Choice::A : Choice::B;

    const dsp::AudioClip c = make_candidate(plan, k);

    // An unmeasurable candidate still answers: the documented fallback is A,
    // which lands at chance because the correct labels are coin-balanced.
    try {
      row.t_c = measure_timbre(c);
      row.timbre_valid = true;
      row.timbre_choice = nearest(to_vec(row.t_c), to_vec(row.t_a), to_vec(row.t_b),
                                  timbre_scale, &row.timbre_dist_a, &row.timbre_dist_b);
    } catch (const InsufficientData&) {
      row.timbre_choice = Choice::A;
    }
    try {
      row.s_c = measure_style(c);
      row.style_valid = true;
      row.style_choice = nearest(to_vec(row.s_c), to_vec(row.s_a), to_vec(row.s_b),
                                 style_scale, &row.style_dist_a, &row.style_dist_b);
    } catch (const InsufficientData&) {
      row.style_choice = Choice::A;
    }

    timbre_hits += row.timbre_choice == row.timbre_correct ? 1 : 0;
    style_hits += row.style_choice == row.style_correct ? 1 : 0;
    if (row.timbre_valid) {
      ++timbre_valid;
      const Vec3 c3 = to_vec(row.t_c);
      const Vec3 want = to_vec(row.timbre_correct == Choice::A ? row.t_a : row.t_b);
      for (int d = 0; d < 3; ++d)
        rep.timbre_feature_dist[static_cast<size_t>(d)] +=
            std::abs(c3[static_cast<size_t>(d)] - want[static_cast<size_t>(d)]);
    }
    if (row.style_valid) {
      ++style_valid;
      const Vec3 c3 = to_vec(row.s_c);
      const Vec3 want = to_vec(row.style_correct == Choice::A ? row.s_a : row.s_b);
      for (int d = 0; d < 3; ++d)
        rep.style_feature_dist[static_cast<size_t>(d)] +=
            std::abs(c3[static_cast<size_t>(d)] - want[static_cast<size_t>(d)]);
    }
    rep.cases.push_back(std::move(row));
  }

  rep.n_timbre_cases = n_cases;
  rep.n_style_cases = n_cases;
  rep.timbre_accuracy = static_cast<double>(timbre_hits) / n_cases;
  rep.style_accuracy = static_cast<double>(style_hits) / n_cases;
  for (int d = 0; d < 3; ++d) {
    if (timbre_valid > 0) rep.timbre_feature_dist[static_cast<size_t>(d)] /= timbre_valid;
    if (style_valid > 0) rep.style_feature_dist[static_cast<size_t>(d)] /= style_valid;
  }
  return rep;
}

// Metric-validity oracle: candidates are ground-truth mixed-profile renders,
// no model involved. The matchers must solve these before model-level
// numbers mean anything.
inline DisentangleReport run_abx_oracle(const std::vector<corpus::SingerProfile>& profiles,
                                        int n_cases, uint64_t seed) {
  std::map<std::string, const corpus::SingerProfile*> by_id;
  for (const auto& p : profiles) by_id[p.singer_id] = &p;
  const auto score = probe_score();
  return run_abx_cases(profiles, n_cases, seed,
                       [&](const CasePlan& plan, int k) {
                         const auto mixed = mixed_profile(*by_id.at(plan.timbre_donor),
                                                          *by_id.at(plan.style_donor));
                         return corpus::render_song(
                             score, mixed, Rng(seed).fork("cand", static_cast<uint64_t>(k)).next_u64());
                       });
}

// Model evaluation: candidates are cross-synthesized, timbre query from one
// donor and style query from the other, queries drawn from the train split.
inline DisentangleReport run_abx_suite(const model::WeightSet& w,
                                       const corpus::LoadedCorpus& corpus, int n_cases,
                                       uint64_t seed, int gl_iters = 60) {
  const auto& profiles = corpus.manifest.profiles;
  const auto score = probe_score();
  DisentangleReport rep = run_abx_cases(
      profiles, n_cases, seed, [&](const CasePlan& plan, int k) {
        const Rng rng = Rng(seed).fork("query", static_cast<uint64_t>(k));
        const Tensor q_t = corpus::sample_query(corpus, plan.timbre_donor, "",
                                                rng.fork("t").next_u64(), "train");
        const Tensor q_s = corpus::sample_query(corpus, plan.style_donor, "",
                                                rng.fork("s").next_u64(), "train");
        return inference::cross_synthesize(w, score, q_t, q_s, gl_iters).clip;
      });
  rep.embedding = embedding_diagnostics(w, corpus, 10, seed);
  return rep;
}

// ---------------------------------------------------------------------------
// Report serialization: one JSON summary plus a per-case CSV for audit.

inline nlohmann::json report_to_json(const DisentangleReport& r) {
  nlohmann::json j;
  j["timbre_accuracy"] = r.timbre_accuracy;
  j["style_accuracy"] = r.style_accuracy;
  j["n_timbre_cases"] = r.n_timbre_cases;
  j["n_style_cases"] = r.n_style_cases;
  j["timbre_feature_dist"] = {{"centroid_hz", r.timbre_feature_dist[0]},
                              {"f1_hz", r.timbre_feature_dist[1]},
                              {"f2_hz", r.timbre_feature_dist[2]}};
  j["style_feature_dist"] = {{"rate_hz", r.style_feature_dist[0]},
                             {"extent_cents", r.style_feature_dist[1]},
                             {"glide_ms", r.style_feature_dist[2]}};
  j["embedding"] = {{"mean_same_cosine", r.embedding.mean_same},
                    {"mean_cross_cosine", r.embedding.mean_cross},
                    {"gap", r.embedding.gap},
                    {"silhouette", r.embedding.silhouette},
                    {"n_singers", r.embedding.n_singers},
                    {"crops_per_singer", r.embedding.crops_per_singer}};
  return j;
}

inline void write_report(const std::string& path, const DisentangleReport& r) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write report: " + path);
  f << report_to_json(r).dump(2) << "\n";
  if (!f) throw IoError("write failed: " + path);
}

inline void write_case_csv(const std::string& path, const DisentangleReport& r) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write case log: " + path);
  f << "case,singer_a,singer_b,timbre_donor,style_donor"
       ",timbre_valid,timbre_choice,timbre_correct,timbre_dist_a,timbre_dist_b"
       ",c_centroid_hz,c_f1_hz,c_f2_hz"
       ",style_valid,style_choice,style_correct,style_dist_a,style_dist_b"
       ",c_rate_hz,c_extent_cents,c_glide_ms\n";
  for (const auto& c : r.cases) {
    f << c.index << ',' << c.plan.a << ',' << c.plan.b << ',' << c.plan.timbre_donor
      << ',' << c.plan.style_donor << ',' << (c.timbre_valid ? 1 : 0) << ','
      << to_string(c.timbre_choice) << ',' << to_string(c.timbre_correct) << ','
      << c.timbre_dist_a << ',' << c.timbre_dist_b << ',' << c.t_c.centroid_hz << ','
      << c.t_c.f1_hz << ',' << c.t_c.f2_hz << ',' << (c.style_valid ? 1 : 0) << ','
      << to_string(c.style_choice) << ',' << to_string(c.style_correct) << ','
      << c.style_dist_a << ',' << c.style_dist_b << ',' << c.s_c.rate_hz << ','
      << c.s_c.extent_cents << ',' << c.s_c.glide_ms << '\n';
  }
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace svs::eval
