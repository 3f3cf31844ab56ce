#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "svs/corpus/examples.hpp"
#include "svs/model/network.hpp"

namespace svs::eval {

inline double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw InvalidInput("cosine_similarity: shape mismatch");
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    dot += a.v[i] * b.v[i];
    na += a.v[i] * a.v[i];
    nb += b.v[i] * b.v[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0 ? dot / denom : 0.0;
}

struct EmbeddingStats {
  double mean_same = 0;   // mean cosine over same-singer embedding pairs
  double mean_cross = 0;  // mean cosine over cross-singer pairs
  double gap = 0;         // mean_same - mean_cross
  double silhouette = 0;  // cosine-distance silhouette, averaged
  int n_singers = 0;
  int crops_per_singer = 0;
};

// Identity-embedding separation over random query crops. Held-out material
// by default: training never sees the test split, so these queries probe
// generalization rather than memorization. Falls back to the train split
// for corpora whose singers lack the requested split.
inline EmbeddingStats embedding_diagnostics(const model::WeightSet& w,
                                            const corpus::LoadedCorpus& corpus,
                                            int crops_per_singer = 10, uint64_t seed = 1,
                                            const std::string& split = "test") {
  if (crops_per_singer < 2)
    throw InvalidConfig("embedding_diagnostics: need at least 2 crops per singer");
  std::vector<std::string> singers;
  for (const auto& p : corpus.manifest.profiles) singers.push_back(p.singer_id);
  if (singers.size() < 2)
    throw InvalidConfig("embedding_diagnostics: need at least 2 singers");

  std::vector<std::vector<Tensor>> emb(singers.size());
  for (size_t si = 0; si < singers.size(); ++si) {
    for (int k = 0; k < crops_per_singer; ++k) {
      const auto qseed =
          Rng(seed).fork("crop", si, static_cast<uint64_t>(k)).next_u64();
      Tensor q;
      try {
        q = corpus::sample_query(corpus, singers[si], "", qseed, split);
      } catch (const InsufficientData&) {
        q = corpus::sample_query(corpus, singers[si], "", qseed);
      }
      emb[si].push_back(model::encode_singer(w, q));
    }
  }

  double same = 0, cross = 0;
  std::int64_t n_same = 0, n_cross = 0;
  for (size_t si = 0; si < emb.size(); ++si)
    for (size_t i = 0; i < emb[si].size(); ++i)
      for (size_t j = i + 1; j < emb[si].size(); ++j) {
        same += cosine_similarity(emb[si][i], emb[si][j]);
        ++n_same;
      }
  for (size_t si = 0; si < emb.size(); ++si)
    for (size_t sj = si + 1; sj < emb.size(); ++sj)
      for (const auto& u : emb[si])
        for (const auto& v : emb[sj]) {
          cross += cosine_similarity(u, v);
          ++n_cross;
        }

  EmbeddingStats st;
  st.n_singers = static_cast<int>(singers.size());
  st.crops_per_singer = crops_per_singer;
  st.mean_same = n_same > 0 ? same / static_cast<double>(n_same) : 0.0;
  st.mean_cross = n_cross > 0 ? cross / static_cast<double>(n_cross) : 0.0;
  st.gap = st.mean_same - st.mean_cross;

  // Silhouette on cosine distance: a(i) intra-singer mean, b(i) the nearest
  // other singer's mean.
  double sil = 0;
  std::int64_t n_sil = 0;
  for (size_t si = 0; si < emb.size(); ++si)
    for (size_t i = 0; i < emb[si].size(); ++i) {
      double a = 0;
      int na = 0;
      for (size_t j = 0; j < emb[si].size(); ++j) {
        if (j == i) continue;
        a += 1.0 - cosine_similarity(emb[si][i], emb[si][j]);
        ++na;
      }
      if (na == 0) continue;
      a /= na;
      double b = 1e300;
      for (size_t sj = 0; sj < emb.size(); ++sj) {
        if (sj == si) continue;
        double m = 0;
        for (const auto& v : emb[sj]) m += 1.0 - cosine_similarity(emb[si][i], v);
        b = std::min(b, m / static_cast<double>(emb[sj].size()));
      }
      const double top = std::max(a, b);
      sil += top > 0 ? (b - a) / top : 0.0;
      ++n_sil;
    }
  st.silhouette = n_sil > 0 ? sil / static_cast<double>(n_sil) : 0.0;
  return st;
}

}  // namespace svs::eval
