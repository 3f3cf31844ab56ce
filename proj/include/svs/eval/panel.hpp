#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "svs/inference/synthesize.hpp"
#include "svs/io/png.hpp"

namespace svs::eval {

// Grayscale spectrogram panels: one row per condition, each row the three
// sub-panels [FM | PS | M-hat] separated by white gutters, frequency
// ascending upward. Values are already in (0, 1) from the decoders'
// sigmoids, so the mapping to 8-bit gray is direct.
constexpr int kPanelGutter = 2;

inline void write_feature_panels(const std::string& path,
                                 const std::vector<inference::SynthFeatures>& rows) {
  if (rows.empty()) throw InvalidInput("write_feature_panels: no rows");
  const int bins = rows[0].mel.shape[0];
  const int L = rows[0].mel.shape[1];
  for (const auto& r : rows)
    if (r.fm.shape != rows[0].fm.shape || r.ps.shape != rows[0].ps.shape ||
        r.mel.shape != rows[0].mel.shape)
      throw InvalidInput("write_feature_panels: mixed row shapes");

  const int width = 3 * L + 2 * kPanelGutter;
  const int height = static_cast<int>(rows.size()) * bins +
                     (static_cast<int>(rows.size()) - 1) * kPanelGutter;
  std::vector<unsigned char> px(static_cast<size_t>(width) * height, 255);

  const auto blit = [&](const Tensor& t, int x0, int y0) {
    for (int r = 0; r < bins; ++r)
      for (int c = 0; c < L; ++c) {
        const double v = std::clamp(static_cast<double>(t.at(r, c)), 0.0, 1.0);
        // row 0 of the tensor is the lowest band; images index from the top
        const int y = y0 + (bins - 1 - r);
        px[static_cast<size_t>(y) * width + x0 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
  };
  for (size_t i = 0; i < rows.size(); ++i) {
    const int y0 = static_cast<int>(i) * (bins + kPanelGutter);
    blit(rows[i].fm, 0, y0);
    blit(rows[i].ps, L + kPanelGutter, y0);
    blit(rows[i].mel, 2 * (L + kPanelGutter), y0);
  }
  io::write_png_gray(path, width, height, px);
}

// One row per query.
inline void spectrogram_panel(const model::WeightSet& w,
                              const corpus::ScoreSequence& score,
                              const std::vector<Tensor>& queries,
                              const std::string& path) {
  if (queries.empty()) throw InvalidInput("spectrogram_panel: no queries");
  std::vector<int> ph, pi;
  inference::frame_ids(score, ph, pi);
  std::vector<inference::SynthFeatures> rows;
  for (const auto& q : queries) {
    const Tensor e = model::encode_singer(w, q);
    rows.push_back(inference::synthesize_features(w, ph, pi, e, e));
  }
  write_feature_panels(path, rows);
}

// One row per alpha value, both decoders driven by the blended embedding.
inline void spectrogram_panel_alpha(const model::WeightSet& w,
                                    const corpus::ScoreSequence& score,
                                    const Tensor& query_a, const Tensor& query_b,
                                    const std::vector<double>& alphas,
                                    const std::string& path) {
  if (alphas.empty()) throw InvalidInput("spectrogram_panel_alpha: no alphas");
  std::vector<int> ph, pi;
  inference::frame_ids(score, ph, pi);
  const Tensor e_a = model::encode_singer(w, query_a);
  const Tensor e_b = model::encode_singer(w, query_b);
  std::vector<inference::SynthFeatures> rows;
  for (double alpha : alphas) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw InvalidInput("spectrogram_panel_alpha: alpha must lie in [0, 1]");
    Tensor e(e_a.shape);
    for (size_t i = 0; i < e.v.size(); ++i)
      e.v[i] = (1.0 - alpha) * e_a.v[i] + alpha * e_b.v[i];
    rows.push_back(inference::synthesize_features(w, ph, pi, e, e));
  }
  write_feature_panels(path, rows);
}

}  // namespace svs::eval
