#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "svs/core/error.hpp"
#include "svs/core/tensor.hpp"

namespace svs::training {

struct LossReport {
  double l1_mel = 0;
  double l1_linear = 0;
  double adv_g = 0;
  double adv_d = 0;
  double total = 0;
  uint64_t step = 0;
};

// Masked mean absolute error over a [bins x F] stream, where frame t of the
// mask covers `frames_per_mask` consecutive columns (4 for the linear
// stream). Padded frames contribute neither to the numerator nor the
// denominator. If dpred is given it receives d(loss)/d(pred); the
// subgradient at zero difference is zero, so a perfect prediction has an
// exactly zero gradient.
inline double reconstruction_loss(const Tensor& pred, const Tensor& target,
                                  const std::vector<Real>& mask, int frames_per_mask,
                                  Tensor* dpred = nullptr) {
  if (pred.shape != target.shape || pred.shape.size() != 2)
    throw InvalidInput("reconstruction_loss: shape mismatch");
  const int bins = pred.shape[0];
  const int F = pred.shape[1];
  if (static_cast<int>(mask.size()) * frames_per_mask != F)
    throw InvalidInput("reconstruction_loss: mask length mismatch");

  std::int64_t valid_frames = 0;
  for (Real m : mask) valid_frames += m > Real(0.5) ? 1 : 0;
  if (valid_frames == 0) throw InsufficientData("reconstruction_loss: empty mask");
  const Real n = static_cast<Real>(bins) * static_cast<Real>(valid_frames) *
                 static_cast<Real>(frames_per_mask);

  if (dpred) *dpred = Tensor(pred.shape);
  Real acc = 0;
  for (int t = 0; t < static_cast<int>(mask.size()); ++t) {
    if (mask[static_cast<size_t>(t)] <= Real(0.5)) continue;
    for (int b = 0; b < bins; ++b)
      for (int j = 0; j < frames_per_mask; ++j) {
        const int col = t * frames_per_mask + j;
        const Real d = pred.at(b, col) - target.at(b, col);
        acc += std::abs(d);
        if (dpred)
          dpred->at(b, col) = (d > 0 ? Real(1) : d < 0 ? Real(-1) : Real(0)) / n;
      }
  }
  return acc / n;
}

// Least-squares adversarial pair over scalar discriminator outputs.
//   adv_d = mean (D(real) - 1)^2 + mean D(fake)^2
//   adv_g = mean (D(fake) - 1)^2
// Empty input means no adversarial signal this step: both terms are zero.
struct AdvLosses {
  double adv_g = 0;
  double adv_d = 0;
};

inline AdvLosses adversarial_losses(const std::vector<double>& d_real,
                                    const std::vector<double>& d_fake) {
  AdvLosses out;
  if (d_real.size() != d_fake.size())
    throw InvalidInput("adversarial_losses: patch count mismatch");
  if (d_real.empty()) return out;
  const double n = static_cast<double>(d_real.size());
  for (double d : d_real) out.adv_d += (d - 1.0) * (d - 1.0) / n;
  for (double d : d_fake) {
    out.adv_d += d * d / n;
    out.adv_g += (d - 1.0) * (d - 1.0) / n;
  }
  return out;
}

}  // namespace svs::training
