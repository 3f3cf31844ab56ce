#pragma once

#include "svs/core/error.hpp"

namespace svs::model {

// Architecture hyperparameters. `channels` scales every internal feature
// width; the singer embedding width is architectural (the conditioning
// projections and the checkpoint layout assume it) and must stay 256.
struct ModelConfig {
  int channels = 64;
  int embed_dim = 256;
  int n_mels = 80;
  int n_linear_bins = 513;
  int time_upsample = 4;
  int phoneme_vocab = 9;
  int pitch_vocab = 26;
  int n_conv_blocks = 3;
  double adversarial_weight = 0.1;
  bool use_adversarial = true;

  void validate() const {
    if (embed_dim != 256) throw InvalidConfig("embed_dim must be 256");
    if (channels < 1) throw InvalidConfig("channels must be positive");
    if (n_mels != 80) throw InvalidConfig("n_mels must be 80");
    if (n_linear_bins != 513) throw InvalidConfig("n_linear_bins must be 513");
    if (time_upsample != 4) throw InvalidConfig("time_upsample must be 4");
    if (phoneme_vocab < 2 || pitch_vocab < 2)
      throw InvalidConfig("vocab sizes must be at least 2");
    if (n_conv_blocks < 1 || n_conv_blocks > 6)
      throw InvalidConfig("n_conv_blocks must be in [1, 6]");
    if (adversarial_weight < 0) throw InvalidConfig("adversarial_weight must be >= 0");
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace svs::model
