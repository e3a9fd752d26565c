#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cyc/ops.hpp"
#include "cyc/rng.hpp"
#include "cyc/tape.hpp"

namespace cyc {

enum class Activation { elu, square_log, linear };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// Convolutional feature extractor: per-channel temporal convolution,
// learned spatial collapse, pointwise activation, temporal mean-pooling,
// then a filters-major flatten into one feature vector per trial.
struct BackboneConfig {
  std::size_t temporal_filters = 4;
  std::size_t temporal_kernel = 13;
  std::size_t pool_stride = 25;
  Activation activation = Activation::elu;

  // Throws a config error before any arithmetic if the geometry is invalid
  // for a C x T trial.
  void validate(std::size_t channels, std::size_t samples) const;

  // T' = temporal_filters * (samples / pool_stride).
  std::size_t feature_length(std::size_t samples) const;
};

// Named presets standing in for shallow / compact / deep decoder families.
BackboneConfig backbone_preset(const std::string& name);

struct BackboneParams {
  Param kernels;  // [F x kernel]
  Param spatial;  // [F x C]

  void init(const BackboneConfig& cfg, std::size_t channels, Rng& rng);
  std::vector<Param*> all();
};

// x is [B x C x T]; returns z [B x T'].
Value backbone_forward(Tape& tape, Value x, const BackboneConfig& cfg,
                       BackboneParams& params);

}  // namespace cyc
