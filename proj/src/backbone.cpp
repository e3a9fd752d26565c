#include "cyc/backbone.hpp"

#include <cmath>

#include "cyc/error.hpp"

namespace cyc {

Activation activation_from_string(const std::string& name) {
  if (name == "elu") return Activation::elu;
  if (name == "square_log") return Activation::square_log;
  if (name == "linear") return Activation::linear;
  throw Error(Error::Kind::config,
              "unknown activation '" + name + "' (elu|square_log|linear)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::elu: return "elu";
    case Activation::square_log: return "square_log";
    case Activation::linear: return "linear";
  }
  return "?";
}

void BackboneConfig::validate(std::size_t channels, std::size_t samples) const {
  if (channels < 1 || samples < 1)
    throw Error(Error::Kind::config, "backbone: empty trial geometry");
  if (temporal_filters < 1)
    throw Error(Error::Kind::config, "backbone: temporal_filters must be >= 1");
  if (temporal_kernel < 1 || temporal_kernel % 2 == 0)
    throw Error(Error::Kind::config,
                "backbone: temporal_kernel " + std::to_string(temporal_kernel) +
                    " must be odd and positive");
  if (temporal_kernel > samples)
    throw Error(Error::Kind::config,
                "backbone: temporal_kernel " + std::to_string(temporal_kernel) +
                    " exceeds trial length " + std::to_string(samples));
  if (pool_stride < 1 || samples % pool_stride != 0)
    throw Error(Error::Kind::config,
                "backbone: trial length " + std::to_string(samples) +
                    " not divisible by pool_stride " +
                    std::to_string(pool_stride));
}

std::size_t BackboneConfig::feature_length(std::size_t samples) const {
  return temporal_filters * (samples / pool_stride);
}

BackboneConfig backbone_preset(const std::string& name) {
  BackboneConfig cfg;
  if (name == "shallow") {
    cfg.temporal_filters = 8;
    cfg.temporal_kernel = 25;
    cfg.pool_stride = 15;
    cfg.activation = Activation::square_log;
  } else if (name == "compact") {
    cfg.temporal_filters = 4;
    cfg.temporal_kernel = 13;
    cfg.pool_stride = 25;
    cfg.activation = Activation::elu;
  } else if (name == "deep") {
    cfg.temporal_filters = 16;
    cfg.temporal_kernel = 11;
    cfg.pool_stride = 10;
    cfg.activation = Activation::elu;
  } else {
    throw Error(Error::Kind::config,
                "unknown backbone preset '" + name + "' (shallow|compact|deep)");
  }
  return cfg;
}

void BackboneParams::init(const BackboneConfig& cfg, std::size_t channels,
                          Rng& rng) {
  kernels = Param("backbone.kernels",
                  Tensor({cfg.temporal_filters, cfg.temporal_kernel}));
  spatial = Param("backbone.spatial", Tensor({cfg.temporal_filters, channels}));
  double ak = 1.0 / std::sqrt(static_cast<double>(cfg.temporal_kernel));
  for (std::size_t i = 0; i < kernels.value.size(); ++i)
    kernels.value[i] = rng.uniform(-ak, ak);
  double as = 1.0 / std::sqrt(static_cast<double>(channels));
  for (std::size_t i = 0; i < spatial.value.size(); ++i)
    spatial.value[i] = rng.uniform(-as, as);
}

std::vector<Param*> BackboneParams::all() { return {&kernels, &spatial}; }

Value backbone_forward(Tape& tape, Value x, const BackboneConfig& cfg,
                       BackboneParams& params) {
  const Tensor& xv = x.val();
  if (xv.rank() != 3)
    throw Error(Error::Kind::shape,
                "backbone_forward: input must be B x C x T, got " +
                    shape_str(xv.shape()));
  std::size_t b = xv.extent(0), c = xv.extent(1), t = xv.extent(2);
  cfg.validate(c, t);

  Value u = conv_temporal(x, tape.leaf(params.kernels));
  Value v = spatial_collapse(u, tape.leaf(params.spatial));
  switch (cfg.activation) {
    case Activation::elu: v = elu(v); break;
    case Activation::square_log: v = square_log(v); break;
    case Activation::linear: break;
  }
  Value pooled = mean_pool_time(v, cfg.pool_stride);
  return reshape(pooled, {b, cfg.feature_length(t)});
}

}  // namespace cyc
