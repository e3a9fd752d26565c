#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cyc/tape.hpp"
#include "cyc/tensor.hpp"

namespace cyc {

// Trained-model snapshot: named parameter tensors plus the run context
// needed to rebuild and audit the model.
struct Checkpoint {
  std::uint32_t format_version = 1;
  std::string config;     // serialized run configuration snapshot
  std::size_t epoch = 0;  // 1-based training epoch; 0 = initialization
  double val_accuracy = 0.0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

// File format CYC1, little-endian, trailing additive byte checksum.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Capture / restore parameter tensors by name.
Checkpoint snapshot_params(const std::vector<Param*>& params,
                           const std::string& config, std::size_t epoch,
                           double val_accuracy);
// Every param must find a tensor of identical name and shape; anything else
// is a compatibility error naming the offender.
void restore_params(const Checkpoint& ckpt, const std::vector<Param*>& params);

}  // namespace cyc
