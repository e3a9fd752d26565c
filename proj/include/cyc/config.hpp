#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cyc/decoder.hpp"
#include "cyc/train.hpp"

namespace cyc {

// Every knob of a training run, flattened into key=value form. The same
// struct round-trips through the config file, through `CYC_`-prefixed
// environment overrides, and through the config snapshot embedded in
// checkpoints. Unknown keys are rejected so typos fail loudly before any
// training starts.
struct RunConfig {
  // Model.
  Variant variant = Variant::mhsp_iue;
  std::string backbone = "compact";  // shallow | compact | deep
  std::size_t classes = 4;
  // 0 means "take from the dataset"; the training harness records the
  // actual trial geometry here before snapshotting, so evaluation can
  // detect checkpoint/dataset mismatches and cite both sides.
  std::size_t channels = 0;
  std::size_t samples = 0;

  // Hierarchical encoder stack.
  std::vector<std::size_t> windows = {16};
  std::size_t stride = 0;  // 0 -> half the window, minimum 1
  std::size_t patch_dim = 8;
  std::size_t hidden_dim = 32;
  std::size_t max_cycles = 4;
  double rms_eps = 1e-5;

  // Reliability aggregation and halting.
  double tau_ens = 4.0;
  double tau_stop = 0.85;
  std::size_t mcts_simulations = 8;
  double mcts_ucb_c = 1.4142135623730951;
  std::uint64_t mcts_seed = 0;

  // Loss.
  double lambda_halt = 0.05;
  double lambda_iue = 0.5;
  bool iue_squared_error = false;

  // Optimizer and schedule.
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  // Paths.
  std::string dataset;
  std::string out_dir;

  // Throws config errors for out-of-range values; model-geometry checks
  // that need the trial shape happen later in DecoderConfig::validate.
  void validate() const;

  // Deterministic key=value text; parse_run_config(serialize()) == *this.
  std::string serialize() const;

  DecoderConfig decoder_config() const;
  LossWeights loss_weights() const;
  // Fills optimizer, search, batching and seed; config_snapshot and the
  // epoch callback stay empty for the caller to set.
  FitConfig fit_config() const;
};

// Parses key=value lines. '#' starts a comment, blank lines are skipped,
// whitespace around keys and values is trimmed. Unknown or duplicate keys
// and malformed values all raise config errors naming the offender.
RunConfig parse_run_config(const std::string& text);

// Reads the file, parses it, then applies CYC_<KEY> environment overrides
// (for example CYC_EPOCHS=3). An unknown CYC_-prefixed variable is a
// config error, like any other unknown key.
RunConfig load_run_config(const std::string& path);

// Applies CYC_-prefixed environment variables onto an existing config.
void apply_env_overrides(RunConfig& rc);

}  // namespace cyc
