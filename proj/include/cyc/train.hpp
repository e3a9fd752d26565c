#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cyc/checkpoint.hpp"
#include "cyc/data.hpp"
#include "cyc/decoder.hpp"
#include "cyc/iue.hpp"
#include "cyc/mhsp.hpp"
#include "cyc/tape.hpp"
#include "cyc/tensor.hpp"

namespace cyc {

// Composite objective weights. With the uncertainty head disabled the
// halting and supervision terms contribute exactly zero (they are never
// built), leaving plain cross-entropy.
struct LossWeights {
  double lambda_halt = 0.05;
  double lambda_iue = 0.5;
  bool iue_enabled = false;
  bool iue_squared_error = false;  // alternative to the default BCE
};

// Attention over cycles: softmax (temperature tau_ens) of the per-sample
// reliabilities, one row per sample, one column per executed cycle.
Value cycle_attention(Tape& tape, const CycleTrace& trace, double tau_ens);

// Mean over the batch of the alpha-weighted normalized cycle index
// sum_c alpha_c * (c-1)/(L'-1); zero for a single cycle; lies in [0,1].
Value halting_regularizer(Tape& tape, Value alpha);

// Supervision of the batch-mean reliability per cycle against the search
// targets, averaged over cycles 1..L'-1 (the final cycle is excluded);
// zero when only one cycle ran. Targets are constants.
Value iue_supervision_loss(Tape& tape, const CycleTrace& trace,
                           const Tensor& targets, bool squared_error = false);

// Cross-entropy of the last cycle's logits when the head is disabled;
// otherwise cross-entropy of the reliability-weighted aggregate plus the
// weighted halting and supervision terms. Fills trace.final_logits.
// targets must be present exactly when lw.iue_enabled.
Value total_loss(Tape& tape, CycleTrace& trace, const std::vector<int>& labels,
                 const Tensor* targets, const LossWeights& lw, double tau_ens);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer with bias correction; state is per-parameter
// first/second moment tensors plus the step counter.
class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg);

  void zero_grad();
  // Applies one update from the gradients currently stored in the params.
  void step();
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct FitConfig {
  std::size_t batch_size = 16;
  AdamConfig adam;
  MctsConfig mcts;            // search settings for reliability targets
  std::uint64_t seed = 0;     // batch shuffling / per-batch search seeds
  std::string config_snapshot;  // stored verbatim in checkpoints
  std::function<void(std::size_t epoch, double val_accuracy)> on_epoch;
};

// 1-based index of the highest validation accuracy, earliest winning ties.
std::size_t best_epoch(const std::vector<double>& val_accuracies);

// Runs `epochs` epochs of minibatch training; after each epoch evaluates
// validation accuracy with halting active as at inference. Returns the
// best-validation checkpoint (earliest tie) and leaves the model restored
// to it. epochs == 0 returns the initialization snapshot.
Checkpoint fit(Decoder& model, const TrialSet& trainset, const TrialSet& valset,
               std::size_t epochs, const LossWeights& lw, const FitConfig& cfg);

}  // namespace cyc
