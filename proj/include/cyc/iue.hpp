#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "cyc/mhsp.hpp"
#include "cyc/rng.hpp"
#include "cyc/tape.hpp"

namespace cyc {

// Scalar reliability head over the concatenated cycle state and logits.
struct ReliabilityHead {
  Param weight;  // [1 x (U + K)]
  Param bias;    // [1]

  void init(std::size_t state_dim, std::size_t classes, Rng& rng);
  std::vector<Param*> all();
};

struct MctsConfig {
  std::size_t n_simulations = 8;
  std::size_t max_depth = 4;  // == cycle budget
  double ucb_c = std::sqrt(2.0);
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// r = sigmoid(W [g; logits] + b), one score per sample, strictly in (0,1).
Value reliability(Tape& tape, Value g, Value logits, ReliabilityHead& head);

// Attention over cycles from the per-sample reliabilities, then the
// reliability-weighted sum of cycle logits. Convex combination per
// coordinate. Requires one reliability per executed cycle.
Value aggregate(Tape& tape, const CycleTrace& trace, double tau_ens);

// Halting rule: true iff c >= 2 and mean(r_batch) strictly exceeds tau_stop.
bool should_halt(const Tensor& r_batch, std::size_t c, double tau_stop);

// ---- gradient-free mirror used by the search (and by evaluation) ----

// aggregate() over the first `depth` cycles, computed on the recorded
// tensor values without touching the tape.
Tensor aggregate_prefix_values(const CycleTrace& trace, std::size_t depth,
                               double tau_ens);

// Batch-mean true-class softmax probability of the aggregate up to
// halt_depth; the normalized return earned by halting there.
double rollout_return(const CycleTrace& trace, const std::vector<int>& labels,
                      std::size_t halt_depth, double tau_ens);

// Shallow search over halt/continue paths: UCB1 selection inside the
// visited tree, fair-coin rollout below it, forced halt at the last depth.
// target[c] = mean return over simulations whose path passes through depth
// c; depths no simulation reached fall back to the immediate-halt return.
// Bit-identical results for identical seeds.
Tensor mcts_targets(const CycleTrace& trace, const std::vector<int>& labels,
                    const MctsConfig& cfg, double tau_ens);

}  // namespace cyc
