#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cyc/backbone.hpp"
#include "cyc/data.hpp"
#include "cyc/iue.hpp"
#include "cyc/mhsp.hpp"
#include "cyc/rng.hpp"
#include "cyc/tape.hpp"

namespace cyc {

// baseline: backbone + linear head, one pseudo-cycle, no recurrence.
// mhsp:     cyclic encoder stack, plain cross-entropy on the final cycle.
// mhsp_iue: cyclic stack + reliability head, weighted aggregation + halting.
enum class Variant { baseline, mhsp, mhsp_iue };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);

struct DecoderConfig {
  BackboneConfig backbone;
  MhspConfig mhsp;
  Variant variant = Variant::mhsp_iue;
  std::size_t classes = 4;
  double tau_ens = 1.0;
  double tau_stop = 0.9;

  void validate(std::size_t channels, std::size_t samples) const;
};

struct Decoder {
  DecoderConfig cfg;
  std::size_t channels = 0;
  std::size_t samples = 0;
  BackboneParams backbone;
  MhspModel mhsp;           // mhsp / mhsp_iue variants
  ReliabilityHead relhead;  // mhsp_iue variant
  Param base_weight;        // baseline head [T' x K]
  Param base_bias;          // baseline head [K]

  void init(std::size_t channels_in, std::size_t samples_in, Rng& rng);
  // Parameters of the active variant, stable order.
  std::vector<Param*> all();
};

// One forward pass over a [B x C x T] batch. The IUE variant scores every
// cycle with the reliability head, may halt early on the batch-mean rule,
// and aggregates; other variants run their full budget and use the last
// cycle's logits.
CycleTrace decoder_forward(Tape& tape, Decoder& dec, const Tensor& batch);

struct EvalResult {
  double accuracy = 0.0;
  double mean_cycles = 0.0;  // realized L' per trial, averaged
  std::vector<int> predictions;
};

// Batch-size-1 inference over the selected trials, halting active.
EvalResult evaluate(Decoder& dec, const TrialSet& ts,
                    const std::vector<std::size_t>& indices);

// Index helpers shared by training and the CLI.
Tensor gather_trials(const TrialSet& ts, const std::vector<std::size_t>& idx);
std::vector<int> gather_labels(const TrialSet& ts,
                               const std::vector<std::size_t>& idx);
TrialSet subset(const TrialSet& ts, const std::vector<std::size_t>& idx);
std::vector<std::size_t> all_indices(const TrialSet& ts);

}  // namespace cyc
