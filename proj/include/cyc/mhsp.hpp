#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cyc/ops.hpp"
#include "cyc/rng.hpp"
#include "cyc/tape.hpp"

namespace cyc {

// Gated recurrent cell parameters. Input-to-hidden matrices are stored
// [hidden x input], recurrent ones [hidden x hidden]; forward passes work on
// row-vector batches, so the matrices are transposed once per tape.
struct GruParams {
  Param update_in, update_rec, update_bias;
  Param reset_in, reset_rec, reset_bias;
  Param cand_in, cand_rec, cand_bias;

  void init(const std::string& prefix, std::size_t input_dim,
            std::size_t hidden_dim, Rng& rng);
  std::vector<Param*> all();
  std::size_t hidden_dim() const { return update_rec.value.extent(0); }
};

// Low-level encoder: GRU over the patch sequence plus an RMS-normalized tail.
struct LLEParams {
  GruParams gru;
  Param gain, bias;  // gamma, beta
  double eps = 1e-5;

  void init(std::size_t patch_dim, std::size_t hidden_dim, Rng& rng);
  std::vector<Param*> all();
};

// Top-down gate: previous high-level state -> per-sample multiplicative
// patch gate in (0,1)^d, shared by every patch of the sample.
struct GateParams {
  Param weight;  // [d x d_h]
  Param bias;    // [d]

  void init(std::size_t patch_dim, std::size_t hidden_dim, Rng& rng);
  std::vector<Param*> all();
};

// Taped GRU cell with pre-transposed weights; build once per forward pass.
class GruCell {
 public:
  GruCell(Tape& tape, GruParams& p);
  // x [B x I], h [B x H] -> [B x H]
  Value step(Value x, Value h) const;

 private:
  Value wz_t_, uz_t_, bz_, wr_t_, ur_t_, br_, wh_t_, uh_t_, bh_;
};

struct MhspConfig {
  std::vector<std::size_t> windows = {16};  // patch window sizes w
  std::size_t stride = 0;                   // 0 -> w/2 per window, min 1
  std::size_t patch_dim = 8;                // d
  std::size_t hidden_dim = 32;              // d_h
  std::size_t max_cycles = 4;               // L_max
  double rms_eps = 1e-5;

  std::size_t stride_for(std::size_t window) const;
  // Throws config errors when any window/stride/pool combination is invalid
  // for the given feature length T'.
  void validate(std::size_t feature_length) const;
};

// Per-cycle product: class logits and the internal state g^(c) (the
// high-level hidden state).
struct CycleOutput {
  Value logits;             // [B x K]
  Value state;              // [B x d_h]
  std::size_t cycle_index;  // 1-based
};

// One forward pass across reasoning cycles. Reliabilities are appended by
// the uncertainty head when it is attached; final_logits is filled by
// aggregation (or points at the last cycle's logits for plain variants).
struct CycleTrace {
  std::vector<CycleOutput> outputs;
  std::vector<Value> reliabilities;  // each [B], strictly inside (0,1)
  bool halted_early = false;
  Value final_logits;
  std::size_t executed = 0;  // L'
};

struct MhspModel {
  MhspConfig cfg;
  std::size_t classes = 4;
  LLEParams lle;
  GruParams hle;
  GateParams gate;
  Param head_weight;  // [d_h x K]
  Param head_bias;    // [K]

  void init(Rng& rng);
  std::vector<Param*> all();
};

// Observer invoked after each cycle; may append reliabilities to the trace.
// Returning true halts the loop (cycle budget permitting, never before the
// observer has seen the cycle).
using Halter = std::function<bool(Tape&, CycleTrace&, std::size_t cycle)>;

// p unchanged on cycle 1 (pass an invalid Value for h_prev); otherwise each
// patch is multiplied by sigmoid(W_g h_prev + b_g).
Value top_down_gate(Tape& tape, Value p, Value h_prev, GateParams& gp);

// Algorithm: GRU over the n patches with zero initial state, then the
// RMS-normalized affine tail.
Value lle_forward(Tape& tape, Value patches, LLEParams& params);

// One high-level GRU step: the low-level summary is the input, the carried
// hidden state the recurrent state.
Value hle_forward(Tape& tape, Value h_lle, Value h_carry, GruParams& params);

// Runs up to max_cycles LLE->HLE cycles over feature vector z [B x T'],
// emitting logits and state per cycle. The halter may cut the loop short.
CycleTrace run_cycles(Tape& tape, Value z, MhspModel& model,
                      std::size_t max_cycles, const Halter& halter = nullptr);

}  // namespace cyc
