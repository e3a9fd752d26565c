#include "cyc/train.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cyc/error.hpp"
#include "cyc/iue.hpp"
#include "cyc/ops.hpp"

namespace cyc {

Value cycle_attention(Tape& tape, const CycleTrace& trace, double tau_ens) {
  if (trace.executed == 0 || trace.outputs.empty()) {
    throw Error(Error::Kind::contract, "cycle_attention: empty trace");
  }
  if (trace.reliabilities.size() != trace.executed) {
    throw Error(Error::Kind::contract,
                "cycle_attention: need one reliability per executed cycle, got " +
                    std::to_string(trace.reliabilities.size()) + " for " +
                    std::to_string(trace.executed) + " cycles");
  }
  (void)tape;
  Value r = stack_cols(trace.reliabilities);  // [B x L']
  return softmax_temp(r, tau_ens);
}

Value halting_regularizer(Tape& tape, Value alpha) {
  if (!alpha.valid()) {
    throw Error(Error::Kind::contract, "halting_regularizer: invalid alpha");
  }
  const Tensor& a = alpha.val();
  if (a.rank() != 2) {
    throw Error(Error::Kind::shape,
                "halting_regularizer: alpha must be [B x L'], got rank " +
                    std::to_string(a.rank()));
  }
  const std::size_t cycles = a.extent(1);
  if (cycles == 1) {
    return tape.constant(Tensor::scalar(0.0));
  }
  // Normalized cycle cost (c-1)/(L'-1) for 1-based cycle c.
  Tensor cost = Tensor::zeros({cycles});
  for (std::size_t c = 0; c < cycles; ++c) {
    cost[c] = static_cast<double>(c) / static_cast<double>(cycles - 1);
  }
  Value weighted = mul_rowvec(alpha, tape.constant(cost));
  return mean_all(row_sum(weighted));
}

Value iue_supervision_loss(Tape& tape, const CycleTrace& trace,
                           const Tensor& targets, bool squared_error) {
  const std::size_t cycles = trace.executed;
  if (cycles == 0) {
    throw Error(Error::Kind::contract, "iue_supervision_loss: empty trace");
  }
  if (trace.reliabilities.size() != cycles) {
    throw Error(Error::Kind::contract,
                "iue_supervision_loss: need one reliability per executed cycle");
  }
  if (targets.rank() != 1 || targets.extent(0) != cycles) {
    throw Error(Error::Kind::shape,
                "iue_supervision_loss: targets must be [" +
                    std::to_string(cycles) + "], got " + shape_str(targets.shape()));
  }
  if (cycles == 1) {
    return tape.constant(Tensor::scalar(0.0));
  }
  // Final cycle excluded: halting there is forced, so its target carries no
  // signal about the continue/halt trade-off.
  Value sum;
  for (std::size_t c = 0; c + 1 < cycles; ++c) {
    Value rbar = mean_all(trace.reliabilities[c]);
    Value term;
    if (squared_error) {
      Value diff = affine_scalar(rbar, 1.0, -targets[c]);
      term = mul(diff, diff);
    } else {
      term = bce(rbar, targets[c]);
    }
    sum = sum.valid() ? add(sum, term) : term;
  }
  return affine_scalar(sum, 1.0 / static_cast<double>(cycles - 1), 0.0);
}

Value total_loss(Tape& tape, CycleTrace& trace, const std::vector<int>& labels,
                 const Tensor* targets, const LossWeights& lw, double tau_ens) {
  if (trace.outputs.empty() || trace.executed == 0) {
    throw Error(Error::Kind::contract, "total_loss: empty trace");
  }
  if (!lw.iue_enabled) {
    if (targets != nullptr) {
      throw Error(Error::Kind::contract,
                  "total_loss: targets supplied with the uncertainty head "
                  "disabled");
    }
    trace.final_logits = trace.outputs.back().logits;
    return cross_entropy(trace.final_logits, labels);
  }
  if (targets == nullptr) {
    throw Error(Error::Kind::contract,
                "total_loss: uncertainty head enabled but no targets given");
  }
  trace.final_logits = aggregate(tape, trace, tau_ens);
  Value loss = cross_entropy(trace.final_logits, labels);
  if (lw.lambda_halt != 0.0) {
    Value alpha = cycle_attention(tape, trace, tau_ens);
    loss = add(loss, affine_scalar(halting_regularizer(tape, alpha),
                                   lw.lambda_halt, 0.0));
  }
  if (lw.lambda_iue != 0.0) {
    Value sup =
        iue_supervision_loss(tape, trace, *targets, lw.iue_squared_error);
    loss = add(loss, affine_scalar(sup, lw.lambda_iue, 0.0));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

Adam::Adam(std::vector<Param*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.learning_rate <= 0.0) {
    throw Error(Error::Kind::config, "adam: learning rate must be positive");
  }
  if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 ||
      cfg_.beta2 >= 1.0) {
    throw Error(Error::Kind::config, "adam: betas must lie in [0, 1)");
  }
  if (cfg_.eps <= 0.0) {
    throw Error(Error::Kind::config, "adam: eps must be positive");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Param* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) {
    p->zero_grad();
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p.value[j] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

}  // namespace cyc
