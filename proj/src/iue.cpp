#include "cyc/iue.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cyc/error.hpp"
#include "cyc/ops.hpp"

namespace cyc {

void ReliabilityHead::init(std::size_t state_dim, std::size_t classes,
                           Rng& rng) {
  std::size_t in = state_dim + classes;
  weight = Param("iue.weight", Tensor({1, in}));
  double a = 1.0 / std::sqrt(static_cast<double>(in));
  for (std::size_t i = 0; i < in; ++i) weight.value[i] = rng.uniform(-a, a);
  bias = Param("iue.bias", Tensor::zeros({1}));
}

std::vector<Param*> ReliabilityHead::all() { return {&weight, &bias}; }

void MctsConfig::validate() const {
  if (n_simulations < 1)
    throw Error(Error::Kind::config, "mcts: n_simulations must be >= 1");
  if (max_depth < 1)
    throw Error(Error::Kind::config, "mcts: max_depth must be >= 1");
  if (ucb_c < 0.0)
    throw Error(Error::Kind::config, "mcts: ucb_c must be >= 0");
}

Value reliability(Tape& tape, Value g, Value logits, ReliabilityHead& head) {
  Value cat = concat_cols(g, logits);
  if (cat.val().extent(1) != head.weight.value.extent(1))
    throw Error(Error::Kind::shape,
                "reliability: head expects input width " +
                    std::to_string(head.weight.value.extent(1)) + ", got " +
                    std::to_string(cat.val().extent(1)));
  Value pre = add_rowvec(matmul(cat, transpose(tape.leaf(head.weight))),
                         tape.leaf(head.bias));
  return reshape(sigmoid(pre), {cat.val().extent(0)});
}

Value aggregate(Tape& tape, const CycleTrace& trace, double tau_ens) {
  (void)tape;
  if (trace.outputs.empty())
    throw Error(Error::Kind::contract, "aggregate: empty trace");
  if (trace.reliabilities.size() != trace.outputs.size())
    throw Error(Error::Kind::contract,
                "aggregate: " + std::to_string(trace.reliabilities.size()) +
                    " reliabilities for " +
                    std::to_string(trace.outputs.size()) + " cycles");
  Value r = stack_cols(trace.reliabilities);        // [B x L']
  Value alpha = softmax_temp(r, tau_ens);           // rows sum to 1
  Value out;
  for (std::size_t c = 0; c < trace.outputs.size(); ++c) {
    Value term = scale_rows(trace.outputs[c].logits, select_col(alpha, c));
    out = out.valid() ? add(out, term) : term;
  }
  return out;
}

bool should_halt(const Tensor& r_batch, std::size_t c, double tau_stop) {
  if (c < 2) return false;
  double sum = 0.0;
  for (std::size_t i = 0; i < r_batch.size(); ++i) sum += r_batch[i];
  return sum / static_cast<double>(r_batch.size()) > tau_stop;
}

Tensor aggregate_prefix_values(const CycleTrace& trace, std::size_t depth,
                               double tau_ens) {
  if (depth < 1 || depth > trace.outputs.size())
    throw Error(Error::Kind::bounds,
                "aggregate_prefix_values: depth " + std::to_string(depth) +
                    " outside [1," + std::to_string(trace.outputs.size()) + "]");
  if (trace.reliabilities.size() < depth)
    throw Error(Error::Kind::contract,
                "aggregate_prefix_values: missing reliabilities");
  std::size_t b = trace.outputs[0].logits.val().extent(0);
  std::size_t k = trace.outputs[0].logits.val().extent(1);
  Tensor r({b, depth});
  for (std::size_t c = 0; c < depth; ++c) {
    const Tensor& rc = trace.reliabilities[c].val();
    for (std::size_t i = 0; i < b; ++i) r(i, c) = rc[i];
  }
  Tensor alpha = fn::softmax_temp(r, tau_ens);
  Tensor out({b, k});
  for (std::size_t c = 0; c < depth; ++c) {
    const Tensor& lc = trace.outputs[c].logits.val();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < k; ++j) out(i, j) += alpha(i, c) * lc(i, j);
  }
  return out;
}

double rollout_return(const CycleTrace& trace, const std::vector<int>& labels,
                      std::size_t halt_depth, double tau_ens) {
  Tensor agg = aggregate_prefix_values(trace, halt_depth, tau_ens);
  std::size_t b = agg.extent(0), k = agg.extent(1);
  if (labels.size() != b)
    throw Error(Error::Kind::shape,
                "rollout_return: " + std::to_string(labels.size()) +
                    " labels for batch " + std::to_string(b));
  Tensor probs = fn::softmax_rows(agg);
  double sum = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw Error(Error::Kind::label,
                  "rollout_return: label " + std::to_string(y) +
                      " at index " + std::to_string(i) + " outside [0," +
                      std::to_string(k) + ")");
    sum += probs(i, static_cast<std::size_t>(y));
  }
  return sum / static_cast<double>(b);
}

Tensor mcts_targets(const CycleTrace& trace, const std::vector<int>& labels,
                    const MctsConfig& cfg, double tau_ens) {
  cfg.validate();
  std::size_t depth_count = trace.executed ? trace.executed
                                           : trace.outputs.size();
  if (depth_count < 1)
    throw Error(Error::Kind::contract, "mcts_targets: empty trace");

  // The return for halting at each depth is deterministic; memoize it.
  std::vector<double> halt_return(depth_count + 1, -1.0);
  auto ret = [&](std::size_t depth) {
    if (halt_return[depth] < 0.0)
      halt_return[depth] = rollout_return(trace, labels, depth, tau_ens);
    return halt_return[depth];
  };

  // Per-depth node statistics over actions {0 = halt, 1 = continue}.
  struct NodeStats {
    std::size_t visits[2] = {0, 0};
    double value_sum[2] = {0.0, 0.0};
    std::size_t total() const { return visits[0] + visits[1]; }
  };
  std::vector<NodeStats> tree(depth_count + 1);
  std::vector<double> depth_sum(depth_count + 1, 0.0);
  std::vector<std::size_t> depth_cnt(depth_count + 1, 0);

  Rng rng(cfg.rng_seed);
  for (std::size_t sim = 0; sim < cfg.n_simulations; ++sim) {
    // Selection inside the visited tree, then a fair-coin rollout.
    std::vector<std::size_t> path_actions;  // action taken at depth i+1
    std::size_t depth = 1;
    std::size_t halt_depth = 0;
    while (true) {
      bool can_continue = depth < depth_count;
      std::size_t action;
      if (tree[depth].total() > 0) {
        if (!can_continue) {
          action = 0;
        } else if (tree[depth].visits[0] == 0) {
          action = 0;  // untried actions first, halt before continue
        } else if (tree[depth].visits[1] == 0) {
          action = 1;
        } else {
          double best = -std::numeric_limits<double>::infinity();
          action = 0;
          double log_n = std::log(static_cast<double>(tree[depth].total()));
          for (std::size_t a = 0; a < 2; ++a) {
            double n = static_cast<double>(tree[depth].visits[a]);
            double ucb = tree[depth].value_sum[a] / n +
                         cfg.ucb_c * std::sqrt(log_n / n);
            if (ucb > best) {
              best = ucb;
              action = a;
            }
          }
        }
      } else {
        // Below the frontier: unbiased coin, halt forced at the last depth.
        action = can_continue && rng.uniform() < 0.5 ? 1 : 0;
      }
      path_actions.push_back(action);
      if (action == 0) {
        halt_depth = depth;
        break;
      }
      ++depth;
    }

    double reward = ret(halt_depth);
    for (std::size_t d = 1; d <= halt_depth; ++d) {
      std::size_t a = path_actions[d - 1];
      tree[d].visits[a] += 1;
      tree[d].value_sum[a] += reward;
      depth_sum[d] += reward;
      depth_cnt[d] += 1;
    }
  }

  Tensor targets({depth_count});
  for (std::size_t d = 1; d <= depth_count; ++d)
    targets[d - 1] = depth_cnt[d]
                         ? depth_sum[d] / static_cast<double>(depth_cnt[d])
                         : ret(d);
  return targets;
}

}  // namespace cyc
