#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "cyc/error.hpp"
#include "cyc/rng.hpp"
#include "cyc/train.hpp"

namespace cyc {

namespace {

void require_compatible(const Decoder& model, const TrialSet& ts,
                        const char* which) {
  if (ts.channels() != model.channels || ts.samples() != model.samples ||
      ts.classes != model.cfg.classes) {
    throw Error(Error::Kind::compatibility,
                std::string("fit: ") + which + " set is [" +
                    std::to_string(ts.channels()) + " x " +
                    std::to_string(ts.samples()) + "], " +
                    std::to_string(ts.classes) + " classes; model expects [" +
                    std::to_string(model.channels) + " x " +
                    std::to_string(model.samples) + "], " +
                    std::to_string(model.cfg.classes) + " classes");
  }
}

}  // namespace

std::size_t best_epoch(const std::vector<double>& val_accuracies) {
  if (val_accuracies.empty()) {
    throw Error(Error::Kind::data, "best_epoch: no epochs recorded");
  }
  std::size_t best = 0;
  for (std::size_t e = 1; e < val_accuracies.size(); ++e) {
    if (val_accuracies[e] > val_accuracies[best]) best = e;
  }
  return best + 1;
}

Checkpoint fit(Decoder& model, const TrialSet& trainset, const TrialSet& valset,
               std::size_t epochs, const LossWeights& lw,
               const FitConfig& cfg) {
  if (trainset.size() == 0 || valset.size() == 0) {
    throw Error(Error::Kind::data, "fit: empty training or validation set");
  }
  require_compatible(model, trainset, "training");
  require_compatible(model, valset, "validation");
  if (lw.iue_enabled && model.cfg.variant != Variant::mhsp_iue) {
    throw Error(Error::Kind::config,
                "fit: IUE loss terms need the mhsp_iue variant, model is " +
                    to_string(model.cfg.variant));
  }
  if (cfg.batch_size == 0) {
    throw Error(Error::Kind::config, "fit: batch size must be positive");
  }

  const std::vector<std::size_t> val_idx = all_indices(valset);
  if (epochs == 0) {
    const double acc0 = evaluate(model, valset, val_idx).accuracy;
    return snapshot_params(model.all(), cfg.config_snapshot, 0, acc0);
  }

  Adam opt(model.all(), cfg.adam);
  Rng order_rng(derive_seed(cfg.seed, 0xba7c4));
  std::vector<std::size_t> order(trainset.size());
  std::iota(order.begin(), order.end(), 0);

  Checkpoint best;
  double best_acc = -1.0;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    order_rng.shuffle(order);
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size, ++step) {
      const std::size_t stop = std::min(start + cfg.batch_size, order.size());
      const std::vector<std::size_t> batch_idx(order.begin() + start,
                                               order.begin() + stop);
      Tensor batch = gather_trials(trainset, batch_idx);
      std::vector<int> labels = gather_labels(trainset, batch_idx);

      Tape tape;
      CycleTrace trace = decoder_forward(tape, model, batch);
      Tensor targets;
      const Tensor* targets_ptr = nullptr;
      if (lw.iue_enabled) {
        MctsConfig search = cfg.mcts;
        search.max_depth = model.cfg.mhsp.max_cycles;
        search.rng_seed = derive_seed(cfg.mcts.rng_seed ^ cfg.seed, epoch, step);
        targets = mcts_targets(trace, labels, search, model.cfg.tau_ens);
        targets_ptr = &targets;
      }
      Value loss =
          total_loss(tape, trace, labels, targets_ptr, lw, model.cfg.tau_ens);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
    }

    const double acc = evaluate(model, valset, val_idx).accuracy;
    if (cfg.on_epoch) cfg.on_epoch(epoch, acc);
    if (acc > best_acc) {  // strict: earliest epoch wins ties
      best_acc = acc;
      best = snapshot_params(model.all(), cfg.config_snapshot, epoch, acc);
    }
  }

  restore_params(best, model.all());
  return best;
}

}  // namespace cyc
