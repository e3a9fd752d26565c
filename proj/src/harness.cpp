#include "cyc/harness.hpp"

#include <string>

#include "cyc/checkpoint.hpp"
#include "cyc/decoder.hpp"
#include "cyc/error.hpp"
#include "cyc/rng.hpp"
#include "cyc/train.hpp"

namespace cyc {

namespace {

void check_dataset_agreement(const TrialSet& ts, const RunConfig& rc) {
  if (rc.channels != 0 && rc.channels != ts.channels())
    throw Error(Error::Kind::compatibility,
                "config expects " + std::to_string(rc.channels) +
                    " channels but the dataset has " +
                    std::to_string(ts.channels()));
  if (rc.samples != 0 && rc.samples != ts.samples())
    throw Error(Error::Kind::compatibility,
                "config expects " + std::to_string(rc.samples) +
                    " samples but the dataset has " +
                    std::to_string(ts.samples()));
  if (rc.classes != static_cast<std::size_t>(ts.classes))
    throw Error(Error::Kind::compatibility,
                "config expects " + std::to_string(rc.classes) +
                    " classes but the dataset has " +
                    std::to_string(ts.classes));
}

}  // namespace

RunReport run_loso(const TrialSet& ts, const RunConfig& rc,
                   const std::string& out_dir,
                   const std::function<void(const FoldResult&)>& on_fold) {
  rc.validate();
  ts.validate();
  check_dataset_agreement(ts, rc);

  // The snapshot embedded in every checkpoint records the trial geometry
  // the model was built for, so later evaluation can diagnose mismatches.
  // Paths are machine-local run layout, not hyperparameters; dropping them
  // keeps checkpoints byte-identical wherever the run writes its outputs.
  RunConfig snap = rc;
  snap.channels = ts.channels();
  snap.samples = ts.samples();
  snap.dataset.clear();
  snap.out_dir.clear();
  const std::string snapshot = snap.serialize();

  const SplitPlan plan = loso_splits(ts, rc.seed, rc.val_fraction);
  RunReport report;
  for (std::size_t i = 0; i < plan.folds.size(); ++i) {
    const Fold& fold = plan.folds[i];

    Decoder dec;
    dec.cfg = rc.decoder_config();
    Rng init_rng(derive_seed(rc.seed, 0xf01d, i));
    dec.init(ts.channels(), ts.samples(), init_rng);

    FitConfig fc = rc.fit_config();
    fc.seed = derive_seed(rc.seed, 0x5eed, i);
    fc.config_snapshot = snapshot;

    Checkpoint best = fit(dec, subset(ts, fold.train_indices),
                          subset(ts, fold.val_indices), rc.epochs,
                          rc.loss_weights(), fc);
    const EvalResult er = evaluate(dec, ts, fold.test_indices);

    FoldResult fr;
    fr.subject = fold.test_subject;
    fr.best_epoch = best.epoch;
    fr.val_accuracy = best.val_accuracy;
    fr.test_accuracy = er.accuracy;
    fr.mean_cycles = er.mean_cycles;
    if (!out_dir.empty()) {
      fr.checkpoint_file =
          "checkpoint_s" + std::to_string(fold.test_subject) + ".cyc";
      save_checkpoint(best, out_dir + "/" + fr.checkpoint_file);
    }
    if (on_fold) on_fold(fr);
    report.folds.push_back(std::move(fr));
  }
  return report;
}

}  // namespace cyc
