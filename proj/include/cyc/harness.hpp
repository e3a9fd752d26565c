#pragma once

#include <functional>
#include <string>

#include "cyc/config.hpp"
#include "cyc/data.hpp"
#include "cyc/report.hpp"

namespace cyc {

// Runs the full leave-one-subject-out protocol: per fold, train on the
// remaining subjects, keep the best-validation checkpoint, evaluate it on
// the held-out subject with batch-size-1 halting-active inference.
//
// When out_dir is non-empty the per-fold checkpoints are written there as
// checkpoint_s<subject>.cyc (the directory must already exist). Folds run
// sequentially; all per-fold seeds derive from rc.seed, so a rerun with
// the same config and dataset reproduces every file byte for byte.
RunReport run_loso(
    const TrialSet& ts, const RunConfig& rc, const std::string& out_dir,
    const std::function<void(const FoldResult&)>& on_fold = nullptr);

}  // namespace cyc
