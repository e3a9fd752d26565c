#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cyc {

struct AccuracySummary {
  double mean = 0.0;
  double std_dev = 0.0;
};

// Arithmetic mean and, by default, population (N-divisor) standard
// deviation — the convention that matches the reference results table.
// sample_std switches to the N-1 divisor. Empty input is a data error.
AccuracySummary summarize_accuracy(const std::vector<double>& per_subject,
                                   bool sample_std = false);

// Outcome of one leave-one-subject-out fold.
struct FoldResult {
  int subject = 0;
  std::size_t best_epoch = 0;  // 1-based; 0 means the untrained snapshot
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double mean_cycles = 0.0;
  std::string checkpoint_file;  // relative to the output directory
};

struct RunReport {
  std::vector<FoldResult> folds;
  bool sample_std = false;

  AccuracySummary accuracy() const;  // over fold test accuracies
  double mean_cycles() const;        // averaged over folds
};

// Line-oriented key=value text. Fixed six-decimal formatting and no
// timestamps, so reruns with the same seed produce byte-identical files.
std::string results_text(const RunReport& report);

// Per-fold CSV table with a header row; summary lines live in the
// key=value file instead.
std::string results_csv(const RunReport& report);

// Human-readable table with the mean/std footer, for terminal output.
std::string results_table(const RunReport& report);

// Inverse of results_text; malformed input is a format error.
RunReport parse_results_text(const std::string& text);

}  // namespace cyc
