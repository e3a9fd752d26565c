#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cyc/tensor.hpp"

namespace cyc {

// In-memory motor-imagery trial collection. Trials are stored as doubles;
// the on-disk format keeps 32-bit floats, so sets meant for bit-exact round
// trips must hold float-representable values (synth_generate guarantees it).
struct TrialSet {
  Tensor trials;                // [N x C x T]
  std::vector<int> labels;      // N values in [0, classes)
  std::vector<int> subjects;    // N nonnegative subject ids
  std::size_t classes = 0;      // K
  std::size_t sample_rate = 0;  // Hz

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const;
  std::size_t samples() const;

  std::vector<int> distinct_subjects() const;  // ascending
  // Per-subject label histogram: (subject id, count per class), subjects
  // ascending.
  std::vector<std::pair<int, std::vector<std::size_t>>> label_histogram() const;

  // Shape/range consistency plus "every class present overall".
  void validate() const;
};

// Trial-file round trip (magic MITR, little-endian, trailing checksum).
void save_trialset(const TrialSet& ts, const std::string& path);
TrialSet load_trialset(const std::string& path);

// Cue-aligned imagery window: seconds*rate samples starting at cue_sample.
Tensor extract_mi_window(const Tensor& trial, std::size_t cue_sample,
                         std::size_t sample_rate, double seconds);

struct Fold {
  int test_subject = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  std::vector<std::size_t> test_indices;
};

struct SplitPlan {
  std::vector<Fold> folds;
};

// Leave-one-subject-out plan: one fold per subject; the held-in pool is cut
// per class into train/validation with a seeded shuffle (pooled across the
// remaining subjects).
SplitPlan loso_splits(const TrialSet& ts, std::uint64_t seed = 0,
                      double val_fraction = 0.2);

// Synthetic 4-class generator: class k is a per-subject-gain sinusoid at
// class_freqs[k] on channels c with c % K == k, plus white noise everywhere.
struct SynthConfig {
  std::size_t n_subjects = 9;
  std::size_t trials_per_class = 72;  // per subject
  std::size_t C = 22;
  std::size_t T = 750;
  std::size_t sample_rate = 250;  // Hz
  std::vector<double> class_freqs = {6.0, 10.0, 14.0, 18.0};  // Hz, K entries
  double subject_gain_jitter = 0.1;  // std of the per-subject gain around 1
  double noise_std = 0.5;
  std::uint64_t rng_seed = 7;

  void validate() const;
};

TrialSet synth_generate(const SynthConfig& cfg);

}  // namespace cyc
