#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cyc/tape.hpp"

namespace cyc {

// Per-parameter outcome of a finite-difference comparison.
struct GradCheckEntry {
  std::string name;
  std::size_t count = 0;       // number of coordinates checked
  double max_rel_error = 0.0;  // worst coordinate, relative
  std::size_t worst_index = 0;
  double analytic = 0.0;  // gradient values at the worst coordinate
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::string worst_param;
  bool passed = false;
  double step = 0.0;
  double tol = 0.0;
  double abs_floor = 0.0;

  std::string to_string() const;
};

// Builds the scalar loss graph on the given tape. Called repeatedly with the
// same parameter objects; must be deterministic (fix any sampling outside).
using LossBuilder = std::function<Value(Tape&)>;

// Central finite differences (f(t+h) - f(t-h)) / 2h per coordinate against
// the tape's analytic gradient. Relative error uses max(|a|, |n|, abs_floor)
// as the denominator. Two identical forward passes are required up front;
// any disagreement raises a determinism error.
GradCheckReport grad_check(const LossBuilder& f,
                           const std::vector<Param*>& params,
                           double h = 1e-5, double tol = 1e-4,
                           double abs_floor = 1e-6);

}  // namespace cyc
