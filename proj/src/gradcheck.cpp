#include "cyc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cyc/error.hpp"

namespace cyc {

namespace {

double eval_loss(const LossBuilder& f) {
  Tape tape;
  Value loss = f(tape);
  const Tensor& lv = loss.val();
  if (lv.size() != 1)
    throw Error(Error::Kind::contract, "grad_check: loss must be scalar, got " +
                                           shape_str(lv.shape()));
  return lv[0];
}

}  // namespace

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  os << "grad_check: step=" << step << " tol=" << tol
     << " floor=" << abs_floor << "\n";
  for (const GradCheckEntry& e : entries) {
    os << "  " << e.name << " (" << e.count
       << " coords): max rel err " << e.max_rel_error << " at ["
       << e.worst_index << "] analytic=" << e.analytic
       << " numeric=" << e.numeric << "\n";
  }
  os << "  worst: " << worst_param << " rel err " << max_rel_error << " -> "
     << (passed ? "PASS" : "FAIL") << "\n";
  return os.str();
}

GradCheckReport grad_check(const LossBuilder& f,
                           const std::vector<Param*>& params, double h,
                           double tol, double abs_floor) {
  if (h <= 0.0) throw Error(Error::Kind::config, "grad_check: step must be > 0");

  // Analytic pass: one forward + backward filling Param::grad.
  for (Param* p : params) p->zero_grad();
  double base;
  {
    Tape tape;
    Value loss = f(tape);
    const Tensor& lv = loss.val();
    if (lv.size() != 1)
      throw Error(Error::Kind::contract,
                  "grad_check: loss must be scalar, got " + shape_str(lv.shape()));
    base = lv[0];
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  // Determinism gate: the same build must reproduce the loss bit-for-bit.
  double repeat = eval_loss(f);
  if (!(repeat == base))
    throw Error(Error::Kind::determinism,
                "grad_check: two forward passes disagree (" +
                    std::to_string(base) + " vs " + std::to_string(repeat) + ")");

  GradCheckReport report;
  report.step = h;
  report.tol = tol;
  report.abs_floor = abs_floor;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    GradCheckEntry entry;
    entry.name = p.name;
    entry.count = p.value.size();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double saved = p.value[i];
      p.value[i] = saved + h;
      double up = eval_loss(f);
      p.value[i] = saved - h;
      double down = eval_loss(f);
      p.value[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[pi][i];
      double denom = std::max({std::fabs(a), std::fabs(numeric), abs_floor});
      double rel = std::fabs(a - numeric) / denom;
      if (rel >= entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    if (entry.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = entry.max_rel_error;
      report.worst_param = entry.name;
    }
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace cyc
