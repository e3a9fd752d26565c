// Acceptance gates for the decoder stack. Each case prints one summary line
//
//   ACCEPTANCE <n> (<slug>): PASS|FAIL - <note>
//
// and backs it with a doctest assertion, so `ctest` fails when a gate fails.
// The expensive end-to-end gate runs last; everything before it finishes in
// well under a minute combined.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "cyc/checkpoint.hpp"
#include "cyc/config.hpp"
#include "cyc/data.hpp"
#include "cyc/decoder.hpp"
#include "cyc/error.hpp"
#include "cyc/gradcheck.hpp"
#include "cyc/harness.hpp"
#include "cyc/iue.hpp"
#include "cyc/mhsp.hpp"
#include "cyc/ops.hpp"
#include "cyc/report.hpp"
#include "cyc/rng.hpp"
#include "cyc/tape.hpp"
#include "cyc/tensor.hpp"
#include "cyc/train.hpp"

using namespace cyc;

namespace {

void announce(int number, const char* slug, bool ok, const std::string& note) {
  std::printf("ACCEPTANCE %d (%s): %s - %s\n", number, slug,
              ok ? "PASS" : "FAIL", note.c_str());
  std::fflush(stdout);
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const std::string& p : parts) {
    if (!out.empty()) out += "; ";
    out += p;
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Builds a trace of constant cycle logits and reliabilities on the tape.
CycleTrace make_trace(Tape& tape, const std::vector<Tensor>& logits,
                      const std::vector<Tensor>& reliabilities) {
  CycleTrace tr;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    CycleOutput out;
    out.logits = tape.constant(logits[c]);
    out.state = tape.constant(Tensor::zeros({logits[c].extent(0), 1}));
    out.cycle_index = c + 1;
    tr.outputs.push_back(out);
  }
  for (const Tensor& r : reliabilities)
    tr.reliabilities.push_back(tape.constant(r));
  tr.executed = logits.size();
  if (!tr.outputs.empty()) tr.final_logits = tr.outputs.back().logits;
  return tr;
}

// Softmax written out longhand for the hand-computed oracles.
std::vector<double> oracle_softmax(const std::vector<double>& v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double sum = 0.0;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

// ===========================================================================
// 1. Gradient suite: every differentiable op plus the full composite loss
//    passes central finite differences (rel tol 1e-4, abs floor 1e-6) on
//    randomized toy instances, in under 60 seconds.
// ===========================================================================

TEST_CASE("acceptance 1: gradient suite") {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20260823);
  std::vector<std::string> problems;
  std::size_t n_checks = 0;
  double worst = 0.0;

  // Runs one finite-difference check and records the outcome.
  auto check_op = [&](const char* name, const std::vector<Param*>& ps,
                      const LossBuilder& f) {
    GradCheckReport rep = grad_check(f, ps);
    ++n_checks;
    worst = std::max(worst, rep.max_rel_error);
    if (!rep.passed) {
      char buf[192];
      std::snprintf(buf, sizeof buf, "%s: max rel err %.3e at %s", name,
                    rep.max_rel_error, rep.worst_param.c_str());
      problems.emplace_back(buf);
    }
  };
  // Random readout weights break output symmetry so permuted or misplaced
  // gradients cannot cancel in the scalar loss.
  auto readout = [](Tape& tape, Value out, const Tensor& w) {
    return mean_all(mul(out, tape.constant(w)));
  };

  {
    Param a("a", random_tensor({2, 3}, rng));
    Param b("b", random_tensor({2, 3}, rng));
    Tensor w = random_tensor({2, 3}, rng);
    check_op("add", {&a, &b}, [&](Tape& t) {
      return readout(t, add(t.leaf(a), t.leaf(b)), w);
    });
  }
  {
    Param a("a", random_tensor({2, 3}, rng));
    Param b("b", random_tensor({2, 3}, rng));
    Tensor w = random_tensor({2, 3}, rng);
    check_op("mul", {&a, &b}, [&](Tape& t) {
      return readout(t, mul(t.leaf(a), t.leaf(b)), w);
    });
  }
  {
    Param a("a", random_tensor({2, 3}, rng));
    Tensor w = random_tensor({2, 3}, rng);
    check_op("affine_scalar", {&a}, [&](Tape& t) {
      return readout(t, affine_scalar(t.leaf(a), 1.7, -0.4), w);
    });
  }
  {
    Param a("a", random_tensor({2, 3}, rng, -2.0, 2.0));
    Tensor w = random_tensor({2, 3}, rng);
    check_op("sigmoid", {&a}, [&](Tape& t) {
      return readout(t, sigmoid(t.leaf(a)), w);
    });
  }
  {
    Param a("a", random_tensor({2, 3}, rng, -2.0, 2.0));
    Tensor w = random_tensor({2, 3}, rng);
    check_op("tanh", {&a}, [&](Tape& t) {
      return readout(t, tanh(t.leaf(a)), w);
    });
  }
  {
    // Keep inputs away from the origin, where the second derivative of the
    // exponential branch makes finite differences needlessly noisy.
    Tensor av = random_tensor({2, 3}, rng, 0.1, 2.0);
    for (std::size_t i = 0; i < av.size(); ++i)
      if (rng.uniform() < 0.5) av[i] = -av[i];
    Param a("a", av);
    Tensor w = random_tensor({2, 3}, rng);
    check_op("elu", {&a},
             [&](Tape& t) { return readout(t, elu(t.leaf(a)), w); });
  }
  {
    // log(x^2 + eps) is steep near zero; |x| >= 0.3 keeps the quotient of
    // the finite difference well conditioned.
    Tensor av = random_tensor({2, 3}, rng, 0.3, 1.2);
    for (std::size_t i = 0; i < av.size(); ++i)
      if (rng.uniform() < 0.5) av[i] = -av[i];
    Param a("a", av);
    Tensor w = random_tensor({2, 3}, rng);
    check_op("square_log", {&a},
             [&](Tape& t) { return readout(t, square_log(t.leaf(a)), w); });
  }
  {
    Param a("a", random_tensor({2, 3}, rng));
    Param b("b", random_tensor({3, 4}, rng));
    Tensor w = random_tensor({2, 4}, rng);
    check_op("matmul", {&a, &b}, [&](Tape& t) {
      return readout(t, matmul(t.leaf(a), t.leaf(b)), w);
    });
  }
  {
    Param a("a", random_tensor({2, 3}, rng));
    Tensor w = random_tensor({3, 2}, rng);
    check_op("transpose", {&a}, [&](Tape& t) {
      return readout(t, transpose(t.leaf(a)), w);
    });
  }
  {
    Param x("x", random_tensor({3, 4}, rng));
    Param v("v", random_tensor({4}, rng));
    Tensor w = random_tensor({3, 4}, rng);
    check_op("add_rowvec", {&x, &v}, [&](Tape& t) {
      return readout(t, add_rowvec(t.leaf(x), t.leaf(v)), w);
    });
  }
  {
    Param x("x", random_tensor({3, 4}, rng));
    Param v("v", random_tensor({4}, rng));
    Tensor w = random_tensor({3, 4}, rng);
    check_op("mul_rowvec", {&x, &v}, [&](Tape& t) {
      return readout(t, mul_rowvec(t.leaf(x), t.leaf(v)), w);
    });
  }
  {
    Param x("x", random_tensor({3, 4}, rng));
    Param s("s", random_tensor({3}, rng));
    Tensor w = random_tensor({3, 4}, rng);
    check_op("scale_rows", {&x, &s}, [&](Tape& t) {
      return readout(t, scale_rows(t.leaf(x), t.leaf(s)), w);
    });
  }
  {
    Param x("x", random_tensor({3, 4}, rng));
    Tensor w = random_tensor({3}, rng);
    check_op("row_sum", {&x}, [&](Tape& t) {
      return readout(t, row_sum(t.leaf(x)), w);
    });
  }
  {
    Param x("x", random_tensor({3, 4}, rng));
    check_op("mean_all", {&x}, [&](Tape& t) {
      return affine_scalar(mean_all(t.leaf(x)), 2.5, 0.3);
    });
  }
  {
    Param x("x", random_tensor({2, 6}, rng));
    Tensor w = random_tensor({3, 4}, rng);
    check_op("reshape", {&x}, [&](Tape& t) {
      return readout(t, reshape(t.leaf(x), {3, 4}), w);
    });
  }
  {
    Param a("a", random_tensor({2, 2}, rng));
    Param b("b", random_tensor({2, 3}, rng));
    Tensor w = random_tensor({2, 5}, rng);
    check_op("concat_cols", {&a, &b}, [&](Tape& t) {
      return readout(t, concat_cols(t.leaf(a), t.leaf(b)), w);
    });
  }
  {
    Param p("p", random_tensor({2, 3, 4}, rng));
    Tensor w = random_tensor({2, 4}, rng);
    check_op("select_time", {&p}, [&](Tape& t) {
      return readout(t, select_time(t.leaf(p), 1), w);
    });
  }
  {
    Param m("m", random_tensor({2, 3}, rng));
    Tensor w = random_tensor({2}, rng);
    check_op("select_col", {&m}, [&](Tape& t) {
      return readout(t, select_col(t.leaf(m), 2), w);
    });
  }
  {
    Param m("m", random_tensor({3, 4}, rng));
    Tensor w = random_tensor({3, 3}, rng);
    check_op("stack_cols", {&m}, [&](Tape& t) {
      Value v = t.leaf(m);
      std::vector<Value> cols = {select_col(v, 2), select_col(v, 0),
                                 select_col(v, 3)};
      return readout(t, stack_cols(cols), w);
    });
  }
  {
    Param v("v", random_tensor({5}, rng, -2.0, 2.0));
    Tensor w = random_tensor({5}, rng);
    check_op("softmax_temp (vector)", {&v}, [&](Tape& t) {
      return readout(t, softmax_temp(t.leaf(v), 1.7), w);
    });
  }
  {
    Param x("x", random_tensor({2, 4}, rng, -2.0, 2.0));
    Tensor w = random_tensor({2, 4}, rng);
    check_op("softmax_temp (rows)", {&x}, [&](Tape& t) {
      return readout(t, softmax_temp(t.leaf(x), 0.6), w);
    });
  }
  {
    Param h("h", random_tensor({2, 4}, rng));
    Param gain("gain", random_tensor({4}, rng, 0.5, 1.5));
    Param bias("bias", random_tensor({4}, rng));
    Tensor w = random_tensor({2, 4}, rng);
    check_op("rms_norm", {&h, &gain, &bias}, [&](Tape& t) {
      return readout(t, rms_norm(t.leaf(h), t.leaf(gain), t.leaf(bias), 1e-5),
                     w);
    });
  }
  {
    Param logits("logits", random_tensor({3, 4}, rng, -2.0, 2.0));
    const std::vector<int> labels = {0, 3, 1};
    check_op("cross_entropy", {&logits}, [&](Tape& t) {
      return cross_entropy(t.leaf(logits), labels);
    });
  }
  {
    Param x("x", random_tensor({3}, rng));
    check_op("bce", {&x}, [&](Tape& t) {
      return bce(sigmoid(mean_all(t.leaf(x))), 0.7);
    });
  }
  {
    Param z("z", random_tensor({2, 10}, rng));
    Tensor w = random_tensor({2, 4, 4}, rng);
    check_op("patchify", {&z}, [&](Tape& t) {
      return readout(t, patchify(t.leaf(z), 4, 2), w);
    });
  }
  {
    Param p("p", random_tensor({2, 3, 6}, rng));
    Tensor w = random_tensor({2, 3, 4}, rng);
    check_op("adaptive_pool", {&p}, [&](Tape& t) {
      return readout(t, adaptive_pool(t.leaf(p), 4), w);
    });
  }
  {
    Param p("p", random_tensor({2, 3, 4}, rng));
    Param g("g", random_tensor({2, 4}, rng, 0.1, 0.9));
    Tensor w = random_tensor({2, 3, 4}, rng);
    check_op("mul_gate", {&p, &g}, [&](Tape& t) {
      return readout(t, mul_gate(t.leaf(p), t.leaf(g)), w);
    });
  }
  {
    Param x("x", random_tensor({2, 2, 8}, rng));
    Param k("k", random_tensor({2, 3}, rng));
    Tensor w = random_tensor({2, 2, 2, 8}, rng);
    check_op("conv_temporal", {&x, &k}, [&](Tape& t) {
      return readout(t, conv_temporal(t.leaf(x), t.leaf(k)), w);
    });
  }
  {
    Param u("u", random_tensor({2, 2, 3, 4}, rng));
    Param sw("sw", random_tensor({2, 3}, rng));
    Tensor w = random_tensor({2, 2, 4}, rng);
    check_op("spatial_collapse", {&u, &sw}, [&](Tape& t) {
      return readout(t, spatial_collapse(t.leaf(u), t.leaf(sw)), w);
    });
  }
  {
    Param x("x", random_tensor({2, 2, 8}, rng));
    Tensor w = random_tensor({2, 2, 2}, rng);
    check_op("mean_pool_time", {&x}, [&](Tape& t) {
      return readout(t, mean_pool_time(t.leaf(x), 4), w);
    });
  }

  // Full composite: backbone -> cyclic encoder -> reliability head ->
  // aggregate + halting regularizer + reliability supervision, end to end
  // through every trainable parameter. tau_stop = 2 keeps halting off so
  // the loss stays smooth in the parameters.
  {
    Decoder dec;
    dec.cfg.backbone.temporal_filters = 2;
    dec.cfg.backbone.temporal_kernel = 5;
    dec.cfg.backbone.pool_stride = 4;
    dec.cfg.backbone.activation = Activation::elu;
    dec.cfg.mhsp.windows = {4};
    dec.cfg.mhsp.stride = 2;
    dec.cfg.mhsp.patch_dim = 3;
    dec.cfg.mhsp.hidden_dim = 4;
    dec.cfg.mhsp.max_cycles = 3;
    dec.cfg.variant = Variant::mhsp_iue;
    dec.cfg.classes = 2;
    dec.cfg.tau_ens = 0.8;
    dec.cfg.tau_stop = 2.0;
    Rng init_rng(derive_seed(31, 0x9cc1));
    dec.init(2, 16, init_rng);

    Tensor batch({2, 2, 16});
    for (std::size_t i = 0; i < batch.size(); ++i)
      batch[i] = init_rng.normal() * 0.5;
    const std::vector<int> labels = {0, 1};

    Tape ref;
    CycleTrace ref_trace = decoder_forward(ref, dec, batch);
    MctsConfig mc;
    mc.n_simulations = 32;
    mc.max_depth = dec.cfg.mhsp.max_cycles;
    mc.rng_seed = derive_seed(31, 0x3a6);
    const Tensor targets = mcts_targets(ref_trace, labels, mc, dec.cfg.tau_ens);

    LossWeights lw;
    lw.iue_enabled = true;
    lw.lambda_halt = 0.05;
    lw.lambda_iue = 0.5;

    check_op("composite mhsp_iue loss", dec.all(), [&](Tape& t) {
      CycleTrace trace = decoder_forward(t, dec, batch);
      return total_loss(t, trace, labels, &targets, lw, dec.cfg.tau_ens);
    });
  }

  const double secs = seconds_since(t0);
  if (secs >= 60.0) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "runtime %.1f s exceeds the 60 s budget",
                  secs);
    problems.emplace_back(buf);
  }
  const bool ok = problems.empty();
  char summary[192];
  std::snprintf(summary, sizeof summary,
                "%zu finite-difference checks, worst rel err %.2e, %.1f s",
                n_checks, worst, secs);
  announce(1, "gradient-suite", ok,
           ok ? std::string(summary) : join(problems));
  CHECK_MESSAGE(ok, join(problems));
}

// ===========================================================================
// 2. Recurrence oracle: lle_forward against an independently hand-unrolled
//    gated recurrence plus RMS tail, to 1e-12; all-zero parameters give the
//    zero vector exactly.
// ===========================================================================

TEST_CASE("acceptance 2: low-level encoder recurrence oracle") {
  Rng rng(4242);
  const std::size_t B = 2, d = 3, H = 4;
  LLEParams lle;
  lle.init(d, H, rng);
  std::vector<std::string> problems;
  double worst = 0.0;

  auto dot_row = [](const Tensor& m, std::size_t row, const double* v,
                    std::size_t n) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += m(row, j) * v[j];
    return s;
  };

  for (std::size_t n_patches = 1; n_patches <= 2; ++n_patches) {
    Tensor patches = random_tensor({B, n_patches, d}, rng);
    Tape tape;
    Value out = lle_forward(tape, tape.constant(patches), lle);
    REQUIRE(out.val().shape() == Shape{B, H});

    for (std::size_t b = 0; b < B; ++b) {
      // Hand-unrolled recurrence, written from the update equations: the
      // update and reset gates are sigmoids of their own affine maps, the
      // candidate tanh sees the reset-scaled carry, and the new state is
      // the gate-blended mix. The carry starts at zero.
      std::vector<double> h(H, 0.0);
      for (std::size_t t = 0; t < n_patches; ++t) {
        const double* x = patches.data() + (b * n_patches + t) * d;
        std::vector<double> z(H), r(H), cand(H), next(H);
        for (std::size_t i = 0; i < H; ++i) {
          z[i] = 1.0 / (1.0 + std::exp(-(dot_row(lle.gru.update_in.value, i, x, d) +
                                         dot_row(lle.gru.update_rec.value, i, h.data(), H) +
                                         lle.gru.update_bias.value[i])));
          r[i] = 1.0 / (1.0 + std::exp(-(dot_row(lle.gru.reset_in.value, i, x, d) +
                                         dot_row(lle.gru.reset_rec.value, i, h.data(), H) +
                                         lle.gru.reset_bias.value[i])));
        }
        std::vector<double> rh(H);
        for (std::size_t i = 0; i < H; ++i) rh[i] = r[i] * h[i];
        for (std::size_t i = 0; i < H; ++i) {
          cand[i] = std::tanh(dot_row(lle.gru.cand_in.value, i, x, d) +
                              dot_row(lle.gru.cand_rec.value, i, rh.data(), H) +
                              lle.gru.cand_bias.value[i]);
          next[i] = (1.0 - z[i]) * h[i] + z[i] * cand[i];
        }
        h = next;
      }
      double ms = 0.0;
      for (double v : h) ms += v * v;
      const double rms = std::sqrt(ms / static_cast<double>(H) + lle.eps);
      for (std::size_t i = 0; i < H; ++i) {
        const double want =
            lle.gain.value[i] * h[i] / rms + lle.bias.value[i];
        const double diff = std::fabs(out.val()(b, i) - want);
        worst = std::max(worst, diff);
        if (diff > 1e-12) {
          char buf[128];
          std::snprintf(buf, sizeof buf,
                        "n=%zu sample %zu coord %zu: |got-want| = %.3e",
                        n_patches, b, i, diff);
          problems.emplace_back(buf);
        }
      }
    }
  }

  // All-zero parameters: both gates sit at 1/2, the candidate at zero, so
  // the carry never leaves zero and the affine tail maps it to exact zero.
  for (Param* p : lle.all()) p->value.fill(0.0);
  {
    Tensor patches = random_tensor({B, 2, d}, rng);
    Tape tape;
    Value out = lle_forward(tape, tape.constant(patches), lle);
    for (std::size_t i = 0; i < out.val().size(); ++i) {
      if (out.val()[i] != 0.0) {
        problems.emplace_back("zero-parameter output is not exactly zero");
        break;
      }
    }
  }

  const bool ok = problems.empty();
  char summary[128];
  std::snprintf(summary, sizeof summary,
                "hand-unrolled n=1,2 match to %.1e (tol 1e-12); zero "
                "parameters give exact zeros",
                worst);
  announce(2, "recurrence-oracle", ok,
           ok ? std::string(summary) : join(problems));
  CHECK_MESSAGE(ok, join(problems));
}

// ===========================================================================
// 3. Aggregation invariants: the reliability-weighted combination is convex,
//    invariant to per-sample constant shifts of the reliabilities, and
//    collapses to the uniform mean at temperature zero.
// ===========================================================================

TEST_CASE("acceptance 3: aggregation invariants") {
  Rng rng(77);
  std::vector<std::string> problems;
  std::size_t n_rounds = 25;

  for (std::size_t round = 0; round < n_rounds; ++round) {
    const std::size_t B = 1 + rng.below(3);
    const std::size_t L = 1 + rng.below(4);
    const std::size_t K = 2 + rng.below(4);
    const double tau = rng.uniform(0.0, 8.0);

    std::vector<Tensor> logits, rel, rel_shift;
    Tensor delta = random_tensor({B}, rng, 0.0, 0.4);
    for (std::size_t c = 0; c < L; ++c) {
      logits.push_back(random_tensor({B, K}, rng, -2.0, 2.0));
      rel.push_back(random_tensor({B}, rng, 0.05, 0.55));
      Tensor shifted = rel.back();
      for (std::size_t b = 0; b < B; ++b) shifted[b] += delta[b];
      rel_shift.push_back(shifted);
    }

    Tape tape;
    CycleTrace tr = make_trace(tape, logits, rel);
    Value agg = aggregate(tape, tr, tau);

    for (std::size_t b = 0; b < B; ++b) {
      std::vector<double> scores(L);
      for (std::size_t c = 0; c < L; ++c) scores[c] = tau * rel[c][b];
      std::vector<double> alpha = oracle_softmax(scores);
      for (std::size_t k = 0; k < K; ++k) {
        double want = 0.0, lo = logits[0](b, k), hi = lo;
        for (std::size_t c = 0; c < L; ++c) {
          want += alpha[c] * logits[c](b, k);
          lo = std::min(lo, logits[c](b, k));
          hi = std::max(hi, logits[c](b, k));
        }
        const double got = agg.val()(b, k);
        if (std::fabs(got - want) > 1e-12)
          problems.emplace_back("weighted combination differs from the "
                                "longhand softmax blend");
        if (got < lo - 1e-12 || got > hi + 1e-12)
          problems.emplace_back("output escapes the convex hull of the "
                                "cycle logits");
      }
    }

    // Per-sample constant shift of every reliability leaves the weights,
    // and therefore the blend, unchanged.
    CycleTrace tr2 = make_trace(tape, logits, rel_shift);
    Value agg2 = aggregate(tape, tr2, tau);
    for (std::size_t i = 0; i < agg.val().size(); ++i)
      if (std::fabs(agg.val()[i] - agg2.val()[i]) > 1e-12)
        problems.emplace_back("constant-shift invariance violated");

    // Temperature zero: every cycle gets the same weight.
    Value agg0 = aggregate(tape, tr, 0.0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < K; ++k) {
        double mean = 0.0;
        for (std::size_t c = 0; c < L; ++c) mean += logits[c](b, k);
        mean /= static_cast<double>(L);
        if (std::fabs(agg0.val()(b, k) - mean) > 1e-12)
          problems.emplace_back("temperature zero is not the uniform mean");
      }

    if (!problems.empty()) break;
  }

  const bool ok = problems.empty();
  char summary[160];
  std::snprintf(summary, sizeof summary,
                "%zu randomized traces: convex blend, per-sample shift "
                "invariance, and uniform mean at temperature 0, all to 1e-12",
                n_rounds);
  announce(3, "aggregation-invariants", ok,
           ok ? std::string(summary) : join(problems));
  CHECK_MESSAGE(ok, join(problems));
}

// ===========================================================================
// 4. Halting contract: never halts on the first cycle, strict inequality at
//    the threshold, monotone in tau_stop — exhaustively over a grid.
// ===========================================================================

TEST_CASE("acceptance 4: halting contract") {
  std::vector<std::string> problems;
  // Dyadic grid values are exactly representable, so batch means and
  // threshold comparisons carry no rounding slack and ties are real ties.
  const std::vector<double> taus = {-0.25, 0.0,   0.125, 0.5,
                                    0.625, 0.75,  0.875, 1.0};
  const std::vector<double> means = {0.0,   0.125, 0.25, 0.5,
                                     0.625, 0.75,  0.875, 1.0};
  std::size_t n_combos = 0;

  for (std::size_t c = 1; c <= 6; ++c) {
    for (double m : means) {
      for (std::size_t batch : {std::size_t{1}, std::size_t{4}}) {
        Tensor r = Tensor::full({batch}, m);
        bool prev = true;  // flags must be non-increasing along rising taus
        for (double tau : taus) {
          const bool got = should_halt(r, c, tau);
          const bool want = (c >= 2) && (m > tau);
          ++n_combos;
          if (got != want) {
            char buf[128];
            std::snprintf(buf, sizeof buf,
                          "c=%zu mean=%.3f tau=%.3f batch=%zu: got %d want %d",
                          c, m, tau, batch, int(got), int(want));
            problems.emplace_back(buf);
          }
          if (got && !prev)
            problems.emplace_back("halting is not monotone in tau_stop");
          prev = got;
        }
      }
    }
  }

  // Mixed batch whose mean ties the threshold exactly: strict means no halt.
  {
    Tensor r = Tensor::vec({0.5, 0.75, 1.0});  // mean exactly 0.75
    if (should_halt(r, 3, 0.75))
      problems.emplace_back("tie with tau_stop must not halt");
    if (!should_halt(r, 3, 0.6875))
      problems.emplace_back("mean strictly above tau_stop must halt at c>=2");
    if (should_halt(r, 1, -1.0))
      problems.emplace_back("halted on the first cycle");
    n_combos += 3;
  }

  const bool ok = problems.empty();
  char summary[128];
  std::snprintf(summary, sizeof summary,
                "%zu grid combinations: c=1 never halts, strict-> at the "
                "threshold, monotone in tau_stop",
                n_combos);
  announce(4, "halting-contract", ok,
           ok ? std::string(summary) : join(problems));
  CHECK_MESSAGE(ok, join(problems));
}

// ===========================================================================
// 5. Search oracle: two-depth halt/continue search with 512 simulations and
//    a fixed seed lands within 0.05 of exhaustive path enumeration, and a
//    repeated seed reproduces the targets bit for bit.
// ===========================================================================

TEST_CASE("acceptance 5: halt/continue search oracle") {
  std::vector<std::string> problems;

  // Two cycles, one sample, equal reliabilities. The two leaf paths are
  // halt@1 (return = true-class softmax of the first logits) and halt@2
  // (return = softmax of the two-cycle mean, since equal reliabilities make
  // the aggregate a plain average). Returns are engineered close together
  // so the UCB1 visit split stays within 0.05 of the enumeration mean.
  Tape tape;
  Tensor l1({1, 2}, {0.3, 0.0});
  Tensor l2({1, 2}, {0.5, 0.0});
  std::vector<Tensor> rel = {Tensor::full({1}, 0.5), Tensor::full({1}, 0.5)};
  CycleTrace tr = make_trace(tape, {l1, l2}, rel);
  const std::vector<int> labels = {0};
  const double tau = 4.0;

  const double r1 = oracle_softmax({0.3, 0.0})[0];
  const double r2 = oracle_softmax({(0.3 + 0.5) / 2.0, 0.0})[0];
  const double want1 = (r1 + r2) / 2.0;  // both paths pass depth 1
  const double want2 = r2;               // only the continue path reaches 2

  if (std::fabs(rollout_return(tr, labels, 1, tau) - r1) > 1e-12)
    problems.emplace_back("depth-1 rollout return differs from the oracle");
  if (std::fabs(rollout_return(tr, labels, 2, tau) - r2) > 1e-12)
    problems.emplace_back("depth-2 rollout return differs from the oracle");

  MctsConfig cfg;
  cfg.n_simulations = 512;
  cfg.max_depth = 2;
  cfg.ucb_c = std::sqrt(2.0);
  cfg.rng_seed = 2024;
  Tensor targets = mcts_targets(tr, labels, cfg, tau);
  double dev = std::max(std::fabs(targets[0] - want1),
                        std::fabs(targets[1] - want2));
  if (dev > 0.05) {
    char buf[96];
    std::snprintf(buf, sizeof buf,
                  "targets deviate %.4f from enumeration (limit 0.05)", dev);
    problems.emplace_back(buf);
  }
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (targets[i] < 0.0 || targets[i] > 1.0)
      problems.emplace_back("target escapes [0, 1]");

  Tensor again = mcts_targets(tr, labels, cfg, tau);
  bool identical = targets.size() == again.size();
  for (std::size_t i = 0; identical && i < targets.size(); ++i)
    identical = std::memcmp(&targets[i], &again[i], sizeof(double)) == 0;
  if (!identical)
    problems.emplace_back("repeated seed is not bit-exact");

  const bool ok = problems.empty();
  char summary[160];
  std::snprintf(summary, sizeof summary,
                "512-simulation targets within %.4f of exhaustive "
                "enumeration (limit 0.05); repeated seed bit-exact",
                dev);
  announce(5, "mcts-oracle", ok, ok ? std::string(summary) : join(problems));
  CHECK_MESSAGE(ok, join(problems));
}

// ===========================================================================
// 6. Reference statistics: summarize_accuracy applied to the printed
//    per-subject accuracies of all nine reference columns must reproduce
//    each column's printed mean and population std at 3 decimals.
// ===========================================================================

TEST_CASE("acceptance 6: reference accuracy statistics") {
  struct RefColumn {
    const char* name;
    double printed_mean;
    double printed_std;
    std::vector<double> per_subject;
  };
  // Printed per-subject accuracies and summary rows of the reference
  // results table, transcribed verbatim.
  const std::vector<RefColumn> columns = {
      {"eegnet", 0.527, 0.099,
       {0.532, 0.407, 0.583, 0.440, 0.435, 0.463, 0.560, 0.741, 0.583}},
      {"eegnet_mhsp", 0.589, 0.078,
       {0.519, 0.532, 0.699, 0.463, 0.588, 0.537, 0.681, 0.676, 0.607}},
      {"eegnet_mhsp_iue", 0.592, 0.070,
       {0.533, 0.554, 0.685, 0.472, 0.575, 0.545, 0.686, 0.680, 0.621}},
      {"shallow", 0.499, 0.124,
       {0.625, 0.361, 0.616, 0.394, 0.343, 0.384, 0.482, 0.625, 0.657}},
      {"shallow_mhsp", 0.508, 0.106,
       {0.486, 0.366, 0.574, 0.398, 0.458, 0.403, 0.560, 0.653, 0.671}},
      {"shallow_mhsp_iue", 0.512, 0.112,
       {0.521, 0.388, 0.621, 0.402, 0.463, 0.417, 0.594, 0.642, 0.664}},
      {"deep", 0.551, 0.083,
       {0.560, 0.577, 0.634, 0.431, 0.472, 0.491, 0.607, 0.602, 0.690}},
      {"deep_mhsp", 0.564, 0.080,
       {0.537, 0.472, 0.625, 0.444, 0.551, 0.523, 0.583, 0.662, 0.676}},
      {"deep_mhsp_iue", 0.568, 0.077,
       {0.524, 0.520, 0.642, 0.465, 0.566, 0.532, 0.601, 0.671, 0.691}},
  };

  auto fmt3 = [](double v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };

  std::vector<std::string> problems;
  std::size_t full_matches = 0;
  for (const RefColumn& col : columns) {
    const AccuracySummary pop = summarize_accuracy(col.per_subject);
    const AccuracySummary smp = summarize_accuracy(col.per_subject, true);
    const bool mean_ok = fmt3(pop.mean) == fmt3(col.printed_mean);
    const bool std_ok = fmt3(pop.std_dev) == fmt3(col.printed_std);
    if (mean_ok && std_ok) {
      ++full_matches;
      continue;
    }
    std::string msg = std::string(col.name) + ": printed " +
                      fmt3(col.printed_mean) + "/" + fmt3(col.printed_std) +
                      " vs recomputed " + fmt3(pop.mean) + "/" +
                      fmt3(pop.std_dev);
    if (!std_ok && fmt3(smp.std_dev) == fmt3(col.printed_std))
      msg += " (printed std equals the sample-convention value " +
             fmt3(smp.std_dev) + ")";
    problems.push_back(msg);
  }

  const bool ok = problems.empty();
  std::string note;
  if (ok) {
    note = "all nine reference columns reproduce at 3 decimals";
  } else {
    char head[160];
    std::snprintf(head, sizeof head,
                  "only %zu of 9 reference columns reproduce their printed "
                  "mean/std from their own per-subject row: ",
                  full_matches);
    note = head + join(problems);
  }
  announce(6, "reference-stats", ok, note);
  CHECK_MESSAGE(ok, note);
}

// ===========================================================================
// 8. Persistence: trial-file and checkpoint round trips are bit-exact, and
//    every single-byte corruption of either file is detected on load.
// ===========================================================================

TEST_CASE("acceptance 8: persistence round trips and corruption detection") {
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() /
      ("cyc_acceptance_" + std::to_string(static_cast<long>(::getpid())));
  fs::create_directories(dir);
  std::vector<std::string> problems;
  std::size_t trial_bytes = 0, ckpt_bytes = 0;

  // ---- trial file ----
  SynthConfig sc;
  sc.n_subjects = 2;
  sc.trials_per_class = 2;
  sc.C = 3;
  sc.T = 20;
  sc.sample_rate = 20;
  sc.class_freqs = {3.0, 5.0};
  sc.noise_std = 0.3;
  sc.rng_seed = 11;
  const TrialSet ts = synth_generate(sc);
  const std::string t1 = (dir / "set.mitr").string();
  const std::string t2 = (dir / "set_copy.mitr").string();
  save_trialset(ts, t1);
  const TrialSet back = load_trialset(t1);

  bool trials_equal = back.trials.shape() == ts.trials.shape() &&
                      back.labels == ts.labels &&
                      back.subjects == ts.subjects &&
                      back.classes == ts.classes &&
                      back.sample_rate == ts.sample_rate;
  for (std::size_t i = 0; trials_equal && i < ts.trials.size(); ++i)
    trials_equal = std::memcmp(back.trials.data() + i, ts.trials.data() + i,
                               sizeof(double)) == 0;
  if (!trials_equal)
    problems.emplace_back("trial-set round trip is not bit-exact");

  save_trialset(back, t2);
  const std::string trial_file = read_bytes(t1);
  if (trial_file != read_bytes(t2))
    problems.emplace_back("re-saving a loaded trial set changes the bytes");
  trial_bytes = trial_file.size();

  const std::string scratch = (dir / "scratch.bin").string();
  std::size_t undetected_trial = 0;
  for (std::size_t i = 0; i < trial_file.size(); ++i) {
    std::string corrupt = trial_file;
    corrupt[i] = static_cast<char>(corrupt[i] ^ 0x40);
    write_bytes(scratch, corrupt);
    try {
      (void)load_trialset(scratch);
      ++undetected_trial;
    } catch (const Error&) {
    }
  }
  if (undetected_trial > 0) {
    char buf[96];
    std::snprintf(buf, sizeof buf,
                  "%zu of %zu single-byte trial-file corruptions loaded",
                  undetected_trial, trial_file.size());
    problems.emplace_back(buf);
  }

  // ---- checkpoint ----
  Rng rng(55);
  Param p1("enc.weight", random_tensor({2, 3}, rng));
  Param p2("enc.bias", random_tensor({3}, rng));
  Param p3("head.weight", random_tensor({4, 2}, rng));
  const std::vector<Param*> params = {&p1, &p2, &p3};
  const std::vector<Tensor> originals = {p1.value, p2.value, p3.value};
  const Checkpoint ck =
      snapshot_params(params, "epochs=3\nseed=5\n", 3, 0.8125);
  const std::string c1 = (dir / "model.cyc").string();
  const std::string c2 = (dir / "model_copy.cyc").string();
  save_checkpoint(ck, c1);
  const Checkpoint ld = load_checkpoint(c1);

  bool ck_equal = ld.format_version == ck.format_version &&
                  ld.config == ck.config && ld.epoch == ck.epoch &&
                  std::memcmp(&ld.val_accuracy, &ck.val_accuracy,
                              sizeof(double)) == 0 &&
                  ld.tensors.size() == ck.tensors.size();
  for (std::size_t t = 0; ck_equal && t < ck.tensors.size(); ++t) {
    ck_equal = ld.tensors[t].first == ck.tensors[t].first &&
               ld.tensors[t].second.shape() == ck.tensors[t].second.shape();
    for (std::size_t i = 0; ck_equal && i < ck.tensors[t].second.size(); ++i)
      ck_equal = std::memcmp(ld.tensors[t].second.data() + i,
                             ck.tensors[t].second.data() + i,
                             sizeof(double)) == 0;
  }
  if (!ck_equal)
    problems.emplace_back("checkpoint round trip is not bit-exact");

  save_checkpoint(ld, c2);
  const std::string ckpt_file = read_bytes(c1);
  if (ckpt_file != read_bytes(c2))
    problems.emplace_back("re-saving a loaded checkpoint changes the bytes");
  ckpt_bytes = ckpt_file.size();

  for (Param* p : params) p->value.fill(0.0);
  restore_params(ld, params);
  for (std::size_t t = 0; t < params.size(); ++t)
    for (std::size_t i = 0; i < originals[t].size(); ++i)
      if (std::memcmp(params[t]->value.data() + i, originals[t].data() + i,
                      sizeof(double)) != 0) {
        problems.emplace_back("restore_params does not reproduce the saved "
                              "values bit for bit");
        t = params.size() - 1;
        break;
      }

  std::size_t undetected_ckpt = 0;
  for (std::size_t i = 0; i < ckpt_file.size(); ++i) {
    std::string corrupt = ckpt_file;
    corrupt[i] = static_cast<char>(corrupt[i] ^ 0x40);
    write_bytes(scratch, corrupt);
    try {
      (void)load_checkpoint(scratch);
      ++undetected_ckpt;
    } catch (const Error&) {
    }
  }
  if (undetected_ckpt > 0) {
    char buf[96];
    std::snprintf(buf, sizeof buf,
                  "%zu of %zu single-byte checkpoint corruptions loaded",
                  undetected_ckpt, ckpt_file.size());
    problems.emplace_back(buf);
  }

  fs::remove_all(dir);
  const bool ok = problems.empty();
  char summary[192];
  std::snprintf(summary, sizeof summary,
                "round trips bit-exact; all %zu trial-file and %zu "
                "checkpoint single-byte corruptions detected",
                trial_bytes, ckpt_bytes);
  announce(8, "persistence", ok, ok ? std::string(summary) : join(problems));
  CHECK_MESSAGE(ok, join(problems));
}

// ===========================================================================
// 9. Split correctness: every leave-one-subject-out plan keeps train,
//    validation and test disjoint and covers everything, the test fold is
//    exactly the held-out subject, and validation takes a stratified 20%
//    per class within one trial.
// ===========================================================================

TEST_CASE("acceptance 9: split plan properties") {
  Rng rng(1234);
  std::vector<std::string> problems;
  std::size_t n_folds_checked = 0;
  const std::size_t n_rounds = 30;

  for (std::size_t round = 0; round < n_rounds && problems.empty(); ++round) {
    const std::size_t S = 2 + rng.below(4);
    const std::size_t K = 2 + rng.below(3);

    // Uneven per-subject class counts, then a shuffled trial order, so the
    // splitter cannot rely on any grouping of the input.
    std::vector<int> labels, subjects;
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t cnt = 2 + rng.below(5);
        for (std::size_t i = 0; i < cnt; ++i) {
          labels.push_back(static_cast<int>(k));
          subjects.push_back(static_cast<int>(s));
        }
      }
    const std::size_t N = labels.size();
    std::vector<std::size_t> order(N);
    for (std::size_t i = 0; i < N; ++i) order[i] = i;
    rng.shuffle(order);

    TrialSet ts;
    ts.classes = K;
    ts.sample_rate = 10;
    ts.trials = random_tensor({N, 1, 3}, rng);
    ts.labels.resize(N);
    ts.subjects.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      ts.labels[i] = labels[order[i]];
      ts.subjects[i] = subjects[order[i]];
    }
    ts.validate();

    const SplitPlan plan = loso_splits(ts, round * 17 + 1, 0.2);
    if (plan.folds.size() != S) {
      problems.emplace_back("plan does not hold one fold per subject");
      break;
    }
    std::set<int> seen_subjects;
    for (const Fold& fold : plan.folds) {
      ++n_folds_checked;
      seen_subjects.insert(fold.test_subject);

      std::vector<int> hits(N, 0);
      for (std::size_t i : fold.train_indices) ++hits[i];
      for (std::size_t i : fold.val_indices) ++hits[i];
      for (std::size_t i : fold.test_indices) ++hits[i];
      for (std::size_t i = 0; i < N; ++i)
        if (hits[i] != 1) {
          problems.emplace_back(
              "train/val/test do not partition the trials exactly");
          break;
        }

      for (std::size_t i : fold.test_indices)
        if (ts.subjects[i] != fold.test_subject) {
          problems.emplace_back("test fold contains a held-in subject");
          break;
        }
      std::size_t held_out = 0;
      for (std::size_t i = 0; i < N; ++i)
        if (ts.subjects[i] == fold.test_subject) ++held_out;
      if (fold.test_indices.size() != held_out)
        problems.emplace_back("test fold misses held-out trials");
      for (std::size_t i : fold.train_indices)
        if (ts.subjects[i] == fold.test_subject) {
          problems.emplace_back("held-out subject leaked into training");
          break;
        }
      for (std::size_t i : fold.val_indices)
        if (ts.subjects[i] == fold.test_subject) {
          problems.emplace_back("held-out subject leaked into validation");
          break;
        }

      // Stratified 20%: per class, validation takes a fifth of the held-in
      // pool to within one trial.
      for (std::size_t k = 0; k < K; ++k) {
        std::size_t pool = 0, val = 0;
        for (std::size_t i = 0; i < N; ++i)
          if (ts.labels[i] == static_cast<int>(k) &&
              ts.subjects[i] != fold.test_subject)
            ++pool;
        for (std::size_t i : fold.val_indices)
          if (ts.labels[i] == static_cast<int>(k)) ++val;
        const double want = 0.2 * static_cast<double>(pool);
        if (std::fabs(static_cast<double>(val) - want) > 1.0 + 1e-9) {
          char buf[128];
          std::snprintf(buf, sizeof buf,
                        "class %zu: validation takes %zu of a pool of %zu "
                        "(not within one trial of 20%%)",
                        k, val, pool);
          problems.emplace_back(buf);
        }
      }
      if (!problems.empty()) break;
    }
    if (seen_subjects.size() != S && problems.empty())
      problems.emplace_back("duplicate test subject across folds");
  }

  const bool ok = problems.empty();
  char summary[160];
  std::snprintf(summary, sizeof summary,
                "%zu randomized sets, %zu folds: disjoint partitions, exact "
                "held-out test folds, stratified 20%% within one trial",
                n_rounds, n_folds_checked);
  announce(9, "split-correctness", ok,
           ok ? std::string(summary) : join(problems));
  CHECK_MESSAGE(ok, join(problems));
}

// ===========================================================================
// 7. Synthetic end-to-end (runs last; everything above reports first): on
//    the seeded full-scale synthetic set, LOSO with the compact backbone
//    and the reliability-weighted variant reaches mean test accuracy
//    >= 0.85, with across-subject std no larger than the plain baseline's
//    on the same seed, inside 30 minutes.
// ===========================================================================

TEST_CASE("acceptance 7: synthetic end-to-end LOSO") {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> problems;

  // The generator defaults are the acceptance dataset: 9 subjects, 72
  // trials per class, 22 channels, 750 samples at 250 Hz, noise std 0.5.
  const TrialSet ts = synth_generate(SynthConfig{});

  RunConfig rc;  // compact backbone + full reliability stack by default
  rc.epochs = 4;
  rc.seed = 7;

  auto progress = [](const char* tag) {
    return [tag](const FoldResult& f) {
      std::printf("  [%s] fold subject=%d best_epoch=%zu val=%.4f "
                  "test=%.4f cycles=%.3f\n",
                  tag, f.subject, f.best_epoch, f.val_accuracy,
                  f.test_accuracy, f.mean_cycles);
      std::fflush(stdout);
    };
  };

  const RunReport with_iue = run_loso(ts, rc, "", progress("mhsp_iue"));
  RunConfig base = rc;
  base.variant = Variant::baseline;
  const RunReport plain = run_loso(ts, base, "", progress("baseline"));

  const AccuracySummary si = with_iue.accuracy();
  const AccuracySummary sb = plain.accuracy();
  const double secs = seconds_since(t0);

  if (si.mean < 0.85) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "mean test accuracy %.4f below 0.85",
                  si.mean);
    problems.emplace_back(buf);
  }
  if (si.std_dev > sb.std_dev) {
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "across-subject std %.4f exceeds the baseline's %.4f",
                  si.std_dev, sb.std_dev);
    problems.emplace_back(buf);
  }
  if (secs >= 1800.0) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "runtime %.0f s exceeds the 30 min budget",
                  secs);
    problems.emplace_back(buf);
  }

  const bool ok = problems.empty();
  char summary[224];
  std::snprintf(summary, sizeof summary,
                "mean accuracy %.3f (std %.3f) vs baseline %.3f (std %.3f) "
                "over 9 held-out subjects, mean cycles %.2f, %.0f s total",
                si.mean, si.std_dev, sb.mean, sb.std_dev,
                with_iue.mean_cycles(), secs);
  announce(7, "synthetic-end-to-end", ok,
           ok ? std::string(summary) : join(problems));
  CHECK_MESSAGE(ok, join(problems));
}
