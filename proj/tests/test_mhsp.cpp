#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "cyc/error.hpp"
#include "cyc/gradcheck.hpp"
#include "cyc/mhsp.hpp"
#include "cyc/ops.hpp"
#include "cyc/rng.hpp"

using namespace cyc;

// ===========================================================================
// Hand-unrolled recurrence oracle: plain loops over plain arrays, written
// directly from the update/reset/candidate equations, independent of the
// taped operator library.
// ===========================================================================

namespace {

struct OracleGru {
  // All matrices [hidden x input] / [hidden x hidden], row-major.
  std::vector<double> wz, uz, bz, wr, ur, br, wh, uh, bh;
  std::size_t in, hid;

  static double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

  // One step for a single sample: x[in], h[hid] -> new h[hid].
  std::vector<double> step(const std::vector<double>& x,
                           const std::vector<double>& h) const {
    auto affine = [&](const std::vector<double>& w_in,
                      const std::vector<double>& w_rec,
                      const std::vector<double>& b, std::size_t i) {
      double acc = b[i];
      for (std::size_t j = 0; j < in; ++j) acc += w_in[i * in + j] * x[j];
      for (std::size_t j = 0; j < hid; ++j) acc += w_rec[i * hid + j] * h[j];
      return acc;
    };
    std::vector<double> z(hid), r(hid), out(hid);
    for (std::size_t i = 0; i < hid; ++i) {
      z[i] = sig(affine(wz, uz, bz, i));
      r[i] = sig(affine(wr, ur, br, i));
    }
    for (std::size_t i = 0; i < hid; ++i) {
      double acc = bh[i];
      for (std::size_t j = 0; j < in; ++j) acc += wh[i * in + j] * x[j];
      for (std::size_t j = 0; j < hid; ++j)
        acc += uh[i * hid + j] * (r[j] * h[j]);
      double cand = std::tanh(acc);
      out[i] = (1.0 - z[i]) * h[i] + z[i] * cand;
    }
    return out;
  }
};

std::vector<double> oracle_rms_tail(const std::vector<double>& h,
                                    const std::vector<double>& gain,
                                    const std::vector<double>& bias,
                                    double eps) {
  double ms = 0.0;
  for (double v : h) ms += v * v;
  double r = std::sqrt(ms / static_cast<double>(h.size()) + eps);
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = gain[i] * h[i] / r + bias[i];
  return out;
}

// Enumerates window offsets explicitly instead of using the closed form.
std::size_t oracle_patch_count(std::size_t len, std::size_t w, std::size_t s) {
  std::size_t n = 0;
  for (std::size_t off = 0; off + w <= len; off += s) ++n;
  return n;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

void randomize(Param& p, Rng& rng, double a) {
  for (std::size_t i = 0; i < p.value.size(); ++i)
    p.value[i] = rng.uniform(-a, a);
}

std::vector<double> flat(const Tensor& t) {
  return std::vector<double>(t.data(), t.data() + t.size());
}

Error::Kind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected cyc::Error");
  return Error::Kind::contract;
}

LLEParams make_lle(std::size_t d, std::size_t h, Rng& rng, double a = 0.8) {
  LLEParams p;
  p.init(d, h, rng);
  for (Param* q : p.gru.all()) randomize(*q, rng, a);
  randomize(p.gain, rng, a);
  randomize(p.bias, rng, a);
  for (std::size_t i = 0; i < h; ++i) p.gain.value[i] += 1.0;  // keep gain near 1
  return p;
}

}  // namespace

// ===========================================================================
// patchify / adaptive_pool
// ===========================================================================

TEST_CASE("patchify: pinned offset layouts") {
  Tape tape;
  Tensor z({1, 8}, {0, 1, 2, 3, 4, 5, 6, 7});
  Value vz = tape.constant(z);

  Tensor p = patchify(vz, 4, 2).val();
  CHECK(p.shape() == Shape{1, 3, 4});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(p(0, i, j) == static_cast<double>(2 * i + j));

  Tensor whole = patchify(vz, 8, 5).val();
  CHECK(whole.shape() == Shape{1, 1, 8});
  for (std::size_t j = 0; j < 8; ++j) CHECK(whole(0, 0, j) == z(0, j));

  Tensor z10({1, 10}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor rem = patchify(tape.constant(z10), 4, 3).val();
  CHECK(rem.shape() == Shape{1, 3, 4});  // offsets 0, 3, 6; sample 9 dropped
  CHECK(rem(0, 2, 0) == 6.0);
  CHECK(rem(0, 2, 3) == 9.0);

  CHECK(kind_of([&] { patchify(vz, 9, 2); }) == Error::Kind::config);
  CHECK(kind_of([&] { patchify(vz, 4, 5); }) == Error::Kind::config);
}

TEST_CASE("patch_count matches explicit window enumeration") {
  Rng rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t len = 1 + rng.below(40);
    std::size_t w = 1 + rng.below(len);
    std::size_t s = 1 + rng.below(w);
    CHECK(patch_count(len, w, s) == oracle_patch_count(len, w, s));
  }
}

TEST_CASE("adaptive_pool: pinned bin means and constant preservation") {
  Tape tape;
  Rng rng(72);

  Tensor id = random_tensor({2, 3, 4}, rng);
  CHECK(adaptive_pool(tape.constant(id), 4).val() == id);

  Tensor one({1, 1, 4}, {1, 2, 3, 4});
  Tensor pooled = adaptive_pool(tape.constant(one), 2).val();
  CHECK(pooled(0, 0, 0) == 1.5);
  CHECK(pooled(0, 0, 1) == 3.5);

  Tensor five({1, 1, 3}, {5, 5, 5});
  Tensor p5 = adaptive_pool(tape.constant(five), 2).val();
  CHECK(p5(0, 0, 0) == 5.0);
  CHECK(p5(0, 0, 1) == 5.0);

  for (int trial = 0; trial < 30; ++trial) {
    std::size_t w = 1 + rng.below(12);
    std::size_t d = 1 + rng.below(w);
    double c = rng.uniform(-3.0, 3.0);
    Tensor constant = Tensor::full({1, 2, w}, c);
    Tensor out = adaptive_pool(tape.constant(constant), d).val();
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out[i] == doctest::Approx(c).epsilon(1e-14));
  }

  CHECK(kind_of([&] { adaptive_pool(tape.constant(one), 5); }) ==
        Error::Kind::config);
}

// ===========================================================================
// top_down_gate
// ===========================================================================

TEST_CASE("top_down_gate: passthrough, half gate, saturated-open gate") {
  Rng rng(73);
  Tape tape;
  Tensor p = random_tensor({2, 3, 4}, rng);
  Value vp = tape.constant(p);
  Tensor h = random_tensor({2, 5}, rng);
  Value vh = tape.constant(h);

  GateParams zero;
  zero.weight = Param("gate.weight", Tensor::zeros({4, 5}));
  zero.bias = Param("gate.bias", Tensor::zeros({4}));

  // Cycle 1: no prior state, the very same value comes back.
  Value same = top_down_gate(tape, vp, Value{}, zero);
  CHECK(same.node() == vp.node());
  CHECK(same.val() == p);

  // Zero gate parameters: sigma(0) = 1/2 everywhere.
  Tensor halved = top_down_gate(tape, vp, vh, zero).val();
  for (std::size_t i = 0; i < p.size(); ++i)
    CHECK(halved[i] == doctest::Approx(0.5 * p[i]).epsilon(1e-14));

  // Saturated-open gate: output indistinguishable from the input.
  GateParams open;
  open.weight = Param("gate.weight", Tensor::zeros({4, 5}));
  open.bias = Param("gate.bias", Tensor::full({4}, 50.0));
  Tensor kept = top_down_gate(tape, vp, vh, open).val();
  for (std::size_t i = 0; i < p.size(); ++i)
    CHECK(kept[i] == doctest::Approx(p[i]).epsilon(1e-12));
}

// ===========================================================================
// lle_forward
// ===========================================================================

TEST_CASE("lle_forward: all-zero parameters give the zero vector exactly") {
  Rng rng(74);
  LLEParams params;
  params.init(3, 4, rng);
  for (Param* p : params.gru.all()) p->value.fill(0.0);
  params.gain.value.fill(1.0);
  params.bias.value.fill(0.0);
  params.eps = 1e-5;

  Tape tape;
  Value patches = tape.constant(random_tensor({2, 5, 3}, rng));
  CHECK(lle_forward(tape, patches, params).val() == Tensor::zeros({2, 4}));
}

TEST_CASE("lle_forward: n=1 and n=2 match the hand-unrolled recurrence") {
  Rng rng(75);
  const std::size_t D = 3, H = 4, B = 2;
  LLEParams params = make_lle(D, H, rng);
  params.eps = 1e-5;

  OracleGru oracle;
  oracle.in = D;
  oracle.hid = H;
  oracle.wz = flat(params.gru.update_in.value);
  oracle.uz = flat(params.gru.update_rec.value);
  oracle.bz = flat(params.gru.update_bias.value);
  oracle.wr = flat(params.gru.reset_in.value);
  oracle.ur = flat(params.gru.reset_rec.value);
  oracle.br = flat(params.gru.reset_bias.value);
  oracle.wh = flat(params.gru.cand_in.value);
  oracle.uh = flat(params.gru.cand_rec.value);
  oracle.bh = flat(params.gru.cand_bias.value);
  std::vector<double> gain = flat(params.gain.value);
  std::vector<double> bias = flat(params.bias.value);

  for (std::size_t n : {std::size_t{1}, std::size_t{2}}) {
    Tensor patches = random_tensor({B, n, D}, rng);
    Tape tape;
    Tensor got = lle_forward(tape, tape.constant(patches), params).val();
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<double> h(H, 0.0);
      for (std::size_t t = 0; t < n; ++t) {
        std::vector<double> x(D);
        for (std::size_t j = 0; j < D; ++j) x[j] = patches(b, t, j);
        h = oracle.step(x, h);
      }
      std::vector<double> want = oracle_rms_tail(h, gain, bias, params.eps);
      for (std::size_t i = 0; i < H; ++i)
        CHECK(got(b, i) == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("lle_forward: n=1 equals z1 * tanh(Wh p + bh) through the tail") {
  // Single-step closed form: with h0 = 0 the reset gate is irrelevant and
  // h1 = sigma(Wz p + bz) * tanh(Wh p + bh).
  Rng rng(76);
  const std::size_t D = 3, H = 4;
  LLEParams params = make_lle(D, H, rng);
  Tensor patch = random_tensor({1, 1, D}, rng);

  std::vector<double> h1(H);
  for (std::size_t i = 0; i < H; ++i) {
    double az = params.gru.update_bias.value[i];
    double ah = params.gru.cand_bias.value[i];
    for (std::size_t j = 0; j < D; ++j) {
      az += params.gru.update_in.value(i, j) * patch(0, 0, j);
      ah += params.gru.cand_in.value(i, j) * patch(0, 0, j);
    }
    h1[i] = (1.0 / (1.0 + std::exp(-az))) * std::tanh(ah);
  }
  std::vector<double> want = oracle_rms_tail(h1, flat(params.gain.value),
                                             flat(params.bias.value), params.eps);

  Tape tape;
  Tensor got = lle_forward(tape, tape.constant(patch), params).val();
  for (std::size_t i = 0; i < H; ++i)
    CHECK(got(0, i) == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("lle_forward: shifting beta shifts the output exactly") {
  Rng rng(77);
  LLEParams params = make_lle(3, 4, rng);
  Tensor patches = random_tensor({2, 3, 3}, rng);
  const double delta = 0.7315;

  Tape tape;
  Tensor base = lle_forward(tape, tape.constant(patches), params).val();
  for (std::size_t i = 0; i < 4; ++i) params.bias.value[i] += delta;
  Tensor shifted = lle_forward(tape, tape.constant(patches), params).val();
  for (std::size_t i = 0; i < shifted.size(); ++i)
    CHECK(shifted[i] == doctest::Approx(base[i] + delta).epsilon(1e-14));
}

TEST_CASE("lle_forward: permuting the batch permutes the output rows") {
  Rng rng(78);
  LLEParams params = make_lle(3, 5, rng);
  const std::size_t B = 4, n = 3, D = 3;
  Tensor patches = random_tensor({B, n, D}, rng);
  std::vector<std::size_t> perm = {2, 0, 3, 1};
  Tensor shuffled({B, n, D});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t j = 0; j < D; ++j)
        shuffled(b, t, j) = patches(perm[b], t, j);

  Tape tape;
  Tensor out = lle_forward(tape, tape.constant(patches), params).val();
  Tensor out_s = lle_forward(tape, tape.constant(shuffled), params).val();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < 5; ++i)
      CHECK(out_s(b, i) == out(perm[b], i));  // bitwise: same row arithmetic
}

// ===========================================================================
// hle_forward
// ===========================================================================

TEST_CASE("hle_forward: zero parameters and closed update gate") {
  Rng rng(79);
  GruParams params;
  params.init("hle", 3, 3, rng);
  for (Param* p : params.all()) p->value.fill(0.0);

  Tape tape;
  Value x = tape.constant(random_tensor({2, 3}, rng));
  Value zero_carry = tape.constant(Tensor::zeros({2, 3}));
  CHECK(hle_forward(tape, x, zero_carry, params).val() == Tensor::zeros({2, 3}));

  // Saturate the update gate closed: the carry passes through.
  GruParams closed;
  closed.init("hle", 3, 3, rng);
  for (Param* p : closed.all()) randomize(*p, rng, 0.8);
  closed.update_bias.value.fill(-50.0);
  closed.update_in.value.fill(0.0);
  closed.update_rec.value.fill(0.0);
  Tensor carry = random_tensor({2, 3}, rng);
  Tensor kept = hle_forward(tape, x, tape.constant(carry), closed).val();
  for (std::size_t i = 0; i < carry.size(); ++i)
    CHECK(kept[i] == doctest::Approx(carry[i]).epsilon(1e-12));
}

TEST_CASE("hle_forward: single step matches the hand-unrolled oracle") {
  Rng rng(80);
  const std::size_t H = 3;
  GruParams params;
  params.init("hle", H, H, rng);
  for (Param* p : params.all()) randomize(*p, rng, 0.9);

  OracleGru oracle;
  oracle.in = H;
  oracle.hid = H;
  oracle.wz = flat(params.update_in.value);
  oracle.uz = flat(params.update_rec.value);
  oracle.bz = flat(params.update_bias.value);
  oracle.wr = flat(params.reset_in.value);
  oracle.ur = flat(params.reset_rec.value);
  oracle.br = flat(params.reset_bias.value);
  oracle.wh = flat(params.cand_in.value);
  oracle.uh = flat(params.cand_rec.value);
  oracle.bh = flat(params.cand_bias.value);

  Tensor x = random_tensor({1, H}, rng);
  Tensor carry = random_tensor({1, H}, rng);
  Tape tape;
  Tensor got =
      hle_forward(tape, tape.constant(x), tape.constant(carry), params).val();
  std::vector<double> want = oracle.step(flat(x), flat(carry));
  for (std::size_t i = 0; i < H; ++i)
    CHECK(got(0, i) == doctest::Approx(want[i]).epsilon(1e-12));
}

// ===========================================================================
// run_cycles
// ===========================================================================

namespace {

MhspModel make_model(Rng& rng, std::size_t window = 6, std::size_t d = 4,
                     std::size_t h = 5, std::size_t cycles = 3,
                     std::size_t classes = 4) {
  MhspModel m;
  m.cfg.windows = {window};
  m.cfg.patch_dim = d;
  m.cfg.hidden_dim = h;
  m.cfg.max_cycles = cycles;
  m.classes = classes;
  m.init(rng);
  for (Param* p : m.all()) randomize(*p, rng, 0.6);
  for (std::size_t i = 0; i < h; ++i) m.lle.gain.value[i] += 1.0;
  return m;
}

}  // namespace

TEST_CASE("run_cycles: budget of one, full budget, and early halt") {
  Rng rng(81);
  MhspModel model = make_model(rng);
  Tape tape;
  Value z = tape.constant(random_tensor({2, 12}, rng));

  CycleTrace one = run_cycles(tape, z, model, 1);
  CHECK(one.outputs.size() == 1);
  CHECK(one.executed == 1);
  CHECK_FALSE(one.halted_early);
  CHECK(one.outputs[0].cycle_index == 1);
  CHECK(one.outputs[0].logits.val().shape() == Shape{2, 4});
  CHECK(one.outputs[0].state.val().shape() == Shape{2, 5});

  CycleTrace full = run_cycles(tape, z, model, 3);
  CHECK(full.outputs.size() == 3);
  CHECK(full.executed == 3);
  CHECK_FALSE(full.halted_early);
  CHECK(full.final_logits.val() == full.outputs[2].logits.val());

  Halter at2 = [](Tape&, CycleTrace&, std::size_t c) { return c >= 2; };
  CycleTrace halted = run_cycles(tape, z, model, 3, at2);
  CHECK(halted.executed == 2);
  CHECK(halted.halted_early);

  // A halter firing at the final budgeted cycle is not an early halt.
  CycleTrace at_budget = run_cycles(tape, z, model, 2, at2);
  CHECK(at_budget.executed == 2);
  CHECK_FALSE(at_budget.halted_early);
}

TEST_CASE("run_cycles: repeated calls with frozen params are identical") {
  Rng rng(82);
  MhspModel model = make_model(rng);
  // Saturate the gate open so later cycles see undamped patches.
  model.gate.weight.value.fill(0.0);
  model.gate.bias.value.fill(50.0);
  Tensor z = random_tensor({2, 12}, rng);

  auto run = [&] {
    Tape tape;
    CycleTrace tr = run_cycles(tape, tape.constant(z), model, 3);
    std::vector<Tensor> logits;
    for (const CycleOutput& c : tr.outputs) logits.push_back(c.logits.val());
    return logits;
  };
  std::vector<Tensor> a = run(), b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("run_cycles: cycle-2 output depends on the top-down gate") {
  Rng rng(83);
  MhspModel model = make_model(rng);
  Tensor z = random_tensor({2, 12}, rng);

  Tape tape;
  CycleTrace tr = run_cycles(tape, tape.constant(z), model, 2);
  Tensor gated = tr.outputs[1].logits.val();

  model.gate.bias.value.fill(50.0);
  model.gate.weight.value.fill(0.0);
  CycleTrace tr_open = run_cycles(tape, tape.constant(z), model, 2);
  Tensor open = tr_open.outputs[1].logits.val();

  CHECK(tr.outputs[0].logits.val() == tr_open.outputs[0].logits.val());
  double diff = 0.0;
  for (std::size_t i = 0; i < gated.size(); ++i)
    diff = std::max(diff, std::fabs(gated[i] - open[i]));
  CHECK(diff > 1e-8);  // the gate must actually modulate later cycles
}

TEST_CASE("run_cycles: config validation rejects bad window geometry") {
  Rng rng(84);
  MhspModel model = make_model(rng);
  Tape tape;
  Value z = tape.constant(random_tensor({1, 12}, rng));

  MhspModel wide = make_model(rng, 6, 4, 5, 3);
  wide.cfg.windows = {13};
  CHECK(kind_of([&] { run_cycles(tape, z, wide, 2); }) == Error::Kind::config);

  MhspModel deep_d = make_model(rng);
  deep_d.cfg.patch_dim = 7;  // exceeds window 6
  CHECK(kind_of([&] { run_cycles(tape, z, deep_d, 2); }) == Error::Kind::config);

  MhspModel bad_stride = make_model(rng);
  bad_stride.cfg.stride = 9;  // exceeds window
  CHECK(kind_of([&] { run_cycles(tape, z, bad_stride, 2); }) ==
        Error::Kind::config);
}

TEST_CASE("run_cycles: multi-window averaging uses every scale") {
  Rng rng(85);
  MhspModel multi = make_model(rng);
  multi.cfg.windows = {6, 8};
  Tensor z = random_tensor({2, 16}, rng);

  Tape tape;
  CycleTrace tr = run_cycles(tape, tape.constant(z), multi, 2);
  CHECK(tr.outputs.size() == 2);

  // Dropping the second window must change the first-cycle logits.
  MhspModel single = multi;
  single.cfg.windows = {6};
  CycleTrace tr1 = run_cycles(tape, tape.constant(z), single, 2);
  double diff = 0.0;
  const Tensor& a = tr.outputs[0].logits.val();
  const Tensor& b = tr1.outputs[0].logits.val();
  for (std::size_t i = 0; i < a.size(); ++i)
    diff = std::max(diff, std::fabs(a[i] - b[i]));
  CHECK(diff > 1e-8);
}

TEST_CASE("full-model gradient check at B=2, n=3, d=4, d_h=5, K=4") {
  Rng rng(86);
  MhspModel model = make_model(rng, 6, 4, 5, 3, 4);
  Tensor z = random_tensor({2, 12}, rng);  // window 6, stride 3 -> n = 3
  CHECK(patch_count(12, 6, 3) == 3);
  std::vector<int> labels = {1, 3};

  auto f = [&](Tape& tape) {
    CycleTrace tr = run_cycles(tape, tape.constant(z), model, 3);
    return cross_entropy(tr.final_logits, labels);
  };
  GradCheckReport rep = grad_check(f, model.all(), 1e-5, 1e-4);
  INFO(rep.to_string());
  CHECK(rep.passed);
  CHECK(rep.entries.size() == model.all().size());
}
