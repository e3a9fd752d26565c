#include "cyc/mhsp.hpp"

#include <algorithm>
#include <cmath>

#include "cyc/error.hpp"

namespace cyc {

namespace {

Param init_matrix(const std::string& name, std::size_t rows, std::size_t cols,
                  Rng& rng) {
  Param p(name, Tensor({rows, cols}));
  double a = 1.0 / std::sqrt(static_cast<double>(cols));
  for (std::size_t i = 0; i < p.value.size(); ++i)
    p.value[i] = rng.uniform(-a, a);
  return p;
}

Param init_zero_vec(const std::string& name, std::size_t n) {
  return Param(name, Tensor::zeros({n}));
}

}  // namespace

void GruParams::init(const std::string& prefix, std::size_t input_dim,
                     std::size_t hidden_dim, Rng& rng) {
  update_in = init_matrix(prefix + ".update_in", hidden_dim, input_dim, rng);
  update_rec = init_matrix(prefix + ".update_rec", hidden_dim, hidden_dim, rng);
  update_bias = init_zero_vec(prefix + ".update_bias", hidden_dim);
  reset_in = init_matrix(prefix + ".reset_in", hidden_dim, input_dim, rng);
  reset_rec = init_matrix(prefix + ".reset_rec", hidden_dim, hidden_dim, rng);
  reset_bias = init_zero_vec(prefix + ".reset_bias", hidden_dim);
  cand_in = init_matrix(prefix + ".cand_in", hidden_dim, input_dim, rng);
  cand_rec = init_matrix(prefix + ".cand_rec", hidden_dim, hidden_dim, rng);
  cand_bias = init_zero_vec(prefix + ".cand_bias", hidden_dim);
}

std::vector<Param*> GruParams::all() {
  return {&update_in, &update_rec, &update_bias, &reset_in, &reset_rec,
          &reset_bias, &cand_in,   &cand_rec,    &cand_bias};
}

void LLEParams::init(std::size_t patch_dim, std::size_t hidden_dim, Rng& rng) {
  gru.init("lle", patch_dim, hidden_dim, rng);
  gain = Param("lle.gain", Tensor::full({hidden_dim}, 1.0));
  bias = Param("lle.bias", Tensor::zeros({hidden_dim}));
}

std::vector<Param*> LLEParams::all() {
  std::vector<Param*> v = gru.all();
  v.push_back(&gain);
  v.push_back(&bias);
  return v;
}

void GateParams::init(std::size_t patch_dim, std::size_t hidden_dim, Rng& rng) {
  weight = init_matrix("gate.weight", patch_dim, hidden_dim, rng);
  bias = init_zero_vec("gate.bias", patch_dim);
}

std::vector<Param*> GateParams::all() { return {&weight, &bias}; }

GruCell::GruCell(Tape& tape, GruParams& p)
    : wz_t_(transpose(tape.leaf(p.update_in))),
      uz_t_(transpose(tape.leaf(p.update_rec))),
      bz_(tape.leaf(p.update_bias)),
      wr_t_(transpose(tape.leaf(p.reset_in))),
      ur_t_(transpose(tape.leaf(p.reset_rec))),
      br_(tape.leaf(p.reset_bias)),
      wh_t_(transpose(tape.leaf(p.cand_in))),
      uh_t_(transpose(tape.leaf(p.cand_rec))),
      bh_(tape.leaf(p.cand_bias)) {}

Value GruCell::step(Value x, Value h) const {
  Value z = sigmoid(add_rowvec(add(matmul(x, wz_t_), matmul(h, uz_t_)), bz_));
  Value r = sigmoid(add_rowvec(add(matmul(x, wr_t_), matmul(h, ur_t_)), br_));
  Value cand =
      tanh(add_rowvec(add(matmul(x, wh_t_), matmul(mul(r, h), uh_t_)), bh_));
  return add(mul(affine_scalar(z, -1.0, 1.0), h), mul(z, cand));
}

std::size_t MhspConfig::stride_for(std::size_t window) const {
  if (stride > 0) return stride;
  return std::max<std::size_t>(1, window / 2);
}

void MhspConfig::validate(std::size_t feature_length) const {
  if (windows.empty())
    throw Error(Error::Kind::config, "mhsp: at least one patch window required");
  if (patch_dim < 1)
    throw Error(Error::Kind::config, "mhsp: patch_dim must be >= 1");
  if (hidden_dim < 1)
    throw Error(Error::Kind::config, "mhsp: hidden_dim must be >= 1");
  if (max_cycles < 1)
    throw Error(Error::Kind::config, "mhsp: max_cycles must be >= 1");
  if (rms_eps < 0.0)
    throw Error(Error::Kind::config, "mhsp: rms_eps must be >= 0");
  for (std::size_t w : windows) {
    if (w < 1 || w > feature_length)
      throw Error(Error::Kind::config,
                  "mhsp: window " + std::to_string(w) +
                      " outside [1," + std::to_string(feature_length) +
                      "] for feature length " + std::to_string(feature_length));
    std::size_t s = stride_for(w);
    if (s < 1 || s > w)
      throw Error(Error::Kind::config,
                  "mhsp: stride " + std::to_string(s) + " outside [1," +
                      std::to_string(w) + "] for window " + std::to_string(w));
    if (patch_dim > w)
      throw Error(Error::Kind::config,
                  "mhsp: patch_dim " + std::to_string(patch_dim) +
                      " exceeds window " + std::to_string(w));
  }
}

void MhspModel::init(Rng& rng) {
  lle.init(cfg.patch_dim, cfg.hidden_dim, rng);
  lle.eps = cfg.rms_eps;
  hle.init("hle", cfg.hidden_dim, cfg.hidden_dim, rng);
  gate.init(cfg.patch_dim, cfg.hidden_dim, rng);
  head_weight = init_matrix("head.weight", cfg.hidden_dim, classes, rng);
  head_bias = init_zero_vec("head.bias", classes);
}

std::vector<Param*> MhspModel::all() {
  std::vector<Param*> v = lle.all();
  for (Param* p : hle.all()) v.push_back(p);
  for (Param* p : gate.all()) v.push_back(p);
  v.push_back(&head_weight);
  v.push_back(&head_bias);
  return v;
}

Value top_down_gate(Tape& tape, Value p, Value h_prev, GateParams& gp) {
  if (!h_prev.valid()) return p;
  Value g = sigmoid(add_rowvec(matmul(h_prev, transpose(tape.leaf(gp.weight))),
                               tape.leaf(gp.bias)));
  return mul_gate(p, g);
}

Value lle_forward(Tape& tape, Value patches, LLEParams& params) {
  const Tensor& pv = patches.val();
  if (pv.rank() != 3)
    throw Error(Error::Kind::shape, "lle_forward: patches must be B x n x d, got " +
                                        shape_str(pv.shape()));
  std::size_t b = pv.extent(0), n = pv.extent(1);
  GruCell cell(tape, params.gru);
  Value h = tape.constant(Tensor::zeros({b, params.gru.hidden_dim()}));
  for (std::size_t t = 0; t < n; ++t) h = cell.step(select_time(patches, t), h);
  return rms_norm(h, tape.leaf(params.gain), tape.leaf(params.bias), params.eps);
}

Value hle_forward(Tape& tape, Value h_lle, Value h_carry, GruParams& params) {
  GruCell cell(tape, params);
  return cell.step(h_lle, h_carry);
}

CycleTrace run_cycles(Tape& tape, Value z, MhspModel& model,
                      std::size_t max_cycles, const Halter& halter) {
  const Tensor& zv = z.val();
  if (zv.rank() != 2)
    throw Error(Error::Kind::shape,
                "run_cycles: z must be B x T', got " + shape_str(zv.shape()));
  std::size_t b = zv.extent(0);
  model.cfg.validate(zv.extent(1));
  if (max_cycles < 1)
    throw Error(Error::Kind::config, "run_cycles: cycle budget must be >= 1");

  // Patch series per window, pooled to d; gating reuses these every cycle.
  std::vector<Value> series;
  for (std::size_t w : model.cfg.windows)
    series.push_back(adaptive_pool(patchify(z, w, model.cfg.stride_for(w)),
                                   model.cfg.patch_dim));

  GruCell hle_cell(tape, model.hle);
  Value head_w = tape.leaf(model.head_weight);  // [d_h x K], row-vector form
  Value head_b = tape.leaf(model.head_bias);

  CycleTrace trace;
  Value h_carry = tape.constant(Tensor::zeros({b, model.cfg.hidden_dim}));
  Value h_prev;  // invalid on cycle 1: gate passthrough
  double inv_m = 1.0 / static_cast<double>(series.size());
  for (std::size_t c = 1; c <= max_cycles; ++c) {
    Value h_lle;
    for (Value s : series) {
      Value gated = top_down_gate(tape, s, h_prev, model.gate);
      Value h = lle_forward(tape, gated, model.lle);
      h_lle = h_lle.valid() ? add(h_lle, h) : h;
    }
    if (series.size() > 1) h_lle = affine_scalar(h_lle, inv_m, 0.0);
    Value h_hle = hle_cell.step(h_lle, h_carry);
    Value logits = add_rowvec(matmul(h_hle, head_w), head_b);
    trace.outputs.push_back(CycleOutput{logits, h_hle, c});
    trace.executed = c;
    h_carry = h_hle;
    h_prev = h_hle;
    if (halter && halter(tape, trace, c)) {
      trace.halted_early = c < max_cycles;
      break;
    }
  }
  trace.final_logits = trace.outputs.back().logits;
  return trace;
}

}  // namespace cyc
