#include "cyc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cyc/error.hpp"

namespace cyc {

namespace {

Tape& tape_of(Value v) {
  if (!v.valid()) throw Error(Error::Kind::contract, "op on empty Value");
  return *v.tape();
}

Tape& same_tape(Value a, Value b) {
  Tape& t = tape_of(a);
  if (&t != &tape_of(b))
    throw Error(Error::Kind::contract, "operands recorded on different tapes");
  return t;
}

void require_shape(const Tensor& got, const Shape& want, const char* what) {
  if (got.shape() != want)
    throw Error(Error::Kind::shape, std::string(what) + ": expected " +
                                        shape_str(want) + ", got " +
                                        shape_str(got.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw Error(Error::Kind::shape, std::string(what) + ": expected rank " +
                                        std::to_string(rank) + ", got shape " +
                                        shape_str(t.shape()));
}

}  // namespace

namespace fn {

double sigmoid(double x) {
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    double e = std::exp(x);
    y = e / (1.0 + e);
  }
  // Guard the underflow end so downstream logs stay finite; the upper end
  // may round to 1 at double precision for x > ~36.
  return std::max(y, 1e-308);
}

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

double square_log(double x, double eps) { return std::log(x * x + eps); }

Tensor softmax_temp(const Tensor& v, double tau) {
  if (v.rank() != 1 && v.rank() != 2)
    throw Error(Error::Kind::shape,
                "softmax_temp: rank-1 or rank-2 input required, got " +
                    shape_str(v.shape()));
  std::size_t rows = v.rank() == 2 ? v.extent(0) : 1;
  std::size_t cols = v.rank() == 2 ? v.extent(1) : v.extent(0);
  Tensor out(v.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * cols;
    double* o = out.data() + r * cols;
    double m = -HUGE_VAL;
    for (std::size_t j = 0; j < cols; ++j) m = std::max(m, tau * in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      o[j] = std::exp(tau * in[j] - m);
      sum += o[j];
    }
    for (std::size_t j = 0; j < cols; ++j) o[j] /= sum;
  }
  return out;
}

Tensor softmax_rows(const Tensor& logits) { return softmax_temp(logits, 1.0); }

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  require_rank(logits, 2, "argmax_row");
  std::size_t k = logits.extent(1);
  const double* p = logits.data() + row * k;
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (p[j] > p[best]) best = j;
  return best;
}

}  // namespace fn

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Value add(Value a, Value b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  require_shape(bv, av.shape(), "add");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  std::size_t pa = a.node(), pb = b.node();
  return t.make(std::move(out), [pa, pb](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(pa);
    Tensor& gb = tp.grad(pb);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

Value mul(Value a, Value b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  require_shape(bv, av.shape(), "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  std::size_t pa = a.node(), pb = b.node();
  return t.make(std::move(out), [pa, pb](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& av = tp.value(pa);
    const Tensor& bv = tp.value(pb);
    Tensor& ga = tp.grad(pa);
    Tensor& gb = tp.grad(pb);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv[i];
      gb[i] += g[i] * av[i];
    }
  });
}

Value affine_scalar(Value x, double scale, double shift) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.val();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * xv[i] + shift;
  std::size_t px = x.node();
  return t.make(std::move(out), [px, scale](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(px);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
  });
}

Value sigmoid(Value x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.val();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn::sigmoid(xv[i]);
  std::size_t px = x.node(), self_hint = t.size();
  (void)self_hint;
  return t.make(std::move(out), [px](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad(px);
    for (std::size_t i = 0; i < g.size(); ++i)
      gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Value tanh(Value x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.val();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  std::size_t px = x.node();
  return t.make(std::move(out), [px](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad(px);
    for (std::size_t i = 0; i < g.size(); ++i)
      gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Value elu(Value x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.val();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn::elu(xv[i]);
  std::size_t px = x.node();
  return t.make(std::move(out), [px](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& xv = tp.value(px);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad(px);
    for (std::size_t i = 0; i < g.size(); ++i)
      gx[i] += g[i] * (xv[i] > 0.0 ? 1.0 : y[i] + 1.0);
  });
}

Value square_log(Value x, double eps) {
  if (eps <= 0.0) throw Error(Error::Kind::config, "square_log: eps must be > 0");
  Tape& t = tape_of(x);
  const Tensor& xv = x.val();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = fn::square_log(xv[i], eps);
  std::size_t px = x.node();
  return t.make(std::move(out), [px, eps](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& xv = tp.value(px);
    Tensor& gx = tp.grad(px);
    for (std::size_t i = 0; i < g.size(); ++i)
      gx[i] += g[i] * 2.0 * xv[i] / (xv[i] * xv[i] + eps);
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Value matmul(Value a, Value b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  require_rank(av, 2, "matmul lhs");
  require_rank(bv, 2, "matmul rhs");
  if (av.extent(1) != bv.extent(0))
    throw Error(Error::Kind::shape, "matmul: inner extents differ, " +
                                        shape_str(av.shape()) + " x " +
                                        shape_str(bv.shape()));
  std::size_t m = av.extent(0), k = av.extent(1), n = bv.extent(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = av.data() + i * k;
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double aip = arow[p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  std::size_t pa = a.node(), pb = b.node();
  return t.make(std::move(out), [pa, pb, m, k, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& av = tp.value(pa);
    const Tensor& bv = tp.value(pb);
    Tensor& ga = tp.grad(pa);
    Tensor& gb = tp.grad(pb);
    // dA = dC * B^T
    for (std::size_t i = 0; i < m; ++i) {
      const double* grow = g.data() + i * n;
      double* garow = ga.data() + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = bv.data() + p * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
        garow[p] += acc;
      }
    }
    // dB = A^T * dC
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = av.data() + i * k;
      const double* grow = g.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        double aip = arow[p];
        double* gbrow = gb.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
      }
    }
  });
}

Value transpose(Value a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.val();
  require_rank(av, 2, "transpose");
  std::size_t r = av.extent(0), c = av.extent(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = av(i, j);
  std::size_t pa = a.node();
  return t.make(std::move(out), [pa, r, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(pa);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Value add_rowvec(Value x, Value v) {
  Tape& t = same_tape(x, v);
  const Tensor& xv = x.val();
  const Tensor& vv = v.val();
  require_rank(xv, 2, "add_rowvec matrix");
  require_shape(vv, {xv.extent(1)}, "add_rowvec vector");
  std::size_t r = xv.extent(0), c = xv.extent(1);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = xv(i, j) + vv[j];
  std::size_t px = x.node(), pv = v.node();
  return t.make(std::move(out), [px, pv, r, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(px);
    Tensor& gv = tp.grad(pv);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        gx[i * c + j] += g[i * c + j];
        gv[j] += g[i * c + j];
      }
  });
}

Value mul_rowvec(Value x, Value v) {
  Tape& t = same_tape(x, v);
  const Tensor& xv = x.val();
  const Tensor& vv = v.val();
  require_rank(xv, 2, "mul_rowvec matrix");
  require_shape(vv, {xv.extent(1)}, "mul_rowvec vector");
  std::size_t r = xv.extent(0), c = xv.extent(1);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = xv(i, j) * vv[j];
  std::size_t px = x.node(), pv = v.node();
  return t.make(std::move(out), [px, pv, r, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& xv = tp.value(px);
    const Tensor& vv = tp.value(pv);
    Tensor& gx = tp.grad(px);
    Tensor& gv = tp.grad(pv);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        gx[i * c + j] += g[i * c + j] * vv[j];
        gv[j] += g[i * c + j] * xv[i * c + j];
      }
  });
}

Value scale_rows(Value x, Value s) {
  Tape& t = same_tape(x, s);
  const Tensor& xv = x.val();
  const Tensor& sv = s.val();
  require_rank(xv, 2, "scale_rows matrix");
  require_shape(sv, {xv.extent(0)}, "scale_rows scale");
  std::size_t r = xv.extent(0), c = xv.extent(1);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = xv(i, j) * sv[i];
  std::size_t px = x.node(), ps = s.node();
  return t.make(std::move(out), [px, ps, r, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& xv = tp.value(px);
    const Tensor& sv = tp.value(ps);
    Tensor& gx = tp.grad(px);
    Tensor& gs = tp.grad(ps);
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        gx[i * c + j] += g[i * c + j] * sv[i];
        acc += g[i * c + j] * xv[i * c + j];
      }
      gs[i] += acc;
    }
  });
}

Value row_sum(Value x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.val();
  require_rank(xv, 2, "row_sum");
  std::size_t r = xv.extent(0), c = xv.extent(1);
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += xv(i, j);
    out[i] = acc;
  }
  std::size_t px = x.node();
  return t.make(std::move(out), [px, r, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(px);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i];
  });
}

Value mean_all(Value x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.val();
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
  double inv = 1.0 / static_cast<double>(xv.size());
  std::size_t px = x.node();
  return t.make(Tensor::scalar(acc * inv), [px, inv](Tape& tp, std::size_t self) {
    double g = tp.grad(self)[0];
    Tensor& gx = tp.grad(px);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * inv;
  });
}

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

Value reshape(Value x, Shape shape) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.val();
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  if (n != xv.size())
    throw Error(Error::Kind::shape,
                "reshape: size mismatch " + shape_str(xv.shape()) + " -> " +
                    shape_str(shape));
  Tensor out(shape, std::vector<double>(xv.data(), xv.data() + xv.size()));
  std::size_t px = x.node();
  return t.make(std::move(out), [px](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(px);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Value concat_cols(Value a, Value b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  require_rank(av, 2, "concat_cols lhs");
  require_rank(bv, 2, "concat_cols rhs");
  if (av.extent(0) != bv.extent(0))
    throw Error(Error::Kind::shape, "concat_cols: row counts differ, " +
                                        shape_str(av.shape()) + " vs " +
                                        shape_str(bv.shape()));
  std::size_t r = av.extent(0), ca = av.extent(1), cb = bv.extent(1);
  Tensor out({r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = av(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = bv(i, j);
  }
  std::size_t pa = a.node(), pb = b.node();
  return t.make(std::move(out), [pa, pb, r, ca, cb](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(pa);
    Tensor& gb = tp.grad(pb);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
      for (std::size_t j = 0; j < cb; ++j)
        gb[i * cb + j] += g[i * (ca + cb) + ca + j];
    }
  });
}

Value select_time(Value p, std::size_t t_index) {
  Tape& t = tape_of(p);
  const Tensor& pv = p.val();
  require_rank(pv, 3, "select_time");
  std::size_t b = pv.extent(0), n = pv.extent(1), d = pv.extent(2);
  if (t_index >= n)
    throw Error(Error::Kind::bounds, "select_time: index " +
                                         std::to_string(t_index) +
                                         " out of range for n=" + std::to_string(n));
  Tensor out({b, d});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = pv(i, t_index, j);
  std::size_t pp = p.node();
  return t.make(std::move(out), [pp, b, n, d, t_index](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gp = tp.grad(pp);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j)
        gp[(i * n + t_index) * d + j] += g[i * d + j];
  });
}

Value select_col(Value m, std::size_t c) {
  Tape& t = tape_of(m);
  const Tensor& mv = m.val();
  require_rank(mv, 2, "select_col");
  std::size_t r = mv.extent(0), cols = mv.extent(1);
  if (c >= cols)
    throw Error(Error::Kind::bounds, "select_col: column " + std::to_string(c) +
                                         " out of range for " + std::to_string(cols));
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) out[i] = mv(i, c);
  std::size_t pm = m.node();
  return t.make(std::move(out), [pm, r, cols, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gm = tp.grad(pm);
    for (std::size_t i = 0; i < r; ++i) gm[i * cols + c] += g[i];
  });
}

Value stack_cols(const std::vector<Value>& cols) {
  if (cols.empty())
    throw Error(Error::Kind::contract, "stack_cols: no columns given");
  Tape& t = tape_of(cols[0]);
  std::size_t r = cols[0].val().size();
  std::vector<std::size_t> parents;
  parents.reserve(cols.size());
  for (const Value& v : cols) {
    (void)same_tape(cols[0], v);
    require_shape(v.val(), {r}, "stack_cols column");
    parents.push_back(v.node());
  }
  std::size_t l = cols.size();
  Tensor out({r, l});
  for (std::size_t c = 0; c < l; ++c) {
    const Tensor& col = cols[c].val();
    for (std::size_t i = 0; i < r; ++i) out(i, c) = col[i];
  }
  return t.make(std::move(out), [parents, r, l](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t c = 0; c < l; ++c) {
      Tensor& gc = tp.grad(parents[c]);
      for (std::size_t i = 0; i < r; ++i) gc[i] += g[i * l + c];
    }
  });
}

// ---------------------------------------------------------------------------
// normalization / attention
// ---------------------------------------------------------------------------

Value softmax_temp(Value v, double tau) {
  Tape& t = tape_of(v);
  const Tensor& vv = v.val();
  if (vv.rank() < 1 || vv.size() < 1)
    throw Error(Error::Kind::contract, "softmax_temp: empty input");
  Tensor out = fn::softmax_temp(vv, tau);
  std::size_t rows = vv.rank() == 2 ? vv.extent(0) : 1;
  std::size_t cols = vv.rank() == 2 ? vv.extent(1) : vv.extent(0);
  std::size_t pv = v.node();
  return t.make(std::move(out), [pv, rows, cols, tau](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& p = tp.value(self);
    Tensor& gv = tp.grad(pv);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* pr = p.data() + r * cols;
      const double* gr = g.data() + r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * pr[j];
      for (std::size_t j = 0; j < cols; ++j)
        gv[r * cols + j] += tau * pr[j] * (gr[j] - dot);
    }
  });
}

Value rms_norm(Value h, Value gain, Value bias, double eps) {
  if (eps < 0.0) throw Error(Error::Kind::config, "rms_norm: eps must be >= 0");
  Tape& t = same_tape(h, gain);
  (void)same_tape(h, bias);
  const Tensor& hv = h.val();
  if (hv.rank() != 1 && hv.rank() != 2)
    throw Error(Error::Kind::shape, "rms_norm: rank-1 or rank-2 input required");
  std::size_t rows = hv.rank() == 2 ? hv.extent(0) : 1;
  std::size_t d = hv.rank() == 2 ? hv.extent(1) : hv.extent(0);
  require_shape(gain.val(), {d}, "rms_norm gain");
  require_shape(bias.val(), {d}, "rms_norm bias");
  const Tensor& gv = gain.val();
  const Tensor& bv = bias.val();
  Tensor out(hv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* hr = hv.data() + r * d;
    double* o = out.data() + r * d;
    double ms = 0.0;
    for (std::size_t j = 0; j < d; ++j) ms += hr[j] * hr[j];
    double rms = std::sqrt(ms / static_cast<double>(d) + eps);
    for (std::size_t j = 0; j < d; ++j) o[j] = gv[j] * hr[j] / rms + bv[j];
  }
  std::size_t ph = h.node(), pg = gain.node(), pb = bias.node();
  return t.make(std::move(out), [ph, pg, pb, rows, d, eps](Tape& tp,
                                                           std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& hv = tp.value(ph);
    const Tensor& gainv = tp.value(pg);
    Tensor& gh = tp.grad(ph);
    Tensor& gg = tp.grad(pg);
    Tensor& gb = tp.grad(pb);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* hr = hv.data() + r * d;
      const double* gr = g.data() + r * d;
      double ms = 0.0;
      for (std::size_t j = 0; j < d; ++j) ms += hr[j] * hr[j];
      double rms = std::sqrt(ms / static_cast<double>(d) + eps);
      double dot = 0.0;  // sum_j g_j * gain_j * h_j
      for (std::size_t j = 0; j < d; ++j) dot += gr[j] * gainv[j] * hr[j];
      double inv_r = 1.0 / rms;
      double inv_r3d = 1.0 / (rms * rms * rms * static_cast<double>(d));
      for (std::size_t j = 0; j < d; ++j) {
        gh[r * d + j] += gr[j] * gainv[j] * inv_r - hr[j] * dot * inv_r3d;
        gg[j] += gr[j] * hr[j] * inv_r;
        gb[j] += gr[j];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Value cross_entropy(Value logits, const std::vector<int>& labels) {
  Tape& t = tape_of(logits);
  const Tensor& lv = logits.val();
  require_rank(lv, 2, "cross_entropy logits");
  std::size_t b = lv.extent(0), k = lv.extent(1);
  if (labels.size() != b)
    throw Error(Error::Kind::shape,
                "cross_entropy: " + std::to_string(labels.size()) +
                    " labels for batch " + std::to_string(b));
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw Error(Error::Kind::label,
                  "label " + std::to_string(labels[i]) + " at index " +
                      std::to_string(i) + " outside [0," + std::to_string(k) + ")");
  }
  // Fused log-sum-exp keeps the per-row loss exact for saturated logits.
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = lv.data() + i * k;
    double m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - m);
    total += m + std::log(sum) - row[labels[i]];
  }
  double inv_b = 1.0 / static_cast<double>(b);
  std::size_t pl = logits.node();
  return t.make(Tensor::scalar(total * inv_b),
                [pl, b, k, labels, inv_b](Tape& tp, std::size_t self) {
                  double g = tp.grad(self)[0];
                  const Tensor& lv = tp.value(pl);
                  Tensor& gl = tp.grad(pl);
                  Tensor probs = fn::softmax_rows(lv);
                  for (std::size_t i = 0; i < b; ++i) {
                    for (std::size_t j = 0; j < k; ++j) {
                      double delta = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
                      gl[i * k + j] += g * inv_b * (probs(i, j) - delta);
                    }
                  }
                });
}

Value bce(Value p, double target) {
  Tape& t = tape_of(p);
  const Tensor& pv = p.val();
  if (pv.size() != 1)
    throw Error(Error::Kind::contract, "bce: scalar probability required");
  double q = std::clamp(pv[0], 1e-15, 1.0 - 1e-15);
  double loss = -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
  std::size_t pp = p.node();
  return t.make(Tensor::scalar(loss), [pp, target](Tape& tp, std::size_t self) {
    double g = tp.grad(self)[0];
    double q = std::clamp(tp.value(pp)[0], 1e-15, 1.0 - 1e-15);
    tp.grad(pp)[0] += g * (q - target) / (q * (1.0 - q));
  });
}

// ---------------------------------------------------------------------------
// signal path
// ---------------------------------------------------------------------------

std::size_t patch_count(std::size_t length, std::size_t window,
                        std::size_t stride) {
  if (window < 1 || window > length)
    throw Error(Error::Kind::config,
                "patch window " + std::to_string(window) +
                    " outside [1," + std::to_string(length) + "]");
  if (stride < 1 || stride > window)
    throw Error(Error::Kind::config, "patch stride " + std::to_string(stride) +
                                         " outside [1," + std::to_string(window) + "]");
  return (length - window) / stride + 1;
}

Value patchify(Value z, std::size_t window, std::size_t stride) {
  Tape& t = tape_of(z);
  const Tensor& zv = z.val();
  require_rank(zv, 2, "patchify");
  std::size_t b = zv.extent(0), len = zv.extent(1);
  std::size_t n = patch_count(len, window, stride);
  Tensor out({b, n, window});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t j = 0; j < window; ++j)
        out(i, p, j) = zv(i, p * stride + j);
  std::size_t pz = z.node();
  return t.make(std::move(out),
                [pz, b, len, n, window, stride](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad(self);
                  Tensor& gz = tp.grad(pz);
                  for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t p = 0; p < n; ++p)
                      for (std::size_t j = 0; j < window; ++j)
                        gz[i * len + p * stride + j] +=
                            g[(i * n + p) * window + j];
                });
}

Value adaptive_pool(Value p, std::size_t dim) {
  Tape& t = tape_of(p);
  const Tensor& pv = p.val();
  require_rank(pv, 3, "adaptive_pool");
  std::size_t b = pv.extent(0), n = pv.extent(1), w = pv.extent(2);
  if (dim < 1 || dim > w)
    throw Error(Error::Kind::config, "adaptive_pool: target dim " +
                                         std::to_string(dim) +
                                         " outside [1," + std::to_string(w) + "]");
  // Bin j covers [floor(j*w/d), floor((j+1)*w/d)); d == w is the identity.
  std::vector<std::size_t> bounds(dim + 1);
  for (std::size_t j = 0; j <= dim; ++j) bounds[j] = j * w / dim;
  Tensor out({b, n, dim});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t j = 0; j < dim; ++j) {
        double acc = 0.0;
        for (std::size_t u = bounds[j]; u < bounds[j + 1]; ++u)
          acc += pv(i, q, u);
        out(i, q, j) = acc / static_cast<double>(bounds[j + 1] - bounds[j]);
      }
  std::size_t pp = p.node();
  return t.make(std::move(out),
                [pp, b, n, w, dim, bounds](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad(self);
                  Tensor& gp = tp.grad(pp);
                  for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t q = 0; q < n; ++q)
                      for (std::size_t j = 0; j < dim; ++j) {
                        double share = g[(i * n + q) * dim + j] /
                                       static_cast<double>(bounds[j + 1] - bounds[j]);
                        for (std::size_t u = bounds[j]; u < bounds[j + 1]; ++u)
                          gp[(i * n + q) * w + u] += share;
                      }
                });
}

Value mul_gate(Value p, Value gate) {
  Tape& t = same_tape(p, gate);
  const Tensor& pv = p.val();
  const Tensor& gv = gate.val();
  require_rank(pv, 3, "mul_gate patches");
  require_shape(gv, {pv.extent(0), pv.extent(2)}, "mul_gate gate");
  std::size_t b = pv.extent(0), n = pv.extent(1), d = pv.extent(2);
  Tensor out(pv.shape());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t j = 0; j < d; ++j)
        out(i, q, j) = pv(i, q, j) * gv(i, j);
  std::size_t pp = p.node(), pg = gate.node();
  return t.make(std::move(out), [pp, pg, b, n, d](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& pv = tp.value(pp);
    const Tensor& gatev = tp.value(pg);
    Tensor& gp = tp.grad(pp);
    Tensor& gg = tp.grad(pg);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t q = 0; q < n; ++q)
        for (std::size_t j = 0; j < d; ++j) {
          std::size_t idx = (i * n + q) * d + j;
          gp[idx] += g[idx] * gatev[i * d + j];
          gg[i * d + j] += g[idx] * pv[idx];
        }
  });
}

Value conv_temporal(Value x, Value kernels) {
  Tape& t = same_tape(x, kernels);
  const Tensor& xv = x.val();
  const Tensor& kv = kernels.val();
  require_rank(xv, 3, "conv_temporal input");
  require_rank(kv, 2, "conv_temporal kernels");
  std::size_t b = xv.extent(0), c = xv.extent(1), len = xv.extent(2);
  std::size_t f = kv.extent(0), klen = kv.extent(1);
  if (klen % 2 == 0)
    throw Error(Error::Kind::config,
                "conv_temporal: kernel length " + std::to_string(klen) + " must be odd");
  if (klen > len)
    throw Error(Error::Kind::config,
                "conv_temporal: kernel length " + std::to_string(klen) +
                    " exceeds signal length " + std::to_string(len));
  std::size_t half = klen / 2;
  Tensor out({b, f, c, len});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t fi = 0; fi < f; ++fi) {
      const double* ker = kv.data() + fi * klen;
      for (std::size_t ci = 0; ci < c; ++ci) {
        const double* sig = xv.data() + (i * c + ci) * len;
        double* o = out.data() + ((i * f + fi) * c + ci) * len;
        for (std::size_t ti = 0; ti < len; ++ti) {
          double acc = 0.0;
          std::size_t u0 = ti >= half ? 0 : half - ti;
          std::size_t u1 = std::min(klen, len + half - ti);
          for (std::size_t u = u0; u < u1; ++u)
            acc += ker[u] * sig[ti + u - half];
          o[ti] = acc;
        }
      }
    }
  std::size_t px = x.node(), pk = kernels.node();
  return t.make(std::move(out),
                [px, pk, b, c, len, f, klen, half](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad(self);
                  const Tensor& xv = tp.value(px);
                  const Tensor& kv = tp.value(pk);
                  Tensor& gx = tp.grad(px);
                  Tensor& gk = tp.grad(pk);
                  for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t fi = 0; fi < f; ++fi) {
                      const double* ker = kv.data() + fi * klen;
                      double* gker = gk.data() + fi * klen;
                      for (std::size_t ci = 0; ci < c; ++ci) {
                        const double* sig = xv.data() + (i * c + ci) * len;
                        double* gsig = gx.data() + (i * c + ci) * len;
                        const double* go = g.data() + ((i * f + fi) * c + ci) * len;
                        for (std::size_t ti = 0; ti < len; ++ti) {
                          double gt = go[ti];
                          if (gt == 0.0) continue;
                          std::size_t u0 = ti >= half ? 0 : half - ti;
                          std::size_t u1 = std::min(klen, len + half - ti);
                          for (std::size_t u = u0; u < u1; ++u) {
                            gsig[ti + u - half] += gt * ker[u];
                            gker[u] += gt * sig[ti + u - half];
                          }
                        }
                      }
                    }
                });
}

Value spatial_collapse(Value u, Value weights) {
  Tape& t = same_tape(u, weights);
  const Tensor& uv = u.val();
  const Tensor& wv = weights.val();
  require_rank(uv, 4, "spatial_collapse input");
  require_shape(wv, {uv.extent(1), uv.extent(2)}, "spatial_collapse weights");
  std::size_t b = uv.extent(0), f = uv.extent(1), c = uv.extent(2),
              len = uv.extent(3);
  Tensor out({b, f, len});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t fi = 0; fi < f; ++fi) {
      double* o = out.data() + (i * f + fi) * len;
      for (std::size_t ci = 0; ci < c; ++ci) {
        double w = wv(fi, ci);
        const double* in = uv.data() + ((i * f + fi) * c + ci) * len;
        for (std::size_t ti = 0; ti < len; ++ti) o[ti] += w * in[ti];
      }
    }
  std::size_t pu = u.node(), pw = weights.node();
  return t.make(std::move(out),
                [pu, pw, b, f, c, len](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad(self);
                  const Tensor& uv = tp.value(pu);
                  const Tensor& wv = tp.value(pw);
                  Tensor& gu = tp.grad(pu);
                  Tensor& gw = tp.grad(pw);
                  for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t fi = 0; fi < f; ++fi) {
                      const double* go = g.data() + (i * f + fi) * len;
                      for (std::size_t ci = 0; ci < c; ++ci) {
                        double w = wv(fi, ci);
                        const double* in = uv.data() + ((i * f + fi) * c + ci) * len;
                        double* gin = gu.data() + ((i * f + fi) * c + ci) * len;
                        double acc = 0.0;
                        for (std::size_t ti = 0; ti < len; ++ti) {
                          gin[ti] += go[ti] * w;
                          acc += go[ti] * in[ti];
                        }
                        gw[fi * c + ci] += acc;
                      }
                    }
                });
}

Value mean_pool_time(Value x, std::size_t stride) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.val();
  require_rank(xv, 3, "mean_pool_time");
  std::size_t b = xv.extent(0), f = xv.extent(1), len = xv.extent(2);
  if (stride < 1 || len % stride != 0)
    throw Error(Error::Kind::config,
                "mean_pool_time: length " + std::to_string(len) +
                    " not divisible by stride " + std::to_string(stride));
  std::size_t out_len = len / stride;
  double inv = 1.0 / static_cast<double>(stride);
  Tensor out({b, f, out_len});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t fi = 0; fi < f; ++fi) {
      const double* in = xv.data() + (i * f + fi) * len;
      double* o = out.data() + (i * f + fi) * out_len;
      for (std::size_t j = 0; j < out_len; ++j) {
        double acc = 0.0;
        for (std::size_t u = 0; u < stride; ++u) acc += in[j * stride + u];
        o[j] = acc * inv;
      }
    }
  std::size_t px = x.node();
  return t.make(std::move(out),
                [px, b, f, len, out_len, stride, inv](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad(self);
                  Tensor& gx = tp.grad(px);
                  for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t fi = 0; fi < f; ++fi) {
                      double* gin = gx.data() + (i * f + fi) * len;
                      const double* go = g.data() + (i * f + fi) * out_len;
                      for (std::size_t j = 0; j < out_len; ++j)
                        for (std::size_t u = 0; u < stride; ++u)
                          gin[j * stride + u] += go[j] * inv;
                    }
                });
}

}  // namespace cyc
