#include "fw/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace fw {

namespace {

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor argument");
}

bool on_tape(const Tensor& t, const Tape* tp) {
  return t.tape_uid() == tp->uid() && t.node_id() >= 0;
}

// An input participates in gradient flow if it is a trainable leaf or was
// itself produced on the active tape.
bool tracked(const Tensor& t, const Tape* tp) {
  return t.defined() && (t.requires_grad() || on_tape(t, tp));
}

std::int64_t node_of(const Tensor& t, const Tape* tp) {
  return on_tape(t, tp) ? t.node_id() : -1;
}

void attach(Tensor& out, Tape* tp, std::int64_t node) {
  out.storage()->tape_uid = tp->uid();
  out.storage()->node = node;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];

  if (Tape* tp = Tape::active()) {
    bool ta = tracked(a, tp), tb = tracked(b, tp);
    if (ta || tb) {
      auto id = tp->record("add", {node_of(a, tp), node_of(b, tp)}, out,
                           [a, b, out, ta, tb]() mutable {
                             const double* g = out.grad();
                             if (!g) return;
                             if (ta) {
                               double* ga = a.ensure_grad();
                               for (std::size_t i = 0; i < out.size(); ++i) ga[i] += g[i];
                             }
                             if (tb) {
                               double* gb = b.ensure_grad();
                               for (std::size_t i = 0; i < out.size(); ++i) gb[i] += g[i];
                             }
                           });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_defined(a, "sub");
  require_defined(b, "sub");
  if (a.shape() != b.shape()) {
    throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] - pb[i];

  if (Tape* tp = Tape::active()) {
    bool ta = tracked(a, tp), tb = tracked(b, tp);
    if (ta || tb) {
      auto id = tp->record("sub", {node_of(a, tp), node_of(b, tp)}, out,
                           [a, b, out, ta, tb]() mutable {
                             const double* g = out.grad();
                             if (!g) return;
                             if (ta) {
                               double* ga = a.ensure_grad();
                               for (std::size_t i = 0; i < out.size(); ++i) ga[i] += g[i];
                             }
                             if (tb) {
                               double* gb = b.ensure_grad();
                               for (std::size_t i = 0; i < out.size(); ++i) gb[i] -= g[i];
                             }
                           });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];

  if (Tape* tp = Tape::active()) {
    bool ta = tracked(a, tp), tb = tracked(b, tp);
    if (ta || tb) {
      auto id = tp->record("mul", {node_of(a, tp), node_of(b, tp)}, out,
                           [a, b, out, ta, tb]() mutable {
                             const double* g = out.grad();
                             if (!g) return;
                             if (ta) {
                               double* ga = a.ensure_grad();
                               const double* pb2 = b.data();
                               for (std::size_t i = 0; i < out.size(); ++i) ga[i] += g[i] * pb2[i];
                             }
                             if (tb) {
                               double* gb = b.ensure_grad();
                               const double* pa2 = a.data();
                               for (std::size_t i = 0; i < out.size(); ++i) gb[i] += g[i] * pa2[i];
                             }
                           });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor scalar_mul(const Tensor& x, double c) {
  require_defined(x, "scalar_mul");
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = c * px[i];

  if (Tape* tp = Tape::active()) {
    if (tracked(x, tp)) {
      auto id = tp->record("scalar_mul", {node_of(x, tp)}, out, [x, out, c]() mutable {
        const double* g = out.grad();
        if (!g) return;
        double* gx = x.ensure_grad();
        for (std::size_t i = 0; i < out.size(); ++i) gx[i] += c * g[i];
      });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor scale(const Tensor& x, const Tensor& s) {
  require_defined(x, "scale");
  require_defined(s, "scale");
  if (s.size() != 1) {
    throw ContractError("scale: scale factor must be a scalar tensor, got " +
                        shape_str(s.shape()));
  }
  const double sv = s[0];
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = sv * px[i];

  if (Tape* tp = Tape::active()) {
    bool tx = tracked(x, tp), ts = tracked(s, tp);
    if (tx || ts) {
      auto id = tp->record("scale", {node_of(x, tp), node_of(s, tp)}, out,
                           [x, s, out, tx, ts, sv]() mutable {
                             const double* g = out.grad();
                             if (!g) return;
                             if (tx) {
                               double* gx = x.ensure_grad();
                               for (std::size_t i = 0; i < out.size(); ++i) gx[i] += sv * g[i];
                             }
                             if (ts) {
                               double* gs = s.ensure_grad();
                               const double* px2 = x.data();
                               double acc = 0.0;
                               for (std::size_t i = 0; i < out.size(); ++i) acc += px2[i] * g[i];
                               gs[0] += acc;
                             }
                           });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor transpose(const Tensor& m) {
  require_defined(m, "transpose");
  if (m.rank() != 2) {
    throw ShapeError("transpose: rank-2 tensor required, got " + shape_str(m.shape()));
  }
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  Tensor out(Shape{c, r});
  const double* pm = m.data();
  double* po = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) po[j * r + i] = pm[i * c + j];

  if (Tape* tp = Tape::active()) {
    if (tracked(m, tp)) {
      auto id = tp->record("transpose", {node_of(m, tp)}, out, [m, out, r, c]() mutable {
        const double* g = out.grad();
        if (!g) return;
        double* gm = m.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += g[j * r + i];
      });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape to) {
  require_defined(x, "reshape");
  if (shape_numel(to) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(to));
  }
  Tensor out(std::move(to));
  std::copy(x.data(), x.data() + x.size(), out.data());

  if (Tape* tp = Tape::active()) {
    if (tracked(x, tp)) {
      auto id = tp->record("reshape", {node_of(x, tp)}, out, [x, out]() mutable {
        const double* g = out.grad();
        if (!g) return;
        double* gx = x.ensure_grad();
        for (std::size_t i = 0; i < out.size(); ++i) gx[i] += g[i];
      });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor flatten(const Tensor& x) {
  require_defined(x, "flatten");
  return reshape(x, Shape{x.size()});
}

Tensor concat(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("concat: empty input list");
  std::size_t total = 0;
  for (const auto& x : xs) {
    require_defined(x, "concat");
    if (x.rank() != 1) {
      throw ShapeError("concat: rank-1 pieces required, got " + shape_str(x.shape()));
    }
    total += x.size();
  }
  Tensor out(Shape{total});
  double* po = out.data();
  std::size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x.data(), x.data() + x.size(), po + off);
    off += x.size();
  }

  if (Tape* tp = Tape::active()) {
    bool any = false;
    std::vector<char> flags(xs.size(), 0);
    std::vector<std::int64_t> ins(xs.size(), -1);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      flags[i] = tracked(xs[i], tp) ? 1 : 0;
      ins[i] = node_of(xs[i], tp);
      any = any || flags[i];
    }
    if (any) {
      auto parts = xs;  // keep the handles alive in the closure
      auto id = tp->record("concat", std::move(ins), out,
                           [parts, out, flags]() mutable {
                             const double* g = out.grad();
                             if (!g) return;
                             std::size_t off2 = 0;
                             for (std::size_t i = 0; i < parts.size(); ++i) {
                               if (flags[i]) {
                                 double* gp = parts[i].ensure_grad();
                                 for (std::size_t j = 0; j < parts[i].size(); ++j)
                                   gp[j] += g[off2 + j];
                               }
                               off2 += parts[i].size();
                             }
                           });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double acc = 0.0;
  const double* px = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += px[i];
  Tensor out = Tensor::scalar(acc);

  if (Tape* tp = Tape::active()) {
    if (tracked(x, tp)) {
      auto id = tp->record("sum", {node_of(x, tp)}, out, [x, out]() mutable {
        const double* g = out.grad();
        if (!g) return;
        double* gx = x.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[0];
      });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  if (x.size() == 0) throw ContractError("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(x.size());
  double acc = 0.0;
  const double* px = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += px[i];
  Tensor out = Tensor::scalar(acc * inv);

  if (Tape* tp = Tape::active()) {
    if (tracked(x, tp)) {
      auto id = tp->record("mean", {node_of(x, tp)}, out, [x, out, inv]() mutable {
        const double* g = out.grad();
        if (!g) return;
        double* gx = x.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[0] * inv;
      });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: rank-2 tensors required, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimension mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor out(Shape{m, n});
  {
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      double* orow = po + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = pa[i * k + p];
        const double* brow = pb + p * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }

  if (Tape* tp = Tape::active()) {
    bool ta = tracked(a, tp), tb = tracked(b, tp);
    if (ta || tb) {
      auto id = tp->record("matmul", {node_of(a, tp), node_of(b, tp)}, out,
                           [a, b, out, ta, tb, m, k, n]() mutable {
                             const double* g = out.grad();
                             if (!g) return;
                             if (ta) {
                               double* ga = a.ensure_grad();
                               const double* pb2 = b.data();
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t p = 0; p < k; ++p) {
                                   const double* grow = g + i * n;
                                   const double* brow = pb2 + p * n;
                                   double acc = 0.0;
                                   for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                                   ga[i * k + p] += acc;
                                 }
                             }
                             if (tb) {
                               double* gb = b.ensure_grad();
                               const double* pa2 = a.data();
                               for (std::size_t p = 0; p < k; ++p)
                                 for (std::size_t i = 0; i < m; ++i) {
                                   const double av = pa2[i * k + p];
                                   const double* grow = g + i * n;
                                   double* gbrow = gb + p * n;
                                   for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                                 }
                             }
                           });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  require_defined(a, "matvec");
  require_defined(x, "matvec");
  if (a.rank() != 2 || x.rank() != 1) {
    throw ShapeError("matvec: need rank-2 matrix and rank-1 vector, got " +
                     shape_str(a.shape()) + " and " + shape_str(x.shape()));
  }
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (x.size() != n) {
    throw ShapeError("matvec: dimension mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(x.shape()));
  }
  Tensor out(Shape{m});
  {
    const double* pa = a.data();
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = pa + i * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * px[j];
      po[i] = acc;
    }
  }

  if (Tape* tp = Tape::active()) {
    bool ta = tracked(a, tp), tx = tracked(x, tp);
    if (ta || tx) {
      auto id = tp->record("matvec", {node_of(a, tp), node_of(x, tp)}, out,
                           [a, x, out, ta, tx, m, n]() mutable {
                             const double* g = out.grad();
                             if (!g) return;
                             if (ta) {
                               double* ga = a.ensure_grad();
                               const double* px2 = x.data();
                               for (std::size_t i = 0; i < m; ++i) {
                                 double* garow = ga + i * n;
                                 const double gi = g[i];
                                 for (std::size_t j = 0; j < n; ++j) garow[j] += gi * px2[j];
                               }
                             }
                             if (tx) {
                               double* gx = x.ensure_grad();
                               const double* pa2 = a.data();
                               for (std::size_t i = 0; i < m; ++i) {
                                 const double* arow = pa2 + i * n;
                                 const double gi = g[i];
                                 for (std::size_t j = 0; j < n; ++j) gx[j] += arow[j] * gi;
                               }
                             }
                           });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor outer(const Tensor& u, const Tensor& v) {
  require_defined(u, "outer");
  require_defined(v, "outer");
  if (u.rank() != 1 || v.rank() != 1) {
    throw ShapeError("outer: rank-1 vectors required, got " + shape_str(u.shape()) +
                     " and " + shape_str(v.shape()));
  }
  const std::size_t m = u.size(), n = v.size();
  Tensor out(Shape{m, n});
  {
    const double* pu = u.data();
    const double* pv = v.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      const double ui = pu[i];
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] = ui * pv[j];
    }
  }

  if (Tape* tp = Tape::active()) {
    bool tu = tracked(u, tp), tv = tracked(v, tp);
    if (tu || tv) {
      auto id = tp->record("outer", {node_of(u, tp), node_of(v, tp)}, out,
                           [u, v, out, tu, tv, m, n]() mutable {
                             const double* g = out.grad();
                             if (!g) return;
                             if (tu) {
                               double* gu = u.ensure_grad();
                               const double* pv2 = v.data();
                               for (std::size_t i = 0; i < m; ++i) {
                                 const double* grow = g + i * n;
                                 double acc = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) acc += grow[j] * pv2[j];
                                 gu[i] += acc;
                               }
                             }
                             if (tv) {
                               double* gv = v.ensure_grad();
                               const double* pu2 = u.data();
                               for (std::size_t i = 0; i < m; ++i) {
                                 const double* grow = g + i * n;
                                 const double ui = pu2[i];
                                 for (std::size_t j = 0; j < n; ++j) gv[j] += ui * grow[j];
                               }
                             }
                           });
      attach(out, tp, id);
    }
  }
  return out;
}

namespace {

Tensor dense_impl(const Tensor& x, const Tensor& w, const Tensor& b, bool has_bias) {
  require_defined(x, "dense");
  require_defined(w, "dense");
  if (w.rank() != 2) {
    throw ShapeError("dense: weight must be rank-2 [in,out], got " + shape_str(w.shape()));
  }
  if (x.rank() != 1 && x.rank() != 2) {
    throw ShapeError("dense: input must be rank-1 or rank-2, got " + shape_str(x.shape()));
  }
  const std::size_t in = w.shape()[0], outd = w.shape()[1];
  const bool batched = x.rank() == 2;
  const std::size_t rows = batched ? x.shape()[0] : 1;
  if ((batched ? x.shape()[1] : x.size()) != in) {
    throw ShapeError("dense: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  }
  if (has_bias) {
    require_defined(b, "dense");
    if (b.rank() != 1 || b.size() != outd) {
      throw ShapeError("dense: bias " + shape_str(b.shape()) + " does not match weight " +
                       shape_str(w.shape()));
    }
  }

  Tensor out(batched ? Shape{rows, outd} : Shape{outd});
  {
    const double* px = x.data();
    const double* pw = w.data();
    double* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double* orow = po + r * outd;
      if (has_bias) {
        const double* pb = b.data();
        std::copy(pb, pb + outd, orow);
      }
      const double* xrow = px + r * in;
      for (std::size_t i = 0; i < in; ++i) {
        const double xv = xrow[i];
        if (xv == 0.0) continue;
        const double* wrow = pw + i * outd;
        for (std::size_t o = 0; o < outd; ++o) orow[o] += xv * wrow[o];
      }
    }
  }

  if (Tape* tp = Tape::active()) {
    bool tx = tracked(x, tp), tw = tracked(w, tp);
    bool tb = has_bias && tracked(b, tp);
    if (tx || tw || tb) {
      auto id = tp->record(
          "dense", {node_of(x, tp), node_of(w, tp), has_bias ? node_of(b, tp) : -1}, out,
          [x, w, b, out, tx, tw, tb, rows, in, outd]() mutable {
            const double* g = out.grad();
            if (!g) return;
            if (tx) {
              double* gx = x.ensure_grad();
              const double* pw2 = w.data();
              for (std::size_t r = 0; r < rows; ++r) {
                const double* grow = g + r * outd;
                double* gxrow = gx + r * in;
                for (std::size_t i = 0; i < in; ++i) {
                  const double* wrow = pw2 + i * outd;
                  double acc = 0.0;
                  for (std::size_t o = 0; o < outd; ++o) acc += grow[o] * wrow[o];
                  gxrow[i] += acc;
                }
              }
            }
            if (tw) {
              double* gw = w.ensure_grad();
              const double* px2 = x.data();
              for (std::size_t r = 0; r < rows; ++r) {
                const double* grow = g + r * outd;
                const double* xrow = px2 + r * in;
                for (std::size_t i = 0; i < in; ++i) {
                  const double xv = xrow[i];
                  if (xv == 0.0) continue;
                  double* gwrow = gw + i * outd;
                  for (std::size_t o = 0; o < outd; ++o) gwrow[o] += xv * grow[o];
                }
              }
            }
            if (tb) {
              double* gb = b.ensure_grad();
              for (std::size_t r = 0; r < rows; ++r) {
                const double* grow = g + r * outd;
                for (std::size_t o = 0; o < outd; ++o) gb[o] += grow[o];
              }
            }
          });
      attach(out, tp, id);
    }
  }
  return out;
}

}  // namespace

Tensor dense(const Tensor& x, const Tensor& w) { return dense_impl(x, w, Tensor(), false); }

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  return dense_impl(x, w, b, true);
}

Tensor leaky_relu(const Tensor& x, double slope) {
  require_defined(x, "leaky_relu");
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ContractError("leaky_relu: slope must lie in (0,1), got " + std::to_string(slope));
  }
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = px[i] >= 0.0 ? px[i] : slope * px[i];

  if (Tape* tp = Tape::active()) {
    if (tracked(x, tp)) {
      auto id = tp->record("leaky_relu", {node_of(x, tp)}, out, [x, out, slope]() mutable {
        const double* g = out.grad();
        if (!g) return;
        double* gx = x.ensure_grad();
        const double* px2 = x.data();
        for (std::size_t i = 0; i < out.size(); ++i)
          gx[i] += g[i] * (px2[i] >= 0.0 ? 1.0 : slope);
      });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor leaky_relu_prime(const Tensor& x, double slope) {
  require_defined(x, "leaky_relu_prime");
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ContractError("leaky_relu_prime: slope must lie in (0,1), got " +
                        std::to_string(slope));
  }
  // Piecewise constant, so it is deliberately not recorded (see ops.hpp).
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = px[i] >= 0.0 ? 1.0 : slope;
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad) {
  require_defined(x, "conv2d");
  require_defined(w, "conv2d");
  if (x.rank() != 3) {
    throw ShapeError("conv2d: input must be [channels,h,w], got " + shape_str(x.shape()));
  }
  if (w.rank() != 4 || w.shape()[2] != 3 || w.shape()[3] != 3) {
    throw ShapeError("conv2d: kernel must be [out,in,3,3], got " + shape_str(w.shape()));
  }
  if (w.shape()[1] != x.shape()[0]) {
    throw ShapeError("conv2d: input channels " + shape_str(x.shape()) +
                     " do not match kernel " + shape_str(w.shape()));
  }
  if (pad != 0 && pad != 1) {
    throw ContractError("conv2d: pad must be 0 or 1, got " + std::to_string(pad));
  }
  const bool has_bias = b.defined();
  const std::size_t co = w.shape()[0], ci = x.shape()[0];
  const std::size_t h = x.shape()[1], wd = x.shape()[2];
  if (has_bias && (b.rank() != 1 || b.size() != co)) {
    throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " does not match kernel " +
                     shape_str(w.shape()));
  }
  const std::size_t p = static_cast<std::size_t>(pad);
  if (h + 2 * p < 3 || wd + 2 * p < 3) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " smaller than 3x3 window");
  }
  const std::size_t ho = h + 2 * p - 2, wo = wd + 2 * p - 2;

  Tensor out(Shape{co, ho, wo});
  {
    const double* px = x.data();
    const double* pw = w.data();
    double* po = out.data();
#pragma omp parallel for schedule(static) if (co * ho * wo * ci > 16384)
    for (std::size_t oc = 0; oc < co; ++oc) {
      const double bias = has_bias ? b.data()[oc] : 0.0;
      double* oplane = po + oc * ho * wo;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) oplane[oy * wo + ox] = bias;
      }
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const double* xplane = px + ic * h * wd;
        const double* kern = pw + (oc * ci + ic) * 9;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const double kv = kern[ky * 3 + kx];
            if (kv == 0.0) continue;
            // output (oy,ox) reads input (oy+ky-p, ox+kx-p)
            for (std::size_t oy = 0; oy < ho; ++oy) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(p);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              double* orow = oplane + oy * wo;
              const double* xrow = xplane + static_cast<std::size_t>(iy) * wd;
              const std::ptrdiff_t shift =
                  static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(p);
              const std::size_t ox0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
              const std::size_t ox1 =
                  std::min<std::size_t>(wo, wd - static_cast<std::size_t>(
                                                    shift > 0 ? shift : 0));
              for (std::size_t ox = ox0; ox < ox1; ++ox)
                orow[ox] += kv * xrow[static_cast<std::size_t>(
                                     static_cast<std::ptrdiff_t>(ox) + shift)];
            }
          }
        }
      }
    }
  }

  if (Tape* tp = Tape::active()) {
    bool txx = tracked(x, tp), tw = tracked(w, tp);
    bool tb = has_bias && tracked(b, tp);
    if (txx || tw || tb) {
      auto id = tp->record(
          "conv2d", {node_of(x, tp), node_of(w, tp), has_bias ? node_of(b, tp) : -1}, out,
          [x, w, b, out, txx, tw, tb, co, ci, h, wd, ho, wo, p]() mutable {
            const double* g = out.grad();
            if (!g) return;
            if (txx) {
              double* gx = x.ensure_grad();
              const double* pw2 = w.data();
#pragma omp parallel for schedule(static) if (co * ho * wo * ci > 16384)
              for (std::size_t ic = 0; ic < ci; ++ic) {
                double* gxplane = gx + ic * h * wd;
                for (std::size_t oc = 0; oc < co; ++oc) {
                  const double* gplane = g + oc * ho * wo;
                  const double* kern = pw2 + (oc * ci + ic) * 9;
                  for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                      const double kv = kern[ky * 3 + kx];
                      if (kv == 0.0) continue;
                      for (std::size_t oy = 0; oy < ho; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) -
                                                  static_cast<std::ptrdiff_t>(p);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        const double* grow = gplane + oy * wo;
                        double* gxrow = gxplane + static_cast<std::size_t>(iy) * wd;
                        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) -
                                                     static_cast<std::ptrdiff_t>(p);
                        const std::size_t ox0 =
                            shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                        const std::size_t ox1 = std::min<std::size_t>(
                            wo, wd - static_cast<std::size_t>(shift > 0 ? shift : 0));
                        for (std::size_t ox = ox0; ox < ox1; ++ox)
                          gxrow[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(ox) +
                                                         shift)] += kv * grow[ox];
                      }
                    }
                  }
                }
              }
            }
            if (tw) {
              double* gw = w.ensure_grad();
              const double* px2 = x.data();
#pragma omp parallel for schedule(static) if (co * ho * wo * ci > 16384)
              for (std::size_t oc = 0; oc < co; ++oc) {
                const double* gplane = g + oc * ho * wo;
                for (std::size_t ic = 0; ic < ci; ++ic) {
                  const double* xplane = px2 + ic * h * wd;
                  double* gkern = gw + (oc * ci + ic) * 9;
                  for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                      double acc = 0.0;
                      for (std::size_t oy = 0; oy < ho; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) -
                                                  static_cast<std::ptrdiff_t>(p);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        const double* grow = gplane + oy * wo;
                        const double* xrow = xplane + static_cast<std::size_t>(iy) * wd;
                        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) -
                                                     static_cast<std::ptrdiff_t>(p);
                        const std::size_t ox0 =
                            shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                        const std::size_t ox1 = std::min<std::size_t>(
                            wo, wd - static_cast<std::size_t>(shift > 0 ? shift : 0));
                        for (std::size_t ox = ox0; ox < ox1; ++ox)
                          acc += grow[ox] * xrow[static_cast<std::size_t>(
                                                static_cast<std::ptrdiff_t>(ox) + shift)];
                      }
                      gkern[ky * 3 + kx] += acc;
                    }
                  }
                }
              }
            }
            if (tb) {
              double* gb = b.ensure_grad();
              for (std::size_t oc = 0; oc < co; ++oc) {
                const double* gplane = g + oc * ho * wo;
                double acc = 0.0;
                for (std::size_t i = 0; i < ho * wo; ++i) acc += gplane[i];
                gb[oc] += acc;
              }
            }
          });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor maxpool2x2(const Tensor& x) {
  require_defined(x, "maxpool2x2");
  if (x.rank() != 3) {
    throw ShapeError("maxpool2x2: input must be [channels,h,w], got " + shape_str(x.shape()));
  }
  const std::size_t c = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const std::size_t ho = (h + 1) / 2, wo = (wd + 1) / 2;
  Tensor out(Shape{c, ho, wo});
  auto arg = std::make_shared<std::vector<std::size_t>>(c * ho * wo);
  {
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* xplane = px + ch * h * wd;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t besti = 0;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            const std::size_t iy = 2 * oy + dy;
            if (iy >= h) break;
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t ix = 2 * ox + dx;
              if (ix >= wd) break;
              const double v = xplane[iy * wd + ix];
              if (v > best) {
                best = v;
                besti = iy * wd + ix;
              }
            }
          }
          po[(ch * ho + oy) * wo + ox] = best;
          (*arg)[(ch * ho + oy) * wo + ox] = ch * h * wd + besti;
        }
      }
    }
  }

  if (Tape* tp = Tape::active()) {
    if (tracked(x, tp)) {
      auto id = tp->record("maxpool2x2", {node_of(x, tp)}, out, [x, out, arg]() mutable {
        const double* g = out.grad();
        if (!g) return;
        double* gx = x.ensure_grad();
        for (std::size_t i = 0; i < out.size(); ++i) gx[(*arg)[i]] += g[i];
      });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  require_defined(logits, "softmax");
  if (logits.rank() != 1 || logits.size() == 0) {
    throw ShapeError("softmax: non-empty rank-1 input required, got " +
                     shape_str(logits.shape()));
  }
  const std::size_t n = logits.size();
  Tensor out(Shape{n});
  {
    const double* px = logits.data();
    double* po = out.data();
    double m = px[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, px[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      po[i] = std::exp(px[i] - m);
      s += po[i];
    }
    const double inv = 1.0 / s;
    for (std::size_t i = 0; i < n; ++i) po[i] *= inv;
  }

  if (Tape* tp = Tape::active()) {
    if (tracked(logits, tp)) {
      auto id = tp->record("softmax", {node_of(logits, tp)}, out, [logits, out, n]() mutable {
        const double* g = out.grad();
        if (!g) return;
        double* gx = logits.ensure_grad();
        const double* p = out.data();
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += g[i] * p[i];
        for (std::size_t i = 0; i < n; ++i) gx[i] += p[i] * (g[i] - dot);
      });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target) {
  require_defined(logits, "softmax_cross_entropy");
  if (logits.rank() != 1 || logits.size() == 0) {
    throw ShapeError("softmax_cross_entropy: non-empty rank-1 logits required, got " +
                     shape_str(logits.shape()));
  }
  const std::size_t n = logits.size();
  if (target >= n) {
    throw IndexError("softmax_cross_entropy: target " + std::to_string(target) +
                     " out of range for " + std::to_string(n) + " classes");
  }
  const double* px = logits.data();
  double m = px[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, px[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(px[i] - m);
  Tensor out = Tensor::scalar(m + std::log(s) - px[target]);

  if (Tape* tp = Tape::active()) {
    if (tracked(logits, tp)) {
      auto id = tp->record("softmax_cross_entropy", {node_of(logits, tp)}, out,
                           [logits, out, target, n]() mutable {
                             const double* g = out.grad();
                             if (!g) return;
                             double* gx = logits.ensure_grad();
                             const double* px2 = logits.data();
                             double m2 = px2[0];
                             for (std::size_t i = 1; i < n; ++i) m2 = std::max(m2, px2[i]);
                             double s2 = 0.0;
                             for (std::size_t i = 0; i < n; ++i) s2 += std::exp(px2[i] - m2);
                             const double inv = 1.0 / s2;
                             for (std::size_t i = 0; i < n; ++i) {
                               double p = std::exp(px2[i] - m2) * inv;
                               gx[i] += g[0] * (p - (i == target ? 1.0 : 0.0));
                             }
                           });
      attach(out, tp, id);
    }
  }
  return out;
}

Tensor detach(const Tensor& x) {
  require_defined(x, "detach");
  return x.detached();
}

Tensor onehot(std::size_t index, std::size_t n) {
  if (index >= n) {
    throw IndexError("onehot: index " + std::to_string(index) + " out of range for size " +
                     std::to_string(n));
  }
  Tensor t(Shape{n});
  t[index] = 1.0;
  return t;
}

std::size_t argmax(const Tensor& x) {
  require_defined(x, "argmax");
  if (x.size() == 0) throw ContractError("argmax: empty tensor");
  const double* px = x.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (px[i] > px[best]) best = i;
  return best;
}

std::vector<double> softmax_values(const std::vector<double>& logits) {
  if (logits.empty()) throw ContractError("softmax_values: empty input");
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace fw
