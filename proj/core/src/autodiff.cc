#include "fedbook/autodiff.h"

#include <algorithm>
#include <cmath>

#include "fedbook/errors.h"

namespace fedbook {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::Constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::Parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::Record(Tensor value, std::vector<std::size_t> inputs,
                 BackwardFn backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [&](std::size_t i) { return nodes_[i].requires_grad; });
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : nullptr,
                        needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor::Zeros(n.value.shape());
  return n.grad;
}

void Tape::Backward(Var loss) {
  if (loss.tape() != this) throw ContractError("loss recorded on another tape");
  if (value(loss.id()).size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        ShapeToString(value(loss.id()).shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  grad(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

Tensor Tape::Gradient(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor::Zeros(n.value.shape());
  return n.grad;
}

namespace ad {
namespace {

Tape& SameTape(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw ContractError("operands belong to different tapes");
  }
  return *a.tape();
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": " + ShapeToString(a.shape()) +
                         " vs " + ShapeToString(b.shape()));
  }
}

void RequireMatrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + " needs a matrix, got " +
                         ShapeToString(a.shape()));
  }
}

// Accumulates g into the gradient of node `id` if it participates.
void Accumulate(Tape& t, std::size_t id, const Tensor& g) {
  if (!t.requires_grad(id)) return;
  Tensor& dst = t.grad(id);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template <typename Fn>
Var Unary(Var a, Tensor out, Fn local_grad) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.Record(std::move(out), {ia}, [ia, local_grad](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(self);
    Tensor& dx = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * local_grad(x[i], y[i]);
  });
}

}  // namespace

Var Add(Var a, Var b) {
  Tape& t = SameTape(a, b);
  RequireSameShape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.Record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor g = tp.grad(self);
    Accumulate(tp, ia, g);
    Accumulate(tp, ib, g);
  });
}

Var Sub(Var a, Var b) {
  Tape& t = SameTape(a, b);
  RequireSameShape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.Record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    Tensor g = tp.grad(self);
    Accumulate(tp, ia, g);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -g[i];
    Accumulate(tp, ib, g);
  });
}

Var Mul(Var a, Var b) {
  Tape& t = SameTape(a, b);
  RequireSameShape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.Record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor g = tp.grad(self);
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    if (tp.requires_grad(ia)) {
      Tensor& da = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& db = tp.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Var Scale(Var a, double c) { return Affine(a, c, 0.0); }

Var Affine(Var a, double c, double b) {
  Tensor out = a.value();
  for (double& v : out.data()) v = c * v + b;
  return Unary(a, std::move(out), [c](double, double) { return c; });
}

Var AddRowVector(Var a, Var row) {
  Tape& t = SameTape(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  RequireMatrix(av, "add_row_vector");
  if (rv.size() != av.cols()) {
    throw DimensionError("add_row_vector: row of size " + std::to_string(rv.size()) +
                         " for matrix " + ShapeToString(av.shape()));
  }
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv[c];
  const std::size_t ia = a.id(), ir = row.id();
  return t.Record(std::move(out), {ia, ir}, [ia, ir](Tape& tp, std::size_t self) {
    const Tensor g = tp.grad(self);
    Accumulate(tp, ia, g);
    if (tp.requires_grad(ir)) {
      Tensor& dr = tp.grad(ir);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) dr[c] += g(r, c);
    }
  });
}

Var MatMul(Var a, Var b) {
  Tape& t = SameTape(a, b);
  Tensor out = MatMulValue(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.Record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Accumulate(tp, ia, MatMulValue(g, TransposeValue(tp.value(ib))));
    }
    if (tp.requires_grad(ib)) {
      Accumulate(tp, ib, MatMulValue(TransposeValue(tp.value(ia)), g));
    }
  });
}

Var Transpose(Var a) {
  Tape& t = *a.tape();
  Tensor out = TransposeValue(a.value());
  const std::size_t ia = a.id();
  return t.Record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    Accumulate(tp, ia, TransposeValue(tp.grad(self)));
  });
}

Var Square(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= v;
  return Unary(a, std::move(out), [](double x, double) { return 2.0 * x; });
}

Var Pow(Var a, double p) {
  Tensor out = a.value();
  for (double& v : out.data()) {
    if (v < 0.0) throw ContractError("pow of a negative base");
    v = std::pow(v, p);
  }
  return Unary(a, std::move(out), [p](double x, double) {
    if (x > 0.0) return p * std::pow(x, p - 1.0);
    return p == 1.0 ? 1.0 : 0.0;
  });
}

Var Log(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) {
    if (!(v > 0.0)) throw ContractError("log of a non-positive value");
    v = std::log(v);
  }
  return Unary(a, std::move(out), [](double x, double) { return 1.0 / x; });
}

Var Sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  return Unary(a, std::move(out), [](double, double y) { return y * (1.0 - y); });
}

Var Relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return Unary(a, std::move(out), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var SoftmaxRows(Var a) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  const std::size_t n = out.rows(), m = out.cols();
  for (std::size_t r = 0; r < n; ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : row) v /= z;
  }
  const std::size_t ia = a.id();
  return t.Record(std::move(out), {ia}, [ia, n, m](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& dx = tp.grad(ia);
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < m; ++c) dot += g[r * m + c] * y[r * m + c];
      for (std::size_t c = 0; c < m; ++c)
        dx[r * m + c] += y[r * m + c] * (g[r * m + c] - dot);
    }
  });
}

Var RowNorm(Var a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out({n, 1});
  for (std::size_t r = 0; r < n; ++r) out[r] = std::sqrt(Dot(av.row(r), av.row(r)));
  const std::size_t ia = a.id();
  return t.Record(std::move(out), {ia}, [ia, n, m](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    const Tensor& x = tp.value(ia);
    Tensor& dx = tp.grad(ia);
    for (std::size_t r = 0; r < n; ++r) {
      if (y[r] == 0.0) continue;
      for (std::size_t c = 0; c < m; ++c) dx[r * m + c] += g[r] * x[r * m + c] / y[r];
    }
  });
}

Var CosineRows(Var a, Var b) {
  Tape& t = SameTape(a, b);
  RequireSameShape(a.value(), b.value(), "cosine_rows");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out({n, 1});
  for (std::size_t r = 0; r < n; ++r) out[r] = Cosine(av.row(r), bv.row(r));
  const std::size_t ia = a.id(), ib = b.id();
  return t.Record(std::move(out), {ia, ib}, [ia, ib, n, m](Tape& tp, std::size_t self) {
    const Tensor g = tp.grad(self);
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(ib);
    const Tensor& cs = tp.value(self);
    const bool need_a = tp.requires_grad(ia), need_b = tp.requires_grad(ib);
    for (std::size_t r = 0; r < n; ++r) {
      const double nx = std::sqrt(Dot(x.row(r), x.row(r)));
      const double ny = std::sqrt(Dot(y.row(r), y.row(r)));
      if (nx == 0.0 || ny == 0.0) continue;
      // d cos / dx = y / (|x||y|) - cos * x / |x|^2
      for (std::size_t c = 0; c < m; ++c) {
        const double xv = x[r * m + c], yv = y[r * m + c];
        if (need_a) tp.grad(ia)[r * m + c] += g[r] * (yv / (nx * ny) - cs[r] * xv / (nx * nx));
        if (need_b) tp.grad(ib)[r * m + c] += g[r] * (xv / (nx * ny) - cs[r] * yv / (ny * ny));
      }
    }
  });
}

Var Sum(Var a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return t.Record(Tensor::Scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    for (double& v : tp.grad(ia).data()) v += g;
  });
}

Var Mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractError("mean of an empty tensor");
  return Scale(Sum(a), 1.0 / static_cast<double>(n));
}

Var SumRows(Var a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out({n, 1});
  for (std::size_t r = 0; r < n; ++r)
    for (double v : av.row(r)) out[r] += v;
  const std::size_t ia = a.id();
  return t.Record(std::move(out), {ia}, [ia, n, m](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& dx = tp.grad(ia);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) dx[r * m + c] += g[r];
  });
}

Var MaskRows(Var a, std::span<const std::size_t> rows, Var fill) {
  Tape& t = SameTape(a, fill);
  const Tensor& av = a.value();
  RequireMatrix(av, "mask_rows");
  const std::size_t m = av.cols();
  if (fill.value().size() != m) {
    throw DimensionError("mask_rows: fill of size " + std::to_string(fill.value().size()) +
                         " for rows of width " + std::to_string(m));
  }
  std::vector<char> masked(av.rows(), 0);
  for (std::size_t r : rows) {
    if (r >= av.rows()) throw DimensionError("mask_rows: row index out of range");
    masked[r] = 1;
  }
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    if (masked[r])
      for (std::size_t c = 0; c < m; ++c) out(r, c) = fill.value()[c];
  const std::size_t ia = a.id(), iff = fill.id();
  return t.Record(std::move(out), {ia, iff},
                  [ia, iff, m, masked = std::move(masked)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    const bool need_a = tp.requires_grad(ia), need_f = tp.requires_grad(iff);
                    for (std::size_t r = 0; r < masked.size(); ++r) {
                      for (std::size_t c = 0; c < m; ++c) {
                        if (masked[r]) {
                          if (need_f) tp.grad(iff)[c] += g[r * m + c];
                        } else if (need_a) {
                          tp.grad(ia)[r * m + c] += g[r * m + c];
                        }
                      }
                    }
                  });
}

Var GatherHeadRows(Var table, std::size_t head, std::span<const std::size_t> indices) {
  Tape& t = *table.tape();
  const Tensor& tv = table.value();
  if (tv.rank() != 3 || head >= tv.shape()[0]) {
    throw DimensionError("gather_head_rows: bad table " + ShapeToString(tv.shape()) +
                         " for head " + std::to_string(head));
  }
  const std::size_t rows_per_head = tv.shape()[1], m = tv.shape()[2];
  const std::size_t base = head * rows_per_head * m;
  Tensor out({indices.size(), m});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows_per_head) throw DimensionError("gather_head_rows: index out of range");
    for (std::size_t c = 0; c < m; ++c) out(r, c) = tv[base + indices[r] * m + c];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const std::size_t it = table.id();
  return t.Record(std::move(out), {it},
                  [it, base, m, idx = std::move(idx)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    Tensor& dt = tp.grad(it);
                    for (std::size_t r = 0; r < idx.size(); ++r)
                      for (std::size_t c = 0; c < m; ++c) dt[base + idx[r] * m + c] += g[r * m + c];
                  });
}

Var ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat of zero parts");
  Tape& t = *parts[0].tape();
  const std::size_t n = parts[0].value().rows();
  std::vector<std::size_t> widths, ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw ContractError("operands belong to different tapes");
    RequireMatrix(p.value(), "concat_cols");
    if (p.value().rows() != n) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.value().cols());
    ids.push_back(p.id());
    total += p.value().cols();
  }
  Tensor out({n, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
    offset += pv.cols();
  }
  std::vector<std::size_t> inputs = ids;
  return t.Record(std::move(out), std::move(inputs),
                  [ids, widths, n, total](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (tp.requires_grad(ids[k])) {
                        Tensor& d = tp.grad(ids[k]);
                        for (std::size_t r = 0; r < n; ++r)
                          for (std::size_t c = 0; c < widths[k]; ++c)
                            d[r * widths[k] + c] += g[r * total + off + c];
                      }
                      off += widths[k];
                    }
                  });
}

Var StopGradient(Var a) { return a.tape()->Constant(a.value()); }

Var StraightThrough(Var z, Var zq) {
  Tape& t = SameTape(z, zq);
  RequireSameShape(z.value(), zq.value(), "straight_through");
  const std::size_t iz = z.id();
  return t.Record(zq.value(), {iz}, [iz](Tape& tp, std::size_t self) {
    Accumulate(tp, iz, tp.grad(self));
  });
}

}  // namespace ad
}  // namespace fedbook
