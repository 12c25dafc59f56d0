#include "relkit/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "relkit/rng.hpp"

namespace relkit::numerics {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Var Tape::leaf(Tensor v, bool trainable) {
  return push(std::move(v), trainable, nullptr);
}

Var Tape::push(Tensor val, bool wants,
               std::function<void(Tape&, const Node&)> back) {
  Node n;
  n.val = std::move(val);
  n.wants = wants;
  if (wants) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Tensor* Tape::gptr(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.wants) return nullptr;
  if (n.grad.v.empty()) n.grad = Tensor::zeros(n.val.shape);
  n.touched = true;
  return &n.grad;
}

const Tensor& Tape::grad(Var x) {
  Node& n = node(x);
  if (n.grad.v.empty()) n.grad = Tensor::zeros(n.val.shape);
  return n.grad;
}

void Tape::backward(Var loss) {
  Node& root = node(loss);
  if (root.val.numel() != 1)
    throw UsageError("backward: root must be a scalar");
  if (!std::isfinite(root.val[0]))
    throw RuntimeFailure("backward: non-finite loss value");
  if (backward_used_)
    throw UsageError("backward: tape already differentiated; zero_grad() first");
  backward_used_ = true;
  if (!root.wants) return;
  (*gptr(loss.id))[0] += 1.0;
  for (int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.touched && n.back) n.back(*this, n);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) {
    if (!n.grad.v.empty()) std::fill(n.grad.v.begin(), n.grad.v.end(), 0.0);
    n.touched = false;
  }
  backward_used_ = false;
}

// ---------------------------------------------------------------------------
// Elementwise and affine

Var Tape::add(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
  Tensor out = av;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += bv.v[i];
  int32_t pa = a.id, pb = b.id;
  return push(std::move(out), wants(a) || wants(b),
              [pa, pb](Tape& t, const Node& self) {
                if (Tensor* g = t.gptr(pa))
                  for (size_t i = 0; i < g->v.size(); ++i) g->v[i] += self.grad.v[i];
                if (Tensor* g = t.gptr(pb))
                  for (size_t i = 0; i < g->v.size(); ++i) g->v[i] += self.grad.v[i];
              });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (!av.same_shape(bv)) throw ShapeError("sub: shape mismatch");
  Tensor out = av;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= bv.v[i];
  int32_t pa = a.id, pb = b.id;
  return push(std::move(out), wants(a) || wants(b),
              [pa, pb](Tape& t, const Node& self) {
                if (Tensor* g = t.gptr(pa))
                  for (size_t i = 0; i < g->v.size(); ++i) g->v[i] += self.grad.v[i];
                if (Tensor* g = t.gptr(pb))
                  for (size_t i = 0; i < g->v.size(); ++i) g->v[i] -= self.grad.v[i];
              });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (!av.same_shape(bv)) throw ShapeError("mul: shape mismatch");
  Tensor out = av;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= bv.v[i];
  int32_t pa = a.id, pb = b.id;
  return push(std::move(out), wants(a) || wants(b),
              [pa, pb](Tape& t, const Node& self) {
                const Tensor& av2 = t.nodes_[static_cast<size_t>(pa)].val;
                const Tensor& bv2 = t.nodes_[static_cast<size_t>(pb)].val;
                if (Tensor* g = t.gptr(pa))
                  for (size_t i = 0; i < g->v.size(); ++i)
                    g->v[i] += self.grad.v[i] * bv2.v[i];
                if (Tensor* g = t.gptr(pb))
                  for (size_t i = 0; i < g->v.size(); ++i)
                    g->v[i] += self.grad.v[i] * av2.v[i];
              });
}

Var Tape::scale(Var a, double c) {
  Tensor out = val(a);
  for (double& x : out.v) x *= c;
  int32_t pa = a.id;
  return push(std::move(out), wants(a), [pa, c](Tape& t, const Node& self) {
    if (Tensor* g = t.gptr(pa))
      for (size_t i = 0; i < g->v.size(); ++i) g->v[i] += c * self.grad.v[i];
  });
}

Var Tape::add_scalar(Var a, double c) {
  Tensor out = val(a);
  for (double& x : out.v) x += c;
  int32_t pa = a.id;
  return push(std::move(out), wants(a), [pa](Tape& t, const Node& self) {
    if (Tensor* g = t.gptr(pa))
      for (size_t i = 0; i < g->v.size(); ++i) g->v[i] += self.grad.v[i];
  });
}

Var Tape::cmul(Var a, const Tensor& c) {
  const Tensor& av = val(a);
  if (!av.same_shape(c)) throw ShapeError("cmul: shape mismatch");
  Tensor out = av;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= c.v[i];
  int32_t pa = a.id;
  return push(std::move(out), wants(a),
              [pa, c](Tape& t, const Node& self) {
                if (Tensor* g = t.gptr(pa))
                  for (size_t i = 0; i < g->v.size(); ++i)
                    g->v[i] += self.grad.v[i] * c.v[i];
              });
}

Var Tape::cadd(Var a, const Tensor& c) {
  const Tensor& av = val(a);
  if (!av.same_shape(c)) throw ShapeError("cadd: shape mismatch");
  Tensor out = av;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += c.v[i];
  int32_t pa = a.id;
  return push(std::move(out), wants(a), [pa](Tape& t, const Node& self) {
    if (Tensor* g = t.gptr(pa))
      for (size_t i = 0; i < g->v.size(); ++i) g->v[i] += self.grad.v[i];
  });
}

Var Tape::add_row_bias(Var m, Var bias) {
  const Tensor& mv = val(m);
  const Tensor& bv = val(bias);
  int64_t n = mv.rows(), d = mv.cols();
  if (bv.numel() != d) throw ShapeError("add_row_bias: bias width mismatch");
  Tensor out = mv;
  for (int64_t r = 0; r < n; ++r)
    for (int64_t j = 0; j < d; ++j) out.v[static_cast<size_t>(r * d + j)] += bv.v[static_cast<size_t>(j)];
  int32_t pm = m.id, pb = bias.id;
  return push(std::move(out), wants(m) || wants(bias),
              [pm, pb, n, d](Tape& t, const Node& self) {
                if (Tensor* g = t.gptr(pm))
                  for (size_t i = 0; i < g->v.size(); ++i) g->v[i] += self.grad.v[i];
                if (Tensor* g = t.gptr(pb))
                  for (int64_t r = 0; r < n; ++r)
                    for (int64_t j = 0; j < d; ++j)
                      g->v[static_cast<size_t>(j)] += self.grad.v[static_cast<size_t>(r * d + j)];
              });
}

Var Tape::sum_of(std::span<const Var> xs) {
  if (xs.empty()) throw UsageError("sum_of: empty input");
  Tensor out = val(xs[0]);
  bool w = wants(xs[0]);
  for (size_t i = 1; i < xs.size(); ++i) {
    const Tensor& xv = val(xs[i]);
    if (!xv.same_shape(out)) throw ShapeError("sum_of: shape mismatch");
    for (size_t j = 0; j < out.v.size(); ++j) out.v[j] += xv.v[j];
    w = w || wants(xs[i]);
  }
  std::vector<int32_t> ids(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) ids[i] = xs[i].id;
  return push(std::move(out), w, [ids](Tape& t, const Node& self) {
    for (int32_t pid : ids)
      if (Tensor* g = t.gptr(pid))
        for (size_t i = 0; i < g->v.size(); ++i) g->v[i] += self.grad.v[i];
  });
}

// ---------------------------------------------------------------------------
// Matrix ops

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.rank() != 2 || bv.rank() != 2)
    throw ShapeError("matmul: rank-2 operands required");
  int64_t m = av.shape[0], k = av.shape[1];
  if (bv.shape[0] != k) throw ShapeError("matmul: inner dimensions differ");
  int64_t n = bv.shape[1];
  Tensor out = Tensor::zeros({m, n});
  gemm_nn_acc(av.data(), bv.data(), out.data(), m, k, n);
  int32_t pa = a.id, pb = b.id;
  return push(std::move(out), wants(a) || wants(b),
              [pa, pb, m, k, n](Tape& t, const Node& self) {
                const Tensor& av2 = t.nodes_[static_cast<size_t>(pa)].val;
                const Tensor& bv2 = t.nodes_[static_cast<size_t>(pb)].val;
                if (Tensor* g = t.gptr(pa))
                  gemm_nt_acc(self.grad.data(), bv2.data(), g->data(), m, n, k);
                if (Tensor* g = t.gptr(pb))
                  gemm_tn_acc(av2.data(), self.grad.data(), g->data(), m, k, n);
              });
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.rank() != 2 || bv.rank() != 2)
    throw ShapeError("matmul_nt: rank-2 operands required");
  int64_t m = av.shape[0], k = av.shape[1];
  if (bv.shape[1] != k) throw ShapeError("matmul_nt: inner dimensions differ");
  int64_t n = bv.shape[0];
  Tensor out = Tensor::zeros({m, n});
  gemm_nt_acc(av.data(), bv.data(), out.data(), m, k, n);
  int32_t pa = a.id, pb = b.id;
  return push(std::move(out), wants(a) || wants(b),
              [pa, pb, m, k, n](Tape& t, const Node& self) {
                const Tensor& av2 = t.nodes_[static_cast<size_t>(pa)].val;
                const Tensor& bv2 = t.nodes_[static_cast<size_t>(pb)].val;
                if (Tensor* g = t.gptr(pa))
                  gemm_nn_acc(self.grad.data(), bv2.data(), g->data(), m, n, k);
                if (Tensor* g = t.gptr(pb))
                  gemm_tn_acc(self.grad.data(), av2.data(), g->data(), m, n, k);
              });
}

Var Tape::slice_cols(Var a, int64_t c0, int64_t c1) {
  const Tensor& av = val(a);
  int64_t n = av.rows(), d = av.cols();
  if (c0 < 0 || c1 > d || c0 >= c1) throw ShapeError("slice_cols: bad range");
  int64_t w = c1 - c0;
  Tensor out = Tensor::zeros({n, w});
  for (int64_t r = 0; r < n; ++r)
    for (int64_t j = 0; j < w; ++j) out.at(r, j) = av.v[static_cast<size_t>(r * d + c0 + j)];
  int32_t pa = a.id;
  return push(std::move(out), wants(a),
              [pa, c0, n, d, w](Tape& t, const Node& self) {
                if (Tensor* g = t.gptr(pa))
                  for (int64_t r = 0; r < n; ++r)
                    for (int64_t j = 0; j < w; ++j)
                      g->v[static_cast<size_t>(r * d + c0 + j)] += self.grad.v[static_cast<size_t>(r * w + j)];
              });
}

Var Tape::concat_cols(std::span<const Var> xs) {
  if (xs.empty()) throw UsageError("concat_cols: empty input");
  int64_t n = val(xs[0]).rows();
  int64_t total = 0;
  bool w = false;
  for (Var x : xs) {
    if (val(x).rows() != n) throw ShapeError("concat_cols: row count mismatch");
    total += val(x).cols();
    w = w || wants(x);
  }
  Tensor out = Tensor::zeros({n, total});
  struct Piece {
    int32_t id;
    int64_t off;
    int64_t width;
  };
  std::vector<Piece> pieces;
  int64_t off = 0;
  for (Var x : xs) {
    const Tensor& xv = val(x);
    int64_t d = xv.cols();
    for (int64_t r = 0; r < n; ++r)
      for (int64_t j = 0; j < d; ++j) out.at(r, off + j) = xv.v[static_cast<size_t>(r * d + j)];
    pieces.push_back({x.id, off, d});
    off += d;
  }
  return push(std::move(out), w,
              [pieces, n, total](Tape& t, const Node& self) {
                for (const auto& p : pieces) {
                  if (Tensor* g = t.gptr(p.id)) {
                    for (int64_t r = 0; r < n; ++r)
                      for (int64_t j = 0; j < p.width; ++j)
                        g->v[static_cast<size_t>(r * p.width + j)] +=
                            self.grad.v[static_cast<size_t>(r * total + p.off + j)];
                  }
                }
              });
}

Var Tape::stack_rows(std::span<const Var> xs) {
  if (xs.empty()) throw UsageError("stack_rows: empty input");
  int64_t d = val(xs[0]).cols();
  int64_t n = 0;
  bool w = false;
  for (Var x : xs) {
    if (val(x).cols() != d) throw ShapeError("stack_rows: width mismatch");
    n += val(x).rows();
    w = w || wants(x);
  }
  Tensor out = Tensor::zeros({n, d});
  struct Piece {
    int32_t id;
    int64_t row0;
    int64_t nrows;
  };
  std::vector<Piece> pieces;
  int64_t r0 = 0;
  for (Var x : xs) {
    const Tensor& xv = val(x);
    int64_t nr = xv.rows();
    std::copy(xv.v.begin(), xv.v.end(), out.v.begin() + static_cast<size_t>(r0 * d));
    pieces.push_back({x.id, r0, nr});
    r0 += nr;
  }
  return push(std::move(out), w, [pieces, d](Tape& t, const Node& self) {
    for (const auto& p : pieces) {
      if (Tensor* g = t.gptr(p.id)) {
        for (int64_t i = 0; i < p.nrows * d; ++i)
          g->v[static_cast<size_t>(i)] += self.grad.v[static_cast<size_t>(p.row0 * d + i)];
      }
    }
  });
}

Var Tape::take_rows(Var a, std::vector<int64_t> rows) {
  const Tensor& av = val(a);
  int64_t n = av.rows(), d = av.cols();
  Tensor out = Tensor::zeros({static_cast<int64_t>(rows.size()), d});
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= n) throw IndexError("take_rows: row out of range");
    std::copy(av.v.begin() + static_cast<size_t>(rows[r] * d),
              av.v.begin() + static_cast<size_t>((rows[r] + 1) * d),
              out.v.begin() + r * static_cast<size_t>(d));
  }
  int32_t pa = a.id;
  return push(std::move(out), wants(a),
              [pa, rows = std::move(rows), d](Tape& t, const Node& self) {
                if (Tensor* g = t.gptr(pa))
                  for (size_t r = 0; r < rows.size(); ++r)
                    for (int64_t j = 0; j < d; ++j)
                      g->v[static_cast<size_t>(rows[r] * d + j)] +=
                          self.grad.v[r * static_cast<size_t>(d) + static_cast<size_t>(j)];
              });
}

// ---------------------------------------------------------------------------
// Table lookups

Var Tape::embedding_rows(Var table, std::vector<int64_t> ids) {
  const Tensor& tv = val(table);
  if (tv.rank() != 2) throw ShapeError("embedding_rows: table must be rank 2");
  int64_t vsize = tv.shape[0], d = tv.shape[1];
  Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), d});
  for (size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= vsize)
      throw IndexError("embedding_rows: id out of range");
    std::copy(tv.v.begin() + static_cast<size_t>(ids[r] * d),
              tv.v.begin() + static_cast<size_t>((ids[r] + 1) * d),
              out.v.begin() + r * static_cast<size_t>(d));
  }
  int32_t pt = table.id;
  return push(std::move(out), wants(table),
              [pt, ids = std::move(ids), d](Tape& t, const Node& self) {
                if (Tensor* g = t.gptr(pt))
                  for (size_t r = 0; r < ids.size(); ++r)
                    for (int64_t j = 0; j < d; ++j)
                      g->v[static_cast<size_t>(ids[r] * d + j)] +=
                          self.grad.v[r * static_cast<size_t>(d) + static_cast<size_t>(j)];
              });
}

Var Tape::mean_pool_bag(Var table, std::vector<std::vector<int64_t>> bags) {
  const Tensor& tv = val(table);
  if (tv.rank() != 2) throw ShapeError("mean_pool_bag: table must be rank 2");
  int64_t vsize = tv.shape[0], d = tv.shape[1];
  Tensor out = Tensor::zeros({static_cast<int64_t>(bags.size()), d});
  for (size_t r = 0; r < bags.size(); ++r) {
    if (bags[r].empty()) continue;  // empty bag stays a zero row
    double coef = 1.0 / static_cast<double>(bags[r].size());
    for (int64_t id : bags[r]) {
      if (id < 0 || id >= vsize) throw IndexError("mean_pool_bag: id out of range");
      for (int64_t j = 0; j < d; ++j)
        out.v[r * static_cast<size_t>(d) + static_cast<size_t>(j)] +=
            coef * tv.v[static_cast<size_t>(id * d + j)];
    }
  }
  int32_t pt = table.id;
  return push(std::move(out), wants(table),
              [pt, bags = std::move(bags), d](Tape& t, const Node& self) {
                if (Tensor* g = t.gptr(pt))
                  for (size_t r = 0; r < bags.size(); ++r) {
                    if (bags[r].empty()) continue;
                    double coef = 1.0 / static_cast<double>(bags[r].size());
                    for (int64_t id : bags[r])
                      for (int64_t j = 0; j < d; ++j)
                        g->v[static_cast<size_t>(id * d + j)] +=
                            coef * self.grad.v[r * static_cast<size_t>(d) + static_cast<size_t>(j)];
                  }
              });
}

// ---------------------------------------------------------------------------
// Nonlinear

Var Tape::tanh_(Var a) {
  Tensor out = val(a);
  for (double& x : out.v) x = std::tanh(x);
  int32_t pa = a.id;
  return push(std::move(out), wants(a), [pa](Tape& t, const Node& self) {
    if (Tensor* g = t.gptr(pa))
      for (size_t i = 0; i < g->v.size(); ++i) {
        double y = self.val.v[i];
        g->v[i] += (1.0 - y * y) * self.grad.v[i];
      }
  });
}

Var Tape::gelu(Var a) {
  Tensor out = val(a);
  for (double& x : out.v) x = x * 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  int32_t pa = a.id;
  return push(std::move(out), wants(a), [pa](Tape& t, const Node& self) {
    const Tensor& xv = t.nodes_[static_cast<size_t>(pa)].val;
    if (Tensor* g = t.gptr(pa))
      for (size_t i = 0; i < g->v.size(); ++i) {
        double x = xv.v[i];
        double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        g->v[i] += (phi + x * pdf) * self.grad.v[i];
      }
  });
}

Var Tape::exp_(Var a) {
  Tensor out = val(a);
  for (double& x : out.v) x = std::exp(x);
  int32_t pa = a.id;
  return push(std::move(out), wants(a), [pa](Tape& t, const Node& self) {
    if (Tensor* g = t.gptr(pa))
      for (size_t i = 0; i < g->v.size(); ++i)
        g->v[i] += self.val.v[i] * self.grad.v[i];
  });
}

Var Tape::pow_(Var a, double e) {
  Tensor out = val(a);
  for (double& x : out.v) x = std::pow(x, e);
  int32_t pa = a.id;
  return push(std::move(out), wants(a), [pa, e](Tape& t, const Node& self) {
    const Tensor& xv = t.nodes_[static_cast<size_t>(pa)].val;
    if (Tensor* g = t.gptr(pa))
      for (size_t i = 0; i < g->v.size(); ++i)
        g->v[i] += e * std::pow(xv.v[i], e - 1.0) * self.grad.v[i];
  });
}

Var Tape::softmax_rows(Var a) {
  const Tensor& av = val(a);
  int64_t n = av.rows(), d = av.cols();
  Tensor out = av;
  for (int64_t r = 0; r < n; ++r) {
    double* row = out.data() + r * d;
    double mx = row[0];
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (int64_t j = 0; j < d; ++j) row[j] /= z;
  }
  int32_t pa = a.id;
  return push(std::move(out), wants(a), [pa, n, d](Tape& t, const Node& self) {
    if (Tensor* g = t.gptr(pa))
      for (int64_t r = 0; r < n; ++r) {
        const double* y = self.val.data() + r * d;
        const double* gy = self.grad.data() + r * d;
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += gy[j] * y[j];
        double* gx = g->data() + r * d;
        for (int64_t j = 0; j < d; ++j) gx[j] += (gy[j] - s) * y[j];
      }
  });
}

Var Tape::log_softmax_rows(Var a) {
  const Tensor& av = val(a);
  int64_t n = av.rows(), d = av.cols();
  Tensor out = av;
  for (int64_t r = 0; r < n; ++r) {
    double* row = out.data() + r * d;
    double mx = row[0];
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < d; ++j) z += std::exp(row[j] - mx);
    double lse = mx + std::log(z);
    for (int64_t j = 0; j < d; ++j) row[j] -= lse;
  }
  int32_t pa = a.id;
  return push(std::move(out), wants(a), [pa, n, d](Tape& t, const Node& self) {
    if (Tensor* g = t.gptr(pa))
      for (int64_t r = 0; r < n; ++r) {
        const double* y = self.val.data() + r * d;
        const double* gy = self.grad.data() + r * d;
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += gy[j];
        double* gx = g->data() + r * d;
        for (int64_t j = 0; j < d; ++j) gx[j] += gy[j] - std::exp(y[j]) * s;
      }
  });
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  if (eps <= 0.0) throw UsageError("layer_norm: eps must be positive");
  const Tensor& xv = val(x);
  const Tensor& gv = val(gain);
  const Tensor& bv = val(bias);
  int64_t n = xv.rows(), d = xv.cols();
  if (gv.numel() != d || bv.numel() != d)
    throw ShapeError("layer_norm: gain/bias width mismatch");
  Tensor out = Tensor::zeros(xv.shape);
  for (int64_t r = 0; r < n; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (int64_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + eps);
    double* orow = out.data() + r * d;
    for (int64_t j = 0; j < d; ++j)
      orow[j] = (row[j] - mu) * inv * gv.v[static_cast<size_t>(j)] + bv.v[static_cast<size_t>(j)];
  }
  int32_t px = x.id, pg = gain.id, pb = bias.id;
  return push(std::move(out), wants(x) || wants(gain) || wants(bias),
              [px, pg, pb, n, d, eps](Tape& t, const Node& self) {
                const Tensor& xv2 = t.nodes_[static_cast<size_t>(px)].val;
                const Tensor& gv2 = t.nodes_[static_cast<size_t>(pg)].val;
                Tensor* gx = t.gptr(px);
                Tensor* gg = t.gptr(pg);
                Tensor* gb = t.gptr(pb);
                std::vector<double> xhat(static_cast<size_t>(d));
                for (int64_t r = 0; r < n; ++r) {
                  const double* row = xv2.data() + r * d;
                  const double* gy = self.grad.data() + r * d;
                  double mu = 0.0;
                  for (int64_t j = 0; j < d; ++j) mu += row[j];
                  mu /= static_cast<double>(d);
                  double var = 0.0;
                  for (int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
                  var /= static_cast<double>(d);
                  double inv = 1.0 / std::sqrt(var + eps);
                  for (int64_t j = 0; j < d; ++j) xhat[static_cast<size_t>(j)] = (row[j] - mu) * inv;
                  if (gb)
                    for (int64_t j = 0; j < d; ++j) gb->v[static_cast<size_t>(j)] += gy[j];
                  if (gg)
                    for (int64_t j = 0; j < d; ++j)
                      gg->v[static_cast<size_t>(j)] += gy[j] * xhat[static_cast<size_t>(j)];
                  if (gx) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int64_t j = 0; j < d; ++j) {
                      double gh = gy[j] * gv2.v[static_cast<size_t>(j)];
                      m1 += gh;
                      m2 += gh * xhat[static_cast<size_t>(j)];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    double* gxr = gx->data() + r * d;
                    for (int64_t j = 0; j < d; ++j) {
                      double gh = gy[j] * gv2.v[static_cast<size_t>(j)];
                      gxr[j] += inv * (gh - m1 - xhat[static_cast<size_t>(j)] * m2);
                    }
                  }
                }
              });
}

Var Tape::l2_normalize_rows(Var a) {
  const Tensor& av = val(a);
  int64_t n = av.rows(), d = av.cols();
  Tensor out = av;
  for (int64_t r = 0; r < n; ++r) {
    double* row = out.data() + r * d;
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) s += row[j] * row[j];
    if (s == 0.0) throw UsageError("l2_normalize: zero-norm row");
    double inv = 1.0 / std::sqrt(s);
    for (int64_t j = 0; j < d; ++j) row[j] *= inv;
  }
  int32_t pa = a.id;
  return push(std::move(out), wants(a), [pa, n, d](Tape& t, const Node& self) {
    const Tensor& xv = t.nodes_[static_cast<size_t>(pa)].val;
    if (Tensor* g = t.gptr(pa))
      for (int64_t r = 0; r < n; ++r) {
        const double* x = xv.data() + r * d;
        const double* y = self.val.data() + r * d;
        const double* gy = self.grad.data() + r * d;
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += x[j] * x[j];
        double inv = 1.0 / std::sqrt(s);
        double dot = 0.0;
        for (int64_t j = 0; j < d; ++j) dot += gy[j] * y[j];
        double* gx = g->data() + r * d;
        for (int64_t j = 0; j < d; ++j) gx[j] += (gy[j] - y[j] * dot) * inv;
      }
  });
}

Var Tape::dropout(Var a, double p, uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw UsageError("dropout: p must be in [0, 1)");
  if (p == 0.0) return a;
  const Tensor& av = val(a);
  Rng rng(seed);
  std::vector<double> mask(av.v.size());
  double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask) m = rng.uniform01() < p ? 0.0 : keep_scale;
  Tensor out = av;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= mask[i];
  int32_t pa = a.id;
  return push(std::move(out), wants(a),
              [pa, mask = std::move(mask)](Tape& t, const Node& self) {
                if (Tensor* g = t.gptr(pa))
                  for (size_t i = 0; i < g->v.size(); ++i)
                    g->v[i] += self.grad.v[i] * mask[i];
              });
}

// ---------------------------------------------------------------------------
// Reductions and selection

Var Tape::sum(Var a) {
  const Tensor& av = val(a);
  double s = 0.0;
  for (double x : av.v) s += x;
  int32_t pa = a.id;
  return push(Tensor::scalar(s), wants(a), [pa](Tape& t, const Node& self) {
    if (Tensor* g = t.gptr(pa))
      for (double& x : g->v) x += self.grad[0];
  });
}

Var Tape::mean_all(Var a) {
  const Tensor& av = val(a);
  double s = 0.0;
  for (double x : av.v) s += x;
  double coef = 1.0 / static_cast<double>(av.numel());
  int32_t pa = a.id;
  return push(Tensor::scalar(s * coef), wants(a),
              [pa, coef](Tape& t, const Node& self) {
                if (Tensor* g = t.gptr(pa))
                  for (double& x : g->v) x += coef * self.grad[0];
              });
}

Var Tape::select(Var a, int64_t flat_index) {
  const Tensor& av = val(a);
  if (flat_index < 0 || flat_index >= av.numel())
    throw IndexError("select: index out of range");
  int32_t pa = a.id;
  return push(Tensor::scalar(av[flat_index]), wants(a),
              [pa, flat_index](Tape& t, const Node& self) {
                if (Tensor* g = t.gptr(pa)) (*g)[flat_index] += self.grad[0];
              });
}

// ---------------------------------------------------------------------------

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  if (h <= 0.0) throw UsageError("finite_diff_grad: h must be positive");
  Tensor g = Tensor::zeros(x.shape);
  Tensor probe = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double orig = probe[i];
    probe[i] = orig + h;
    double fp = f(probe);
    probe[i] = orig - h;
    double fm = f(probe);
    probe[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace relkit::numerics
