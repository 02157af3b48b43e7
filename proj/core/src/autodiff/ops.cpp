#include "trajsel/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace trajsel::ad {

namespace {

Graph& graph_of(std::string_view op, std::initializer_list<Var> vars) {
  Graph* g = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw ContractError(std::string(op) + ": uninitialized operand");
    if (g && v.graph() != g) throw ContractError(std::string(op) + ": operands from different graphs");
    g = v.graph();
  }
  return *g;
}

[[noreturn]] void dim_error(std::string_view op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " +
                       shape_to_string(b));
}

[[noreturn]] void dim_error(std::string_view op, const Shape& a, const std::string& why) {
  throw DimensionError(std::string(op) + ": shape " + shape_to_string(a) + " " + why);
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) dim_error(op, t.shape(), "must have rank " + std::to_string(rank));
}

void flops(std::uint64_t n) { detail::add_flops(n); }

// C(n,m) += A(n,k) * B(k,m)
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(n,m) += A(k,n)^T * B(k,m)
void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t n,
             std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * n;
    const double* brow = b + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      double* crow = c + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void transpose_into(const double* src, double* dst, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// C(n,m) += A(n,k) * B(m,k)^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, std::vector<double>& scratch) {
  scratch.resize(k * m);
  transpose_into(b, scratch.data(), m, k);
  gemm_nn(a, scratch.data(), c, n, k, m);
}

enum class Broadcast { Same, Row, Col, Scalar };

Broadcast broadcast_kind(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.size() == 1 && b.rank() == 0) return Broadcast::Scalar;
  const bool row_vec = (b.rank() == 1) || (b.rank() == 2 && b.dim(0) == 1);
  if (row_vec && a.rank() >= 1 && b.size() == a.cols()) return Broadcast::Row;
  if (a.rank() >= 2 && b.rank() == a.rank() && b.cols() == 1 && b.size() == a.rows()) return Broadcast::Col;
  dim_error(op, a.shape(), b.shape());
}

// Reduces a full-shape gradient to the broadcast operand's shape.
void accumulate_broadcast(Broadcast kind, const Tensor& g, Tensor& out) {
  switch (kind) {
    case Broadcast::Same:
      for (std::size_t i = 0; i < g.size(); ++i) out[i] += g[i];
      break;
    case Broadcast::Scalar: {
      double s = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
      out[0] += s;
      break;
    }
    case Broadcast::Row: {
      const std::size_t cols = out.size();
      for (std::size_t i = 0; i < g.size(); ++i) out[i % cols] += g[i];
      break;
    }
    case Broadcast::Col: {
      const std::size_t cols = g.cols();
      for (std::size_t i = 0; i < g.size(); ++i) out[i / cols] += g[i];
      break;
    }
  }
}

// `cols` is the extent of the full operand's last axis.
double bvalue(Broadcast kind, const Tensor& b, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::Same: return b[i];
    case Broadcast::Scalar: return b[0];
    case Broadcast::Row: return b[i % b.size()];
    case Broadcast::Col: return b[i / cols];
  }
  return 0.0;
}

}  // namespace

Var matmul(Var a, Var b, bool transpose_b) {
  Graph& g = graph_of("matmul", {a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  std::size_t batch = 1, n = 0, k = 0, m = 0;
  if (av.rank() == 2 && bv.rank() == 2) {
    n = av.dim(0);
    k = av.dim(1);
    const std::size_t bk = transpose_b ? bv.dim(1) : bv.dim(0);
    m = transpose_b ? bv.dim(0) : bv.dim(1);
    if (bk != k) dim_error("matmul", av.shape(), bv.shape());
  } else if (av.rank() == 3 && bv.rank() == 3) {
    batch = av.dim(0);
    n = av.dim(1);
    k = av.dim(2);
    const std::size_t bk = transpose_b ? bv.dim(2) : bv.dim(1);
    m = transpose_b ? bv.dim(1) : bv.dim(2);
    if (bv.dim(0) != batch || bk != k) dim_error("matmul", av.shape(), bv.shape());
  } else {
    dim_error("matmul", av.shape(), bv.shape());
  }
  Shape out_shape = av.rank() == 2 ? Shape{n, m} : Shape{batch, n, m};
  Tensor out(out_shape, 0.0);
  std::vector<double> scratch;
  for (std::size_t s = 0; s < batch; ++s) {
    const double* ap = av.data().data() + s * n * k;
    const double* bp = bv.data().data() + s * k * m;
    double* cp = out.data().data() + s * n * m;
    if (transpose_b) {
      gemm_nt(ap, bp, cp, n, k, m, scratch);
    } else {
      gemm_nn(ap, bp, cp, n, k, m);
    }
  }
  flops(2ull * batch * n * k * m);
  return g.record(Op::MatMul, {a.id(), b.id()}, std::move(out),
                  [batch, n, k, m, transpose_b](Graph& gr, const Graph::Node& self) {
                    const int ia = self.inputs[0], ib = self.inputs[1];
                    const Tensor& A = gr.value(ia);
                    const Tensor& B = gr.value(ib);
                    const Tensor& G = self.grad;
                    std::vector<double> scratch;
                    if (gr.requires_grad(ia)) {
                      Tensor& dA = gr.grad_buffer(ia);
                      for (std::size_t s = 0; s < batch; ++s) {
                        const double* gp = G.data().data() + s * n * m;
                        const double* bp = B.data().data() + s * k * m;
                        double* dap = dA.data().data() + s * n * k;
                        if (transpose_b) {
                          gemm_nn(gp, bp, dap, n, m, k);  // dA = G * B, B is (m,k)
                        } else {
                          gemm_nt(gp, bp, dap, n, m, k, scratch);  // dA = G * B^T
                        }
                      }
                    }
                    if (gr.requires_grad(ib)) {
                      Tensor& dB = gr.grad_buffer(ib);
                      for (std::size_t s = 0; s < batch; ++s) {
                        const double* gp = G.data().data() + s * n * m;
                        const double* ap = A.data().data() + s * n * k;
                        double* dbp = dB.data().data() + s * k * m;
                        if (transpose_b) {
                          gemm_tn(gp, ap, dbp, n, m, k);  // dB = G^T * A, (m,k)
                        } else {
                          gemm_tn(ap, gp, dbp, n, k, m);  // dB = A^T * G, (k,m)
                        }
                      }
                    }
                  });
}

namespace {

template <typename Fwd>
Var binary_elementwise(std::string_view name, Op op, Var a, Var b, Fwd fwd) {
  Graph& g = graph_of(name, {a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(name, av, bv);
  Tensor out(av.shape(), 0.0);
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bvalue(kind, bv, i, cols));
  flops(av.size());
  return g.record(op, {a.id(), b.id()}, std::move(out),
                  [kind, op](Graph& gr, const Graph::Node& self) {
                    const int ia = self.inputs[0], ib = self.inputs[1];
                    const Tensor& G = self.grad;
                    const Tensor& A = gr.value(ia);
                    const Tensor& B = gr.value(ib);
                    if (gr.requires_grad(ia)) {
                      Tensor& dA = gr.grad_buffer(ia);
                      if (op == Op::Mul) {
                        for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] * bvalue(kind, B, i, G.cols());
                      } else {
                        for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i];
                      }
                    }
                    if (gr.requires_grad(ib)) {
                      Tensor local(G.shape(), 0.0);
                      for (std::size_t i = 0; i < G.size(); ++i) {
                        if (op == Op::Mul) {
                          local[i] = G[i] * A[i];
                        } else if (op == Op::Sub) {
                          local[i] = -G[i];
                        } else {
                          local[i] = G[i];
                        }
                      }
                      accumulate_broadcast(kind, local, gr.grad_buffer(ib));
                    }
                  });
}

template <typename Fwd, typename Deriv>
Var unary_elementwise(std::string_view name, Op op, Var a, std::uint64_t cost, Fwd fwd,
                      Deriv deriv) {
  Graph& g = graph_of(name, {a});
  const Tensor& av = a.value();
  Tensor out(av.shape(), 0.0);
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  flops(cost * av.size());
  return g.record(op, {a.id()}, std::move(out), [deriv](Graph& gr, const Graph::Node& self) {
    const int ia = self.inputs[0];
    const Tensor& x = gr.value(ia);
    Tensor& dx = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += self.grad[i] * deriv(x[i], self.value[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_elementwise("add", Op::Add, a, b, [](double x, double y) { return x + y; });
}

Var sub(Var a, Var b) {
  return binary_elementwise("sub", Op::Sub, a, b, [](double x, double y) { return x - y; });
}

Var mul(Var a, Var b) {
  return binary_elementwise("mul", Op::Mul, a, b, [](double x, double y) { return x * y; });
}

Var scale(Var a, double factor) {
  return unary_elementwise(
      "scale", Op::Scale, a, 1, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary_elementwise(
      "add_scalar", Op::AddScalar, a, 1, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Var sigmoid(Var a) {
  return unary_elementwise(
      "sigmoid", Op::Sigmoid, a, 4,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary_elementwise(
      "relu", Op::Relu, a, 1, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var log(Var a) {
  for (double x : a.value().data()) {
    if (!(x > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(x) + " in shape " +
                        shape_to_string(a.value().shape()));
    }
  }
  return unary_elementwise(
      "log", Op::Log, a, 1, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var logit(Var a, double lo) {
  const double hi = 1.0 - lo;
  return unary_elementwise(
      "logit", Op::Logit, a, 3,
      [lo, hi](double x) {
        const double c = std::clamp(x, lo, hi);
        return std::log(c) - std::log1p(-c);
      },
      [lo, hi](double x, double) {
        if (x < lo || x > hi) return 0.0;
        return 1.0 / (x * (1.0 - x));
      });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  Graph& g = graph_of("concat_rows", {parts.front()});
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    graph_of("concat_rows", {parts.front(), p});
    require_rank("concat_rows", p.value(), 2);
    if (p.value().cols() != cols) dim_error("concat_rows", parts.front().shape(), p.shape());
    rows += p.value().rows();
    ids.push_back(p.id());
  }
  Tensor out({rows, cols}, 0.0);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset);
    offset += p.value().size();
  }
  return g.record(Op::ConcatRows, std::move(ids), std::move(out),
                  [](Graph& gr, const Graph::Node& self) {
                    std::size_t offset = 0;
                    for (int id : self.inputs) {
                      const std::size_t n = gr.value(id).size();
                      if (gr.requires_grad(id)) {
                        Tensor& d = gr.grad_buffer(id);
                        for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[offset + i];
                      }
                      offset += n;
                    }
                  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  Graph& g = graph_of("concat_cols", {parts.front()});
  const std::size_t rows = parts.front().value().dim(0);
  std::size_t cols = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    graph_of("concat_cols", {parts.front(), p});
    require_rank("concat_cols", p.value(), 2);
    if (p.value().dim(0) != rows) dim_error("concat_cols", parts.front().shape(), p.shape());
    cols += p.value().dim(1);
    ids.push_back(p.id());
  }
  Tensor out({rows, cols}, 0.0);
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const std::size_t pc = p.value().dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pc; ++c) out.at(r, c0 + c) = p.value().at(r, c);
    c0 += pc;
  }
  return g.record(Op::ConcatCols, std::move(ids), std::move(out),
                  [rows, cols](Graph& gr, const Graph::Node& self) {
                    std::size_t c0 = 0;
                    for (int id : self.inputs) {
                      const std::size_t pc = gr.value(id).dim(1);
                      if (gr.requires_grad(id)) {
                        Tensor& d = gr.grad_buffer(id);
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t c = 0; c < pc; ++c) d.at(r, c) += self.grad[r * cols + c0 + c];
                      }
                      c0 += pc;
                    }
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Graph& g = graph_of("slice_rows", {a});
  const Tensor& av = a.value();
  require_rank("slice_rows", av, 2);
  if (count == 0 || begin + count > av.dim(0)) {
    dim_error("slice_rows", av.shape(),
              "cannot take rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ")");
  }
  const std::size_t cols = av.dim(1);
  Tensor out({count, cols}, 0.0);
  std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(begin * cols), count * cols,
              out.data().begin());
  return g.record(Op::SliceRows, {a.id()}, std::move(out),
                  [begin, cols](Graph& gr, const Graph::Node& self) {
                    Tensor& d = gr.grad_buffer(self.inputs[0]);
                    for (std::size_t i = 0; i < self.grad.size(); ++i) d[begin * cols + i] += self.grad[i];
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Graph& g = graph_of("slice_cols", {a});
  const Tensor& av = a.value();
  require_rank("slice_cols", av, 2);
  if (count == 0 || begin + count > av.dim(1)) {
    dim_error("slice_cols", av.shape(),
              "cannot take cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ")");
  }
  const std::size_t rows = av.dim(0), cols = av.dim(1);
  Tensor out({rows, count}, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = av.at(r, begin + c);
  return g.record(Op::SliceCols, {a.id()}, std::move(out),
                  [begin, rows, cols, count](Graph& gr, const Graph::Node& self) {
                    Tensor& d = gr.grad_buffer(self.inputs[0]);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < count; ++c) d[r * cols + begin + c] += self.grad[r * count + c];
                  });
}

Var reshape(Var a, Shape shape) {
  Graph& g = graph_of("reshape", {a});
  Tensor out = a.value().reshaped(std::move(shape));
  return g.record(Op::Reshape, {a.id()}, std::move(out), [](Graph& gr, const Graph::Node& self) {
    Tensor& d = gr.grad_buffer(self.inputs[0]);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  });
}

Var transpose(Var a) {
  Graph& g = graph_of("transpose", {a});
  const Tensor& av = a.value();
  require_rank("transpose", av, 2);
  const std::size_t rows = av.dim(0), cols = av.dim(1);
  Tensor out({cols, rows}, 0.0);
  transpose_into(av.data().data(), out.data().data(), rows, cols);
  return g.record(Op::Transpose, {a.id()}, std::move(out),
                  [rows, cols](Graph& gr, const Graph::Node& self) {
                    Tensor& d = gr.grad_buffer(self.inputs[0]);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] += self.grad[c * rows + r];
                  });
}

namespace {

// dx = y * (g - sum(g * y)) per row.
void softmax_backward_rows(const Tensor& y, const Tensor& g, Tensor& dx) {
  const std::size_t cols = y.cols(), rows = y.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t o = r * cols;
    double dot = 0.0;
    for (std::size_t c = 0; c < cols; ++c) dot += g[o + c] * y[o + c];
    for (std::size_t c = 0; c < cols; ++c) dx[o + c] += y[o + c] * (g[o + c] - dot);
  }
}

}  // namespace

Var row_softmax(Var a) {
  Graph& g = graph_of("row_softmax", {a});
  const Tensor& av = a.value();
  if (av.rank() == 0) dim_error("row_softmax", av.shape(), "must have rank >= 1");
  const std::size_t cols = av.cols(), rows = av.rows();
  Tensor out(av.shape(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t o = r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, av[o + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[o + c] = std::exp(av[o + c] - mx);
      z += out[o + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[o + c] /= z;
  }
  flops(3ull * av.size());
  return g.record(Op::RowSoftmax, {a.id()}, std::move(out), [](Graph& gr, const Graph::Node& self) {
    softmax_backward_rows(self.value, self.grad, gr.grad_buffer(self.inputs[0]));
  });
}

Var gated_softmax(Var a, Var gate) {
  Graph& g = graph_of("gated_softmax", {a, gate});
  const Tensor& av = a.value();
  const Tensor& gv = gate.value();
  if (av.rank() == 0) dim_error("gated_softmax", av.shape(), "must have rank >= 1");
  const std::size_t cols = av.cols(), rows = av.rows();
  if (gv.size() != cols) dim_error("gated_softmax", av.shape(), gv.shape());
  std::size_t active = 0;
  for (double w : gv.data()) {
    if (!(w >= 0.0)) throw DomainError("gated_softmax: negative gate value " + std::to_string(w));
    if (w > 0.0) ++active;
  }
  if (active == 0) throw DomainError("gated_softmax: every column gated off");

  Tensor out(av.shape(), 0.0);
  // Ungated normalized exponentials e_ij / Z_i, kept for the gate gradient.
  Tensor ratio(av.shape(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t o = r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (gv[c] > 0.0) mx = std::max(mx, av[o + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (gv[c] > 0.0) {
        ratio[o + c] = std::exp(av[o + c] - mx);
        out[o + c] = gv[c] * ratio[o + c];
        z += out[o + c];
      } else {
        ratio[o + c] = std::exp(std::min(av[o + c] - mx, 50.0));
      }
    }
    for (std::size_t c = 0; c < cols; ++c) {
      out[o + c] /= z;
      ratio[o + c] /= z;
    }
  }
  flops(4ull * rows * active);
  return g.record(Op::GatedSoftmax, {a.id(), gate.id()}, std::move(out),
                  [ratio = std::move(ratio), rows, cols](Graph& gr, const Graph::Node& self) {
                    const int ia = self.inputs[0], ig = self.inputs[1];
                    const Tensor& y = self.value;
                    const Tensor& G = self.grad;
                    const bool need_a = gr.requires_grad(ia);
                    const bool need_g = gr.requires_grad(ig);
                    Tensor* dA = need_a ? &gr.grad_buffer(ia) : nullptr;
                    Tensor* dG = need_g ? &gr.grad_buffer(ig) : nullptr;
                    for (std::size_t r = 0; r < rows; ++r) {
                      const std::size_t o = r * cols;
                      double dot = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) dot += G[o + c] * y[o + c];
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double centered = G[o + c] - dot;
                        if (dA) (*dA)[o + c] += y[o + c] * centered;
                        if (dG) (*dG)[c] += ratio[o + c] * centered;
                      }
                    }
                  });
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
  Graph& g = graph_of("layer_norm", {a, gamma, beta});
  const Tensor& av = a.value();
  if (av.rank() == 0) dim_error("layer_norm", av.shape(), "must have rank >= 1");
  const std::size_t cols = av.cols(), rows = av.rows();
  if (gamma.value().size() != cols) dim_error("layer_norm", av.shape(), gamma.shape());
  if (beta.value().size() != cols) dim_error("layer_norm", av.shape(), beta.shape());
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  Tensor out(av.shape(), 0.0);
  Tensor xhat(av.shape(), 0.0);
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t o = r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += av[o + c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = av[o + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      xhat[o + c] = (av[o + c] - mu) * is;
      out[o + c] = xhat[o + c] * gm[c] + bt[c];
    }
  }
  flops(7ull * av.size() + 3ull * rows);
  return g.record(
      Op::LayerNorm, {a.id(), gamma.id(), beta.id()}, std::move(out),
      [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, cols](Graph& gr,
                                                                          const Graph::Node& self) {
        const int ia = self.inputs[0], ig = self.inputs[1], ib = self.inputs[2];
        const Tensor& G = self.grad;
        const Tensor& gm = gr.value(ig);
        if (gr.requires_grad(ig)) {
          Tensor& dg = gr.grad_buffer(ig);
          for (std::size_t i = 0; i < G.size(); ++i) dg[i % cols] += G[i] * xhat[i];
        }
        if (gr.requires_grad(ib)) {
          Tensor& db = gr.grad_buffer(ib);
          for (std::size_t i = 0; i < G.size(); ++i) db[i % cols] += G[i];
        }
        if (gr.requires_grad(ia)) {
          Tensor& dx = gr.grad_buffer(ia);
          const double inv_n = 1.0 / static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t o = r * cols;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dxh = G[o + c] * gm[c];
              m1 += dxh;
              m2 += dxh * xhat[o + c];
            }
            m1 *= inv_n;
            m2 *= inv_n;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dxh = G[o + c] * gm[c];
              dx[o + c] += inv_std[r] * (dxh - m1 - xhat[o + c] * m2);
            }
          }
        }
      });
}

Var sum(Var a) {
  Graph& g = graph_of("sum", {a});
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  flops(a.value().size());
  return g.record(Op::Sum, {a.id()}, Tensor::scalar(s), [](Graph& gr, const Graph::Node& self) {
    Tensor& d = gr.grad_buffer(self.inputs[0]);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[0];
  });
}

Var mean(Var a) {
  Graph& g = graph_of("mean", {a});
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  const double n = static_cast<double>(a.value().size());
  flops(a.value().size());
  return g.record(Op::Mean, {a.id()}, Tensor::scalar(s / n), [n](Graph& gr, const Graph::Node& self) {
    Tensor& d = gr.grad_buffer(self.inputs[0]);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[0] / n;
  });
}

Var mean_pool(Var a, std::size_t group) {
  Graph& g = graph_of("mean_pool", {a});
  const Tensor& av = a.value();
  require_rank("mean_pool", av, 2);
  if (group == 0 || av.dim(0) % group != 0) {
    dim_error("mean_pool", av.shape(), "rows not divisible by group " + std::to_string(group));
  }
  const std::size_t groups = av.dim(0) / group, cols = av.dim(1);
  Tensor out({groups, cols}, 0.0);
  for (std::size_t s = 0; s < groups; ++s) {
    for (std::size_t r = 0; r < group; ++r)
      for (std::size_t c = 0; c < cols; ++c) out.at(s, c) += av.at(s * group + r, c);
    for (std::size_t c = 0; c < cols; ++c) out.at(s, c) /= static_cast<double>(group);
  }
  flops(av.size() + out.size());
  return g.record(Op::MeanPool, {a.id()}, std::move(out),
                  [group, groups, cols](Graph& gr, const Graph::Node& self) {
                    Tensor& d = gr.grad_buffer(self.inputs[0]);
                    const double inv = 1.0 / static_cast<double>(group);
                    for (std::size_t s = 0; s < groups; ++s)
                      for (std::size_t r = 0; r < group; ++r)
                        for (std::size_t c = 0; c < cols; ++c)
                          d.at(s * group + r, c) += self.grad[s * cols + c] * inv;
                  });
}

Var variance(Var a) {
  Graph& g = graph_of("variance", {a});
  const Tensor& av = a.value();
  const double n = static_cast<double>(av.size());
  double mu = 0.0;
  for (double x : av.data()) mu += x;
  mu /= n;
  double v = 0.0;
  for (double x : av.data()) v += (x - mu) * (x - mu);
  v /= n;
  flops(3ull * av.size() + 2);
  return g.record(Op::Variance, {a.id()}, Tensor::scalar(v), [mu, n](Graph& gr, const Graph::Node& self) {
    const Tensor& x = gr.value(self.inputs[0]);
    Tensor& d = gr.grad_buffer(self.inputs[0]);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[0] * 2.0 * (x[i] - mu) / n;
  });
}

Var masked_fill(Var a, std::span<const std::uint8_t> mask, double fill) {
  Graph& g = graph_of("masked_fill", {a});
  const Tensor& av = a.value();
  const bool full = mask.size() == av.size();
  if (!full && mask.size() != av.cols()) {
    dim_error("masked_fill", av.shape(), Shape{mask.size()});
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (m[full ? i : i % m.size()]) out[i] = fill;
  return g.record(Op::MaskedFill, {a.id()}, std::move(out),
                  [m = std::move(m), full](Graph& gr, const Graph::Node& self) {
                    Tensor& d = gr.grad_buffer(self.inputs[0]);
                    for (std::size_t i = 0; i < d.size(); ++i)
                      if (!m[full ? i : i % m.size()]) d[i] += self.grad[i];
                  });
}

Var straight_through(const Tensor& hard, Var soft) {
  Graph& g = graph_of("straight_through", {soft});
  if (hard.shape() != soft.value().shape()) dim_error("straight_through", hard.shape(), soft.shape());
  return g.record(Op::StraightThrough, {soft.id()}, hard, [](Graph& gr, const Graph::Node& self) {
    Tensor& d = gr.grad_buffer(self.inputs[0]);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  });
}

Var split_heads(Var a, std::size_t seq_len, std::size_t heads) {
  Graph& g = graph_of("split_heads", {a});
  const Tensor& av = a.value();
  require_rank("split_heads", av, 2);
  if (seq_len == 0 || heads == 0 || av.dim(0) % seq_len != 0 || av.dim(1) % heads != 0) {
    dim_error("split_heads", av.shape(),
              "not divisible into sequences of " + std::to_string(seq_len) + " and " +
                  std::to_string(heads) + " heads");
  }
  const std::size_t seqs = av.dim(0) / seq_len, width = av.dim(1), head_dim = width / heads;
  Tensor out({seqs * heads, seq_len, head_dim}, 0.0);
  // out[s*H + h, t, c] = a[s*L + t, h*C + c]
  for (std::size_t s = 0; s < seqs; ++s)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < seq_len; ++t)
        for (std::size_t c = 0; c < head_dim; ++c)
          out[((s * heads + h) * seq_len + t) * head_dim + c] = av[(s * seq_len + t) * width + h * head_dim + c];
  return g.record(Op::SplitHeads, {a.id()}, std::move(out),
                  [seqs, heads, seq_len, head_dim, width](Graph& gr, const Graph::Node& self) {
                    Tensor& d = gr.grad_buffer(self.inputs[0]);
                    for (std::size_t s = 0; s < seqs; ++s)
                      for (std::size_t h = 0; h < heads; ++h)
                        for (std::size_t t = 0; t < seq_len; ++t)
                          for (std::size_t c = 0; c < head_dim; ++c)
                            d[(s * seq_len + t) * width + h * head_dim + c] +=
                                self.grad[((s * heads + h) * seq_len + t) * head_dim + c];
                  });
}

Var merge_heads(Var a, std::size_t heads) {
  Graph& g = graph_of("merge_heads", {a});
  const Tensor& av = a.value();
  require_rank("merge_heads", av, 3);
  if (heads == 0 || av.dim(0) % heads != 0) {
    dim_error("merge_heads", av.shape(), "batch not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t seqs = av.dim(0) / heads, seq_len = av.dim(1), head_dim = av.dim(2);
  const std::size_t width = heads * head_dim;
  Tensor out({seqs * seq_len, width}, 0.0);
  for (std::size_t s = 0; s < seqs; ++s)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < seq_len; ++t)
        for (std::size_t c = 0; c < head_dim; ++c)
          out[(s * seq_len + t) * width + h * head_dim + c] = av[((s * heads + h) * seq_len + t) * head_dim + c];
  return g.record(Op::MergeHeads, {a.id()}, std::move(out),
                  [seqs, heads, seq_len, head_dim, width](Graph& gr, const Graph::Node& self) {
                    Tensor& d = gr.grad_buffer(self.inputs[0]);
                    for (std::size_t s = 0; s < seqs; ++s)
                      for (std::size_t h = 0; h < heads; ++h)
                        for (std::size_t t = 0; t < seq_len; ++t)
                          for (std::size_t c = 0; c < head_dim; ++c)
                            d[((s * heads + h) * seq_len + t) * head_dim + c] +=
                                self.grad[(s * seq_len + t) * width + h * head_dim + c];
                  });
}

Var cumsum_rows(Var a) {
  Graph& g = graph_of("cumsum_rows", {a});
  const Tensor& av = a.value();
  require_rank("cumsum_rows", av, 2);
  const std::size_t rows = av.dim(0), cols = av.dim(1);
  Tensor out = av;
  for (std::size_t r = 1; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) += out.at(r - 1, c);
  flops((rows - 1) * cols);
  return g.record(Op::CumsumRows, {a.id()}, std::move(out),
                  [rows, cols](Graph& gr, const Graph::Node& self) {
                    Tensor& d = gr.grad_buffer(self.inputs[0]);
                    for (std::size_t c = 0; c < cols; ++c) {
                      double acc = 0.0;
                      for (std::size_t r = rows; r-- > 0;) {
                        acc += self.grad[r * cols + c];
                        d[r * cols + c] += acc;
                      }
                    }
                  });
}

}  // namespace trajsel::ad
