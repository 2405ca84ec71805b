#include "rowcol/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "rowcol/errors.hpp"
#include "rowcol/kernels.hpp"
#include "rowcol/parallel.hpp"

namespace rowcol {

namespace {

[[noreturn]] void fail(const char* what, const std::string& detail) {
  throw NumericError(std::string(what) + ": " + detail);
}

std::string shape_str(const Array& a) {
  return std::to_string(a.rows) + "x" + std::to_string(a.cols);
}

void require_same_shape(const char* what, const Array& a, const Array& b) {
  if (!a.same_shape(b))
    fail(what, "shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// dst += src, elementwise.
void add_into(Array& dst, const Array& src) {
  require_same_shape("add_into", dst, src);
  double* d = dst.data.data();
  const double* s = src.data.data();
  par::for_index(dst.size(), [&](std::size_t e) { d[e] += s[e]; });
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

void Tape::check_same_tape(Value v, const char* what) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    fail(what, "value does not belong to this tape");
}

Value Tape::finish(Op op, int a, int b, std::size_t i0, std::size_t i1,
                   double c, Array val) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.i0 = i0;
  n.i1 = i1;
  n.c = c;
  n.val = std::move(val);
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::leaf(Array v) {
  return finish(Op::Leaf, -1, -1, 0, 0, 0.0, std::move(v));
}

Value Tape::constant(Array v) {
  return finish(Op::Const, -1, -1, 0, 0, 0.0, std::move(v));
}

Value Tape::constant_scalar(double x) { return constant(Array(1, 1, x)); }

Value Tape::matmul_nn(Value a, Value b) {
  check_same_tape(a, "matmul_nn");
  check_same_tape(b, "matmul_nn");
  return finish(Op::MatMulNN, a.id, b.id, 0, 0, 0.0,
                rowcol::matmul_nn(val(a.id), val(b.id)));
}

Value Tape::matmul_nt(Value a, Value b) {
  check_same_tape(a, "matmul_nt");
  check_same_tape(b, "matmul_nt");
  return finish(Op::MatMulNT, a.id, b.id, 0, 0, 0.0,
                rowcol::matmul_nt(val(a.id), val(b.id)));
}

Value Tape::matmul_tn(Value a, Value b) {
  check_same_tape(a, "matmul_tn");
  check_same_tape(b, "matmul_tn");
  return finish(Op::MatMulTN, a.id, b.id, 0, 0, 0.0,
                rowcol::matmul_tn(val(a.id), val(b.id)));
}

Value Tape::add(Value a, Value b) {
  check_same_tape(a, "add");
  check_same_tape(b, "add");
  const Array& va = val(a.id);
  const Array& vb = val(b.id);
  require_same_shape("add", va, vb);
  Array out(va.rows, va.cols);
  par::for_index(out.size(), [&](std::size_t e) {
    out.data[e] = va.data[e] + vb.data[e];
  });
  return finish(Op::Add, a.id, b.id, 0, 0, 0.0, std::move(out));
}

Value Tape::sub(Value a, Value b) {
  check_same_tape(a, "sub");
  check_same_tape(b, "sub");
  const Array& va = val(a.id);
  const Array& vb = val(b.id);
  require_same_shape("sub", va, vb);
  Array out(va.rows, va.cols);
  par::for_index(out.size(), [&](std::size_t e) {
    out.data[e] = va.data[e] - vb.data[e];
  });
  return finish(Op::Sub, a.id, b.id, 0, 0, 0.0, std::move(out));
}

Value Tape::neg(Value a) {
  check_same_tape(a, "neg");
  const Array& va = val(a.id);
  Array out(va.rows, va.cols);
  par::for_index(out.size(),
                 [&](std::size_t e) { out.data[e] = -va.data[e]; });
  return finish(Op::Neg, a.id, -1, 0, 0, 0.0, std::move(out));
}

Value Tape::mul(Value a, Value b) {
  check_same_tape(a, "mul");
  check_same_tape(b, "mul");
  const Array& va = val(a.id);
  const Array& vb = val(b.id);
  require_same_shape("mul", va, vb);
  Array out(va.rows, va.cols);
  par::for_index(out.size(), [&](std::size_t e) {
    out.data[e] = va.data[e] * vb.data[e];
  });
  return finish(Op::Mul, a.id, b.id, 0, 0, 0.0, std::move(out));
}

Value Tape::mul_col(Value a, Value col) {
  check_same_tape(a, "mul_col");
  check_same_tape(col, "mul_col");
  const Array& va = val(a.id);
  const Array& vc = val(col.id);
  if (vc.rows != va.rows || vc.cols != 1)
    fail("mul_col", "column must be " + std::to_string(va.rows) + "x1, got " +
                        shape_str(vc));
  Array out(va.rows, va.cols);
  par::for_index(va.rows, [&](std::size_t i) {
    const double s = vc.at(i, 0);
    const double* ai = va.row(i);
    double* oi = out.row(i);
    for (std::size_t j = 0; j < va.cols; ++j) oi[j] = ai[j] * s;
  });
  return finish(Op::MulCol, a.id, col.id, 0, 0, 0.0, std::move(out));
}

Value Tape::add_row(Value a, Value row) {
  check_same_tape(a, "add_row");
  check_same_tape(row, "add_row");
  const Array& va = val(a.id);
  const Array& vr = val(row.id);
  if (vr.rows != 1 || vr.cols != va.cols)
    fail("add_row", "row must be 1x" + std::to_string(va.cols) + ", got " +
                        shape_str(vr));
  Array out(va.rows, va.cols);
  par::for_index(va.rows, [&](std::size_t i) {
    const double* ai = va.row(i);
    const double* r = vr.row(0);
    double* oi = out.row(i);
    for (std::size_t j = 0; j < va.cols; ++j) oi[j] = ai[j] + r[j];
  });
  return finish(Op::AddRow, a.id, row.id, 0, 0, 0.0, std::move(out));
}

Value Tape::relu(Value a) {
  check_same_tape(a, "relu");
  const Array& va = val(a.id);
  Array out(va.rows, va.cols);
  par::for_index(out.size(), [&](std::size_t e) {
    const double x = va.data[e];
    out.data[e] = x > 0.0 ? x : 0.0;
  });
  return finish(Op::Relu, a.id, -1, 0, 0, 0.0, std::move(out));
}

Value Tape::relu_mask(Value a) {
  check_same_tape(a, "relu_mask");
  const Array& va = val(a.id);
  Array out(va.rows, va.cols);
  par::for_index(out.size(), [&](std::size_t e) {
    out.data[e] = va.data[e] > 0.0 ? 1.0 : 0.0;
  });
  return finish(Op::ReluMask, a.id, -1, 0, 0, 0.0, std::move(out));
}

Value Tape::sign_mask(Value a) {
  check_same_tape(a, "sign_mask");
  const Array& va = val(a.id);
  Array out(va.rows, va.cols);
  par::for_index(out.size(),
                 [&](std::size_t e) { out.data[e] = sign_of(va.data[e]); });
  return finish(Op::SignMask, a.id, -1, 0, 0, 0.0, std::move(out));
}

Value Tape::exp(Value a) {
  check_same_tape(a, "exp");
  const Array& va = val(a.id);
  Array out(va.rows, va.cols);
  par::for_index(out.size(),
                 [&](std::size_t e) { out.data[e] = std::exp(va.data[e]); });
  return finish(Op::Exp, a.id, -1, 0, 0, 0.0, std::move(out));
}

Value Tape::sqrt(Value a) {
  check_same_tape(a, "sqrt");
  const Array& va = val(a.id);
  Array out(va.rows, va.cols);
  par::for_index(out.size(), [&](std::size_t e) {
    const double x = va.data[e];
    out.data[e] = x > 0.0 ? std::sqrt(x) : 0.0;
  });
  return finish(Op::Sqrt, a.id, -1, 0, 0, 0.0, std::move(out));
}

Value Tape::abs(Value a) {
  check_same_tape(a, "abs");
  const Array& va = val(a.id);
  Array out(va.rows, va.cols);
  par::for_index(out.size(),
                 [&](std::size_t e) { out.data[e] = std::abs(va.data[e]); });
  return finish(Op::Abs, a.id, -1, 0, 0, 0.0, std::move(out));
}

Value Tape::safe_recip(Value a, double eps) {
  check_same_tape(a, "safe_recip");
  if (!(eps > 0.0)) fail("safe_recip", "eps must be positive");
  const Array& va = val(a.id);
  Array out(va.rows, va.cols);
  par::for_index(out.size(), [&](std::size_t e) {
    const double x = va.data[e];
    out.data[e] = std::abs(x) < eps ? 0.0 : 1.0 / x;
  });
  return finish(Op::SafeRecip, a.id, -1, 0, 0, eps, std::move(out));
}

Value Tape::scale(Value a, double c) {
  check_same_tape(a, "scale");
  const Array& va = val(a.id);
  Array out(va.rows, va.cols);
  par::for_index(out.size(),
                 [&](std::size_t e) { out.data[e] = va.data[e] * c; });
  return finish(Op::Scale, a.id, -1, 0, 0, c, std::move(out));
}

Value Tape::sum_down(Value a) {
  check_same_tape(a, "sum_down");
  const Array& va = val(a.id);
  Array out(1, va.cols);
  par::for_index(va.cols, [&](std::size_t j) {
    double s = 0.0;
    for (std::size_t i = 0; i < va.rows; ++i) s += va.at(i, j);
    out.data[j] = s;
  });
  return finish(Op::SumDown, a.id, -1, 0, 0, 0.0, std::move(out));
}

Value Tape::sum_all(Value a) {
  check_same_tape(a, "sum_all");
  const Array& va = val(a.id);
  // Single output element: fixed-order serial accumulation by construction.
  double s = 0.0;
  for (std::size_t e = 0; e < va.size(); ++e) s += va.data[e];
  return finish(Op::SumAll, a.id, -1, 0, 0, 0.0, Array(1, 1, s));
}

Value Tape::row_dot(Value a, Value b) {
  check_same_tape(a, "row_dot");
  check_same_tape(b, "row_dot");
  const Array& va = val(a.id);
  const Array& vb = val(b.id);
  require_same_shape("row_dot", va, vb);
  Array out(va.rows, 1);
  par::for_index(va.rows, [&](std::size_t i) {
    out.data[i] = dot_span(va.row(i), vb.row(i), va.cols);
  });
  return finish(Op::RowDot, a.id, b.id, 0, 0, 0.0, std::move(out));
}

Value Tape::broadcast_row(Value a, std::size_t rows) {
  check_same_tape(a, "broadcast_row");
  const Array& va = val(a.id);
  if (va.rows != 1) fail("broadcast_row", "input must be 1xC, got " + shape_str(va));
  Array out(rows, va.cols);
  par::for_index(rows, [&](std::size_t i) {
    double* oi = out.row(i);
    for (std::size_t j = 0; j < va.cols; ++j) oi[j] = va.data[j];
  });
  return finish(Op::BroadcastRow, a.id, -1, rows, 0, 0.0, std::move(out));
}

Value Tape::broadcast_all(Value a, std::size_t rows, std::size_t cols) {
  check_same_tape(a, "broadcast_all");
  const Array& va = val(a.id);
  if (va.rows != 1 || va.cols != 1)
    fail("broadcast_all", "input must be 1x1, got " + shape_str(va));
  return finish(Op::BroadcastAll, a.id, -1, rows, cols, 0.0,
                Array(rows, cols, va.data[0]));
}

Value Tape::concat_cols(Value a, Value b) {
  check_same_tape(a, "concat_cols");
  check_same_tape(b, "concat_cols");
  const Array& va = val(a.id);
  const Array& vb = val(b.id);
  if (va.rows != vb.rows)
    fail("concat_cols", "row mismatch " + shape_str(va) + " vs " + shape_str(vb));
  Array out(va.rows, va.cols + vb.cols);
  par::for_index(va.rows, [&](std::size_t i) {
    double* oi = out.row(i);
    const double* ai = va.row(i);
    const double* bi = vb.row(i);
    for (std::size_t j = 0; j < va.cols; ++j) oi[j] = ai[j];
    for (std::size_t j = 0; j < vb.cols; ++j) oi[va.cols + j] = bi[j];
  });
  return finish(Op::ConcatCols, a.id, b.id, 0, 0, 0.0, std::move(out));
}

Value Tape::slice_cols(Value a, std::size_t c0, std::size_t c1) {
  check_same_tape(a, "slice_cols");
  const Array& va = val(a.id);
  if (!(c0 < c1 && c1 <= va.cols))
    fail("slice_cols", "bad range [" + std::to_string(c0) + ", " +
                           std::to_string(c1) + ") for " + shape_str(va));
  Array out(va.rows, c1 - c0);
  par::for_index(va.rows, [&](std::size_t i) {
    const double* ai = va.row(i);
    double* oi = out.row(i);
    for (std::size_t j = 0; j < out.cols; ++j) oi[j] = ai[c0 + j];
  });
  return finish(Op::SliceCols, a.id, -1, c0, c1, 0.0, std::move(out));
}

Value Tape::pad_cols(Value a, std::size_t left, std::size_t right) {
  check_same_tape(a, "pad_cols");
  const Array& va = val(a.id);
  Array out(va.rows, left + va.cols + right, 0.0);
  par::for_index(va.rows, [&](std::size_t i) {
    const double* ai = va.row(i);
    double* oi = out.row(i);
    for (std::size_t j = 0; j < va.cols; ++j) oi[left + j] = ai[j];
  });
  return finish(Op::PadCols, a.id, -1, left, right, 0.0, std::move(out));
}

Array& Tape::adj_ref(int id) {
  Node& n = nodes_[id];
  if (n.adj.empty()) n.adj = Array(n.val.rows, n.val.cols, 0.0);
  return n.adj;
}

const Array& Tape::grad(int id) { return adj_ref(id); }

void Tape::zero_grads() {
  for (Node& n : nodes_) n.adj = Array();
}

// Numeric VJP of node `id`: scatters its adjoint into its inputs' adjoints.
// Each rule mirrors the formula emit_vjp() builds symbolically, evaluated in
// the same operation order, so the two paths agree bitwise.
void Tape::backprop(int id) {
  const Node& n = nodes_[id];
  const Array& gy = n.adj;
  switch (n.op) {
    case Op::Leaf:
    case Op::Const:
    case Op::ReluMask:
    case Op::SignMask:
      break;
    case Op::MatMulNN:
      add_into(adj_ref(n.a), rowcol::matmul_nt(gy, val(n.b)));
      add_into(adj_ref(n.b), rowcol::matmul_tn(val(n.a), gy));
      break;
    case Op::MatMulNT:
      add_into(adj_ref(n.a), rowcol::matmul_nn(gy, val(n.b)));
      add_into(adj_ref(n.b), rowcol::matmul_tn(gy, val(n.a)));
      break;
    case Op::MatMulTN:
      add_into(adj_ref(n.a), rowcol::matmul_nt(val(n.b), gy));
      add_into(adj_ref(n.b), rowcol::matmul_nn(val(n.a), gy));
      break;
    case Op::Add:
      add_into(adj_ref(n.a), gy);
      add_into(adj_ref(n.b), gy);
      break;
    case Op::Sub: {
      add_into(adj_ref(n.a), gy);
      Array& gb = adj_ref(n.b);
      par::for_index(gy.size(),
                     [&](std::size_t e) { gb.data[e] += -gy.data[e]; });
      break;
    }
    case Op::Neg: {
      Array& ga = adj_ref(n.a);
      par::for_index(gy.size(),
                     [&](std::size_t e) { ga.data[e] += -gy.data[e]; });
      break;
    }
    case Op::Mul: {
      const Array& va = val(n.a);
      const Array& vb = val(n.b);
      Array& ga = adj_ref(n.a);
      par::for_index(gy.size(),
                     [&](std::size_t e) { ga.data[e] += gy.data[e] * vb.data[e]; });
      Array& gb = adj_ref(n.b);
      par::for_index(gy.size(),
                     [&](std::size_t e) { gb.data[e] += gy.data[e] * va.data[e]; });
      break;
    }
    case Op::MulCol: {
      const Array& va = val(n.a);
      const Array& vc = val(n.b);
      Array& ga = adj_ref(n.a);
      par::for_index(va.rows, [&](std::size_t i) {
        const double s = vc.at(i, 0);
        const double* gi = gy.row(i);
        double* gai = ga.row(i);
        for (std::size_t j = 0; j < va.cols; ++j) gai[j] += gi[j] * s;
      });
      Array& gc = adj_ref(n.b);
      par::for_index(va.rows, [&](std::size_t i) {
        gc.data[i] += dot_span(gy.row(i), va.row(i), va.cols);
      });
      break;
    }
    case Op::AddRow: {
      add_into(adj_ref(n.a), gy);
      Array& gr = adj_ref(n.b);
      par::for_index(gy.cols, [&](std::size_t j) {
        double s = 0.0;
        for (std::size_t i = 0; i < gy.rows; ++i) s += gy.at(i, j);
        gr.data[j] += s;
      });
      break;
    }
    case Op::Relu: {
      const Array& va = val(n.a);
      Array& ga = adj_ref(n.a);
      par::for_index(gy.size(), [&](std::size_t e) {
        ga.data[e] += gy.data[e] * (va.data[e] > 0.0 ? 1.0 : 0.0);
      });
      break;
    }
    case Op::Exp: {
      Array& ga = adj_ref(n.a);
      par::for_index(gy.size(),
                     [&](std::size_t e) { ga.data[e] += gy.data[e] * n.val.data[e]; });
      break;
    }
    case Op::Sqrt: {
      Array& ga = adj_ref(n.a);
      par::for_index(gy.size(), [&](std::size_t e) {
        const double y = n.val.data[e];
        const double r = std::abs(y) < kSqrtGradEps ? 0.0 : 1.0 / y;
        ga.data[e] += gy.data[e] * (r * 0.5);
      });
      break;
    }
    case Op::Abs: {
      const Array& va = val(n.a);
      Array& ga = adj_ref(n.a);
      par::for_index(gy.size(), [&](std::size_t e) {
        ga.data[e] += gy.data[e] * sign_of(va.data[e]);
      });
      break;
    }
    case Op::SafeRecip: {
      Array& ga = adj_ref(n.a);
      par::for_index(gy.size(), [&](std::size_t e) {
        const double y = n.val.data[e];
        ga.data[e] += -(gy.data[e] * (y * y));
      });
      break;
    }
    case Op::Scale: {
      Array& ga = adj_ref(n.a);
      const double c = n.c;
      par::for_index(gy.size(),
                     [&](std::size_t e) { ga.data[e] += gy.data[e] * c; });
      break;
    }
    case Op::SumDown: {
      Array& ga = adj_ref(n.a);
      par::for_index(ga.rows, [&](std::size_t i) {
        double* gai = ga.row(i);
        for (std::size_t j = 0; j < ga.cols; ++j) gai[j] += gy.data[j];
      });
      break;
    }
    case Op::SumAll: {
      Array& ga = adj_ref(n.a);
      const double g = gy.data[0];
      par::for_index(ga.size(), [&](std::size_t e) { ga.data[e] += g; });
      break;
    }
    case Op::RowDot: {
      const Array& va = val(n.a);
      const Array& vb = val(n.b);
      Array& ga = adj_ref(n.a);
      par::for_index(va.rows, [&](std::size_t i) {
        const double g = gy.data[i];
        const double* bi = vb.row(i);
        double* gai = ga.row(i);
        for (std::size_t j = 0; j < va.cols; ++j) gai[j] += bi[j] * g;
      });
      Array& gb = adj_ref(n.b);
      par::for_index(va.rows, [&](std::size_t i) {
        const double g = gy.data[i];
        const double* ai = va.row(i);
        double* gbi = gb.row(i);
        for (std::size_t j = 0; j < va.cols; ++j) gbi[j] += ai[j] * g;
      });
      break;
    }
    case Op::BroadcastRow: {
      Array& ga = adj_ref(n.a);
      par::for_index(gy.cols, [&](std::size_t j) {
        double s = 0.0;
        for (std::size_t i = 0; i < gy.rows; ++i) s += gy.at(i, j);
        ga.data[j] += s;
      });
      break;
    }
    case Op::BroadcastAll: {
      Array& ga = adj_ref(n.a);
      double s = 0.0;
      for (std::size_t e = 0; e < gy.size(); ++e) s += gy.data[e];
      ga.data[0] += s;
      break;
    }
    case Op::ConcatCols: {
      const Array& va = val(n.a);
      Array& ga = adj_ref(n.a);
      par::for_index(va.rows, [&](std::size_t i) {
        const double* gi = gy.row(i);
        double* gai = ga.row(i);
        for (std::size_t j = 0; j < va.cols; ++j) gai[j] += gi[j];
      });
      Array& gb = adj_ref(n.b);
      const std::size_t off = va.cols;
      par::for_index(gb.rows, [&](std::size_t i) {
        const double* gi = gy.row(i);
        double* gbi = gb.row(i);
        for (std::size_t j = 0; j < gb.cols; ++j) gbi[j] += gi[off + j];
      });
      break;
    }
    case Op::SliceCols: {
      Array& ga = adj_ref(n.a);
      const std::size_t c0 = n.i0;
      par::for_index(ga.rows, [&](std::size_t i) {
        const double* gi = gy.row(i);
        double* gai = ga.row(i);
        for (std::size_t j = 0; j < gy.cols; ++j) gai[c0 + j] += gi[j];
      });
      break;
    }
    case Op::PadCols: {
      Array& ga = adj_ref(n.a);
      const std::size_t left = n.i0;
      par::for_index(ga.rows, [&](std::size_t i) {
        const double* gi = gy.row(i);
        double* gai = ga.row(i);
        for (std::size_t j = 0; j < ga.cols; ++j) gai[j] += gi[left + j];
      });
      break;
    }
  }
}

void Tape::backward(Value loss) {
  check_same_tape(loss, "backward");
  const Array& lv = val(loss.id);
  if (lv.rows != 1 || lv.cols != 1)
    fail("backward", "loss must be a 1x1 scalar, got " + shape_str(lv));
  for (Node& n : nodes_) n.adj = Array();
  adj_ref(loss.id).data[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    if (!nodes_[id].adj.empty()) backprop(id);
  }
}

namespace {

// Accumulates a symbolic adjoint contribution for node `target`.
void accum_sym(Tape& t, std::vector<int>& adj_id, int target, Value contrib) {
  if (adj_id[target] < 0) {
    adj_id[target] = contrib.id;
  } else {
    adj_id[target] = t.add(Value{&t, adj_id[target]}, contrib).id;
  }
}

}  // namespace

// Emits the VJP of node `id` as tape ops.  `g` is the symbolic adjoint of the
// node's output; contributions flow only into inputs marked active (on a path
// from the differentiation variable to the output).
void Tape::emit_vjp(int id, Value g, const std::vector<char>& active,
                    std::vector<int>& adj_id) {
  // Copy POD fields: emitting ops below may reallocate nodes_.
  const Op op = nodes_[id].op;
  const int na = nodes_[id].a;
  const int nb = nodes_[id].b;
  const std::size_t i0 = nodes_[id].i0;
  const double cc = nodes_[id].c;
  const Value self{this, id};
  const Value va{this, na};
  const Value vb{this, nb};
  const auto is_active = [&](int t) { return t >= 0 && active[t]; };

  switch (op) {
    case Op::Leaf:
    case Op::Const:
    case Op::ReluMask:
    case Op::SignMask:
      break;
    case Op::MatMulNN:
      if (is_active(na)) accum_sym(*this, adj_id, na, matmul_nt(g, vb));
      if (is_active(nb)) accum_sym(*this, adj_id, nb, matmul_tn(va, g));
      break;
    case Op::MatMulNT:
      if (is_active(na)) accum_sym(*this, adj_id, na, matmul_nn(g, vb));
      if (is_active(nb)) accum_sym(*this, adj_id, nb, matmul_tn(g, va));
      break;
    case Op::MatMulTN:
      if (is_active(na)) accum_sym(*this, adj_id, na, matmul_nt(vb, g));
      if (is_active(nb)) accum_sym(*this, adj_id, nb, matmul_nn(va, g));
      break;
    case Op::Add:
      if (is_active(na)) accum_sym(*this, adj_id, na, g);
      if (is_active(nb)) accum_sym(*this, adj_id, nb, g);
      break;
    case Op::Sub:
      if (is_active(na)) accum_sym(*this, adj_id, na, g);
      if (is_active(nb)) accum_sym(*this, adj_id, nb, neg(g));
      break;
    case Op::Neg:
      if (is_active(na)) accum_sym(*this, adj_id, na, neg(g));
      break;
    case Op::Mul:
      if (is_active(na)) accum_sym(*this, adj_id, na, mul(g, vb));
      if (is_active(nb)) accum_sym(*this, adj_id, nb, mul(g, va));
      break;
    case Op::MulCol:
      if (is_active(na)) accum_sym(*this, adj_id, na, mul_col(g, vb));
      if (is_active(nb)) accum_sym(*this, adj_id, nb, row_dot(g, va));
      break;
    case Op::AddRow:
      if (is_active(na)) accum_sym(*this, adj_id, na, g);
      if (is_active(nb)) accum_sym(*this, adj_id, nb, sum_down(g));
      break;
    case Op::Relu:
      if (is_active(na)) accum_sym(*this, adj_id, na, mul(g, relu_mask(va)));
      break;
    case Op::Exp:
      if (is_active(na)) accum_sym(*this, adj_id, na, mul(g, self));
      break;
    case Op::Sqrt:
      if (is_active(na))
        accum_sym(*this, adj_id, na,
                  mul(g, scale(safe_recip(self, kSqrtGradEps), 0.5)));
      break;
    case Op::Abs:
      if (is_active(na)) accum_sym(*this, adj_id, na, mul(g, sign_mask(va)));
      break;
    case Op::SafeRecip:
      if (is_active(na))
        accum_sym(*this, adj_id, na, neg(mul(g, mul(self, self))));
      break;
    case Op::Scale:
      if (is_active(na)) accum_sym(*this, adj_id, na, scale(g, cc));
      break;
    case Op::SumDown:
      if (is_active(na))
        accum_sym(*this, adj_id, na, broadcast_row(g, val(na).rows));
      break;
    case Op::SumAll:
      if (is_active(na))
        accum_sym(*this, adj_id, na,
                  broadcast_all(g, val(na).rows, val(na).cols));
      break;
    case Op::RowDot:
      if (is_active(na)) accum_sym(*this, adj_id, na, mul_col(vb, g));
      if (is_active(nb)) accum_sym(*this, adj_id, nb, mul_col(va, g));
      break;
    case Op::BroadcastRow:
      if (is_active(na)) accum_sym(*this, adj_id, na, sum_down(g));
      break;
    case Op::BroadcastAll:
      if (is_active(na)) accum_sym(*this, adj_id, na, sum_all(g));
      break;
    case Op::ConcatCols: {
      const std::size_t ca = val(na).cols;
      if (is_active(na)) accum_sym(*this, adj_id, na, slice_cols(g, 0, ca));
      if (is_active(nb))
        accum_sym(*this, adj_id, nb, slice_cols(g, ca, ca + val(nb).cols));
      break;
    }
    case Op::SliceCols: {
      const std::size_t acols = val(na).cols;
      const std::size_t hi = nodes_[id].i1;
      if (is_active(na))
        accum_sym(*this, adj_id, na, pad_cols(g, i0, acols - hi));
      break;
    }
    case Op::PadCols: {
      const std::size_t acols = val(na).cols;
      if (is_active(na))
        accum_sym(*this, adj_id, na, slice_cols(g, i0, i0 + acols));
      break;
    }
  }
}

Value Tape::input_gradient(Value out, Value x) {
  check_same_tape(out, "input_gradient");
  check_same_tape(x, "input_gradient");
  const int out_id = out.id;
  const int x_id = x.id;
  const Array& xv = val(x_id);
  if (x_id > out_id) return constant(Array(xv.rows, xv.cols, 0.0));

  // Active set: nodes lying on a path from x to out.
  const int n = out_id + 1;
  std::vector<char> desc(n, 0);  // depends on x
  desc[x_id] = 1;
  for (int id = x_id + 1; id < n; ++id) {
    const Node& nd = nodes_[id];
    if ((nd.a >= 0 && desc[nd.a]) || (nd.b >= 0 && desc[nd.b])) desc[id] = 1;
  }
  std::vector<char> active(n, 0);  // desc && (out reaches it)
  std::vector<char> anc(n, 0);
  anc[out_id] = 1;
  for (int id = out_id; id >= x_id; --id) {
    if (!anc[id]) continue;
    const Node& nd = nodes_[id];
    if (nd.a >= 0) anc[nd.a] = 1;
    if (nd.b >= 0) anc[nd.b] = 1;
  }
  for (int id = x_id; id < n; ++id) active[id] = desc[id] && anc[id];

  if (!active[out_id]) return constant(Array(xv.rows, xv.cols, 0.0));

  std::vector<int> adj_id(n, -1);
  const Array& ov = val(out_id);
  adj_id[out_id] = constant(Array(ov.rows, ov.cols, 1.0)).id;
  if (x_id == out_id) return Value{this, adj_id[out_id]};

  for (int id = out_id; id > x_id; --id) {
    if (!active[id] || adj_id[id] < 0) continue;
    emit_vjp(id, Value{this, adj_id[id]}, active, adj_id);
  }
  if (adj_id[x_id] < 0) return constant(Array(xv.rows, xv.cols, 0.0));
  return Value{this, adj_id[x_id]};
}

}  // namespace rowcol
