#pragma once

#include <cstdint>
#include <vector>

#include "rowcol/array.hpp"

namespace rowcol {

// Reverse-mode autodiff over dense 2-D double arrays on an eager tape.
//
// - Rows are independent batch samples; columns are channels.
// - Node values are computed immediately at construction (eager), so runtime
//   quantities (masks, weights) derived from intermediate values can be fed
//   back in as constants while building one graph.
// - backward() computes numeric adjoints of a scalar loss for every node.
// - input_gradient() is symbolic: it appends the adjoint computation as new
//   tape ops, so the returned gradient is itself differentiable and a later
//   backward() yields mixed second derivatives through it.  ReLU and |.| are
//   differentiated via mask ops whose own derivative is zero (the a.e.-valid
//   convention for piecewise-linear kinks).

enum class Op : std::uint8_t {
  Leaf,       // independent variable (parameter or input)
  Const,      // data; no gradient flows into it
  MatMulNN,   // a (r x k) * b (k x c)
  MatMulNT,   // a (r x k) * b^T (b is c x k)
  MatMulTN,   // a^T (a is k x r) * b (k x c)
  Add,        // elementwise
  Sub,        // elementwise
  Neg,        // elementwise
  Mul,        // elementwise (Hadamard)
  MulCol,     // a (r x c) scaled per-row by col (r x 1)
  AddRow,     // a (r x c) plus broadcast row (1 x c)
  Relu,       // max(a, 0); derivative 0 at a == 0
  ReluMask,   // 1 where a > 0 else 0; derivative defined as 0
  SignMask,   // sign(a) in {-1, 0, 1}; derivative defined as 0
  Exp,        // elementwise exp
  Sqrt,       // sqrt(max(a, 0)); backward guarded near 0
  Abs,        // |a|; derivative sign(a), 0 at a == 0
  SafeRecip,  // 1/a, but exactly 0 where |a| < eps (param c)
  Scale,      // a * c (scalar param)
  SumDown,    // column sums -> 1 x c
  SumAll,     // total sum -> 1 x 1
  RowDot,     // per-row dot of a and b -> r x 1
  BroadcastRow,  // 1 x c -> i0 x c
  BroadcastAll,  // 1 x 1 -> i0 x i1
  ConcatCols,    // [a | b]
  SliceCols,     // a[:, i0:i1)
  PadCols,       // i0 zero cols, a, i1 zero cols
};

// Guard threshold on sqrt output below which its backward contributes 0
// (prevents division blow-up at exact zeros; inputs are sums of squares).
inline constexpr double kSqrtGradEps = 1e-12;

struct Node {
  Op op = Op::Leaf;
  int a = -1;           // first input node id
  int b = -1;           // second input node id
  std::size_t i0 = 0;   // integer param (slice lo / pad left / rows)
  std::size_t i1 = 0;   // integer param (slice hi / pad right / cols)
  double c = 0.0;       // scalar param (scale factor / recip eps)
  Array val;
  Array adj;            // numeric adjoint; empty until touched by backward()
};

class Tape;

// Lightweight handle to a tape node.
struct Value {
  Tape* tape = nullptr;
  int id = -1;

  const Array& val() const;
  const Array& grad() const;  // numeric adjoint after backward(); zeros if untouched
  std::size_t rows() const;
  std::size_t cols() const;
};

class Tape {
 public:
  Value leaf(Array v);
  Value constant(Array v);
  Value constant_scalar(double x);

  Value matmul_nn(Value a, Value b);
  Value matmul_nt(Value a, Value b);
  Value matmul_tn(Value a, Value b);
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value neg(Value a);
  Value mul(Value a, Value b);
  Value mul_col(Value a, Value col);
  Value add_row(Value a, Value row);
  Value relu(Value a);
  Value relu_mask(Value a);
  Value sign_mask(Value a);
  Value exp(Value a);
  Value sqrt(Value a);
  Value abs(Value a);
  Value safe_recip(Value a, double eps);
  Value scale(Value a, double c);
  Value sum_down(Value a);
  Value sum_all(Value a);
  Value row_dot(Value a, Value b);
  Value broadcast_row(Value a, std::size_t rows);
  Value broadcast_all(Value a, std::size_t rows, std::size_t cols);
  Value concat_cols(Value a, Value b);
  Value slice_cols(Value a, std::size_t c0, std::size_t c1);
  Value pad_cols(Value a, std::size_t left, std::size_t right);

  // Numeric reverse sweep from a scalar loss.  Clears previous adjoints.
  // Non-scalar loss is a contract violation.
  void backward(Value loss);
  void zero_grads();

  // Appends the adjoint computation of sum(out) w.r.t. x as new tape nodes
  // and returns it (shape of x).  The result participates in further
  // differentiation; a later backward() through it produces mixed second
  // derivatives.  If out does not depend on x the result is a zero constant.
  Value input_gradient(Value out, Value x);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  const Node& node(int id) const { return nodes_[id]; }
  const Array& val(int id) const { return nodes_[id].val; }
  const Array& grad(int id);  // allocates zeros if untouched

 private:
  std::vector<Node> nodes_;

  Value finish(Op op, int a, int b, std::size_t i0, std::size_t i1, double c,
               Array val);
  Array& adj_ref(int id);   // adjoint storage, allocated as zeros on demand
  void backprop(int id);    // numeric VJP of one node into its inputs
  void emit_vjp(int id, Value g, const std::vector<char>& active,
                std::vector<int>& adj_id);
  void check_same_tape(Value v, const char* what) const;
};

inline const Array& Value::val() const { return tape->val(id); }
inline const Array& Value::grad() const { return tape->grad(id); }
inline std::size_t Value::rows() const { return tape->val(id).rows; }
inline std::size_t Value::cols() const { return tape->val(id).cols; }

}  // namespace rowcol
