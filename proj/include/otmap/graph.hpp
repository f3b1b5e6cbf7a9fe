#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "otmap/tensor.hpp"

namespace otmap::ad {

// Expression-graph ops. The public construction surface is the named builder
// functions below; ops past l2_norm_rows exist so that every gradient rule
// can be expressed as graph nodes again (gradients of gradients stay legal).
enum class Op {
  constant,
  param,
  add,
  sub,
  mul,
  scale,
  matmul,
  concat_cols,
  leaky_relu,
  tanh_fn,
  square,
  sqrt_fn,
  sum_all,
  mean_all,
  l2_norm_rows,
  // closure ops
  slice_cols,
  pad_cols,
  lrelu_gate,
  safe_inv,
  sum_axis0,
  sum_axis1,
  broadcast_scalar,
  broadcast_rows,
};

const char* op_name(Op op);

struct Node;
using NodeRef = std::shared_ptr<const Node>;

struct Node {
  Op op;
  Shape shape;
  std::vector<NodeRef> inputs;
  double attr = 0.0;             // scale factor or leaky-relu slope
  std::size_t col_a = 0, col_b = 0;  // slice/pad column range
  bool trans_a = false, trans_b = false;
  Tensor payload;                // constant value
  int slot = -1;                 // parameter slot id, constants use -1
  std::string name;              // parameter name for diagnostics
  std::uint64_t id = 0;
};

// Immutable handle to a graph node. Graphs are DAGs built bottom-up; nodes
// are never mutated after construction.
class Expr {
 public:
  Expr() = default;
  explicit Expr(NodeRef n) : n_(std::move(n)) {}
  const Node* node() const { return n_.get(); }
  const NodeRef& ref() const { return n_; }
  const Shape& shape() const { return n_->shape; }
  bool valid() const { return n_ != nullptr; }

 private:
  NodeRef n_;
};

// Parameter slot: a stable identity that outlives any single per-step graph.
struct ParamSlot {
  int id = -1;
  Shape shape;
  std::string name;
};

ParamSlot make_slot(Shape shape, std::string name);

Expr constant(Tensor t);
Expr constant_scalar(double v);
Expr param(const ParamSlot& slot);

// add/sub: equal shapes; add also accepts {m,n}+{n} (bias broadcast over rows)
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
// mul: equal shapes, or {m,n}*{m} scaling row i by b[i]
Expr mul(Expr a, Expr b);
Expr scale(Expr a, double c);
Expr matmul(Expr a, Expr b, bool trans_a = false, bool trans_b = false);
Expr concat_cols(Expr a, Expr b);
Expr leaky_relu(Expr a, double slope);
Expr tanh_fn(Expr a);
Expr square(Expr a);
Expr sqrt_fn(Expr a);
Expr sum_all(Expr a);
Expr mean_all(Expr a);
Expr l2_norm_rows(Expr a);

Expr slice_cols(Expr a, std::size_t from, std::size_t to);
Expr pad_cols(Expr a, std::size_t left, std::size_t total);
Expr lrelu_gate(Expr a, double slope);
Expr safe_inv(Expr a);
Expr sum_axis0(Expr a);
Expr sum_axis1(Expr a);
Expr broadcast_scalar(Expr s, Shape shape);
Expr broadcast_rows(Expr v, std::size_t rows);

// Kind-keyed construction, mirroring the named builders one-to-one for the
// user-facing primitive set. attr carries the scale factor / leaky-relu slope.
enum class PrimitiveKind { add, sub, mul, scale, matmul, concat_last_axis, leaky_relu, tanh, square, sqrt, sum, mean, l2_norm_rows };
Expr primitive(PrimitiveKind kind, std::span<const Expr> operands, double attr = 0.0);

using Bindings = std::unordered_map<int, const Tensor*>;

// Evaluates one or more roots against a fixed binding set, memoizing shared
// subgraphs. Values are cached per node identity, so evaluating a loss and
// its gradient roots through one Evaluator costs each subgraph once.
class Evaluator {
 public:
  explicit Evaluator(const Bindings& bindings) : bindings_(&bindings) {}
  const Tensor& value(const Expr& root);

 private:
  Tensor compute(const Node& n);
  const Bindings* bindings_;
  std::unordered_map<const Node*, Tensor> memo_;
};

Tensor eval(const Expr& root, const Bindings& bindings);

// Reverse-mode differentiation of a scalar root. The returned expressions are
// ordinary graph nodes and may be differentiated again. leaky_relu uses the
// right derivative at its kink and its second derivative is zero everywhere.
std::vector<Expr> grad(const Expr& root, std::span<const Expr> wrt);

}  // namespace otmap::ad
