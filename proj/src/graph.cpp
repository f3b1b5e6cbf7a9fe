#include "otmap/graph.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace otmap::ad {

namespace {

std::atomic<std::uint64_t> g_node_id{1};
std::atomic<int> g_slot_id{0};

NodeRef make_node(Node n) {
  n.id = g_node_id.fetch_add(1, std::memory_order_relaxed);
  return std::make_shared<const Node>(std::move(n));
}

[[noreturn]] void shape_error(const char* kind, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(kind) + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

void require_valid(const Expr& e, const char* kind) {
  if (!e.valid()) throw std::invalid_argument(std::string(kind) + ": empty operand");
}

bool is_bias_broadcast(const Shape& a, const Shape& b) {
  return a.size() == 2 && b.size() == 1 && b[0] == a[1];
}

bool is_row_broadcast(const Shape& a, const Shape& b) {
  return a.size() == 2 && b.size() == 1 && b[0] == a[0];
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::param: return "param";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::matmul: return "matmul";
    case Op::concat_cols: return "concat_cols";
    case Op::leaky_relu: return "leaky_relu";
    case Op::tanh_fn: return "tanh";
    case Op::square: return "square";
    case Op::sqrt_fn: return "sqrt";
    case Op::sum_all: return "sum";
    case Op::mean_all: return "mean";
    case Op::l2_norm_rows: return "l2_norm_rows";
    case Op::slice_cols: return "slice_cols";
    case Op::pad_cols: return "pad_cols";
    case Op::lrelu_gate: return "lrelu_gate";
    case Op::safe_inv: return "safe_inv";
    case Op::sum_axis0: return "sum_axis0";
    case Op::sum_axis1: return "sum_axis1";
    case Op::broadcast_scalar: return "broadcast_scalar";
    case Op::broadcast_rows: return "broadcast_rows";
  }
  return "?";
}

ParamSlot make_slot(Shape shape, std::string name) {
  return ParamSlot{g_slot_id.fetch_add(1, std::memory_order_relaxed), std::move(shape),
                   std::move(name)};
}

Expr constant(Tensor t) {
  Node n;
  n.op = Op::constant;
  n.shape = t.shape();
  n.payload = std::move(t);
  return Expr(make_node(std::move(n)));
}

Expr constant_scalar(double v) { return constant(Tensor::scalar(v)); }

Expr param(const ParamSlot& slot) {
  if (slot.id < 0) throw std::invalid_argument("param: slot is uninitialized");
  Node n;
  n.op = Op::param;
  n.shape = slot.shape;
  n.slot = slot.id;
  n.name = slot.name;
  return Expr(make_node(std::move(n)));
}

namespace {

Expr binary(Op op, Expr a, Expr b, const char* kind) {
  require_valid(a, kind);
  require_valid(b, kind);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool plain = sa == sb;
  const bool bias = op == Op::add && is_bias_broadcast(sa, sb);
  const bool row = op == Op::mul && is_row_broadcast(sa, sb);
  if (!plain && !bias && !row) shape_error(kind, sa, sb);
  Node n;
  n.op = op;
  n.shape = sa;
  n.inputs = {a.ref(), b.ref()};
  return Expr(make_node(std::move(n)));
}

Expr unary(Op op, Expr a, const char* kind, Shape out_shape, double attr = 0.0) {
  require_valid(a, kind);
  Node n;
  n.op = op;
  n.shape = std::move(out_shape);
  n.inputs = {a.ref()};
  n.attr = attr;
  return Expr(make_node(std::move(n)));
}

}  // namespace

Expr add(Expr a, Expr b) { return binary(Op::add, std::move(a), std::move(b), "add"); }
Expr sub(Expr a, Expr b) { return binary(Op::sub, std::move(a), std::move(b), "sub"); }
Expr mul(Expr a, Expr b) { return binary(Op::mul, std::move(a), std::move(b), "mul"); }

Expr scale(Expr a, double c) {
  require_valid(a, "scale");
  return unary(Op::scale, a, "scale", a.shape(), c);
}

Expr matmul(Expr a, Expr b, bool trans_a, bool trans_b) {
  require_valid(a, "matmul");
  require_valid(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2) shape_error("matmul", sa, sb);
  const std::size_t m = trans_a ? sa[1] : sa[0];
  const std::size_t ka = trans_a ? sa[0] : sa[1];
  const std::size_t kb = trans_b ? sb[1] : sb[0];
  const std::size_t n = trans_b ? sb[0] : sb[1];
  if (ka != kb) shape_error("matmul", sa, sb);
  Node node;
  node.op = Op::matmul;
  node.shape = {m, n};
  node.inputs = {a.ref(), b.ref()};
  node.trans_a = trans_a;
  node.trans_b = trans_b;
  return Expr(make_node(std::move(node)));
}

Expr concat_cols(Expr a, Expr b) {
  require_valid(a, "concat_last_axis");
  require_valid(b, "concat_last_axis");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[0] != sb[0]) shape_error("concat_last_axis", sa, sb);
  Node n;
  n.op = Op::concat_cols;
  n.shape = {sa[0], sa[1] + sb[1]};
  n.inputs = {a.ref(), b.ref()};
  return Expr(make_node(std::move(n)));
}

Expr leaky_relu(Expr a, double slope) { return unary(Op::leaky_relu, a, "leaky_relu", a.shape(), slope); }
Expr tanh_fn(Expr a) { return unary(Op::tanh_fn, a, "tanh", a.shape()); }
Expr square(Expr a) { return unary(Op::square, a, "square", a.shape()); }
Expr sqrt_fn(Expr a) { return unary(Op::sqrt_fn, a, "sqrt", a.shape()); }
Expr sum_all(Expr a) { return unary(Op::sum_all, a, "sum", Shape{}); }
Expr mean_all(Expr a) { return unary(Op::mean_all, a, "mean", Shape{}); }

Expr l2_norm_rows(Expr a) {
  require_valid(a, "l2_norm_rows");
  if (a.shape().size() != 2)
    throw std::invalid_argument("l2_norm_rows: operand must be rank-2, got " +
                                shape_str(a.shape()));
  return unary(Op::l2_norm_rows, a, "l2_norm_rows", Shape{a.shape()[0]});
}

Expr slice_cols(Expr a, std::size_t from, std::size_t to) {
  require_valid(a, "slice_cols");
  const Shape& s = a.shape();
  if (s.size() != 2 || from >= to || to > s[1])
    throw std::invalid_argument("slice_cols: range [" + std::to_string(from) + "," +
                                std::to_string(to) + ") out of " + shape_str(s));
  Node n;
  n.op = Op::slice_cols;
  n.shape = {s[0], to - from};
  n.inputs = {a.ref()};
  n.col_a = from;
  n.col_b = to;
  return Expr(make_node(std::move(n)));
}

Expr pad_cols(Expr a, std::size_t left, std::size_t total) {
  require_valid(a, "pad_cols");
  const Shape& s = a.shape();
  if (s.size() != 2 || left + s[1] > total)
    throw std::invalid_argument("pad_cols: cannot place " + shape_str(s) + " at column " +
                                std::to_string(left) + " of " + std::to_string(total));
  Node n;
  n.op = Op::pad_cols;
  n.shape = {s[0], total};
  n.inputs = {a.ref()};
  n.col_a = left;
  n.col_b = left + s[1];
  return Expr(make_node(std::move(n)));
}

Expr lrelu_gate(Expr a, double slope) { return unary(Op::lrelu_gate, a, "lrelu_gate", a.shape(), slope); }
Expr safe_inv(Expr a) { return unary(Op::safe_inv, a, "safe_inv", a.shape()); }

Expr sum_axis0(Expr a) {
  require_valid(a, "sum_axis0");
  if (a.shape().size() != 2)
    throw std::invalid_argument("sum_axis0: operand must be rank-2, got " + shape_str(a.shape()));
  return unary(Op::sum_axis0, a, "sum_axis0", Shape{a.shape()[1]});
}

Expr sum_axis1(Expr a) {
  require_valid(a, "sum_axis1");
  if (a.shape().size() != 2)
    throw std::invalid_argument("sum_axis1: operand must be rank-2, got " + shape_str(a.shape()));
  return unary(Op::sum_axis1, a, "sum_axis1", Shape{a.shape()[0]});
}

Expr broadcast_scalar(Expr s, Shape shape) {
  require_valid(s, "broadcast_scalar");
  if (!s.shape().empty())
    throw std::invalid_argument("broadcast_scalar: operand must be scalar, got " +
                                shape_str(s.shape()));
  return unary(Op::broadcast_scalar, s, "broadcast_scalar", std::move(shape));
}

Expr broadcast_rows(Expr v, std::size_t rows) {
  require_valid(v, "broadcast_rows");
  if (v.shape().size() != 1)
    throw std::invalid_argument("broadcast_rows: operand must be rank-1, got " +
                                shape_str(v.shape()));
  return unary(Op::broadcast_rows, v, "broadcast_rows", Shape{rows, v.shape()[0]});
}

Expr primitive(PrimitiveKind kind, std::span<const Expr> ops, double attr) {
  auto need = [&](std::size_t n, const char* name) {
    if (ops.size() != n)
      throw std::invalid_argument(std::string(name) + ": expected " + std::to_string(n) +
                                  " operands, got " + std::to_string(ops.size()));
  };
  switch (kind) {
    case PrimitiveKind::add: need(2, "add"); return add(ops[0], ops[1]);
    case PrimitiveKind::sub: need(2, "sub"); return sub(ops[0], ops[1]);
    case PrimitiveKind::mul: need(2, "mul"); return mul(ops[0], ops[1]);
    case PrimitiveKind::scale: need(1, "scale"); return scale(ops[0], attr);
    case PrimitiveKind::matmul: need(2, "matmul"); return matmul(ops[0], ops[1]);
    case PrimitiveKind::concat_last_axis: need(2, "concat_last_axis"); return concat_cols(ops[0], ops[1]);
    case PrimitiveKind::leaky_relu: need(1, "leaky_relu"); return leaky_relu(ops[0], attr);
    case PrimitiveKind::tanh: need(1, "tanh"); return tanh_fn(ops[0]);
    case PrimitiveKind::square: need(1, "square"); return square(ops[0]);
    case PrimitiveKind::sqrt: need(1, "sqrt"); return sqrt_fn(ops[0]);
    case PrimitiveKind::sum: need(1, "sum"); return sum_all(ops[0]);
    case PrimitiveKind::mean: need(1, "mean"); return mean_all(ops[0]);
    case PrimitiveKind::l2_norm_rows: need(1, "l2_norm_rows"); return l2_norm_rows(ops[0]);
  }
  throw std::invalid_argument("primitive: unknown kind");
}

// ---------------------------------------------------------------------------
// evaluation

const Tensor& Evaluator::value(const Expr& root) {
  if (!root.valid()) throw std::invalid_argument("eval: empty expression");
  // iterative postorder so deep adjoint chains cannot overflow the stack
  std::vector<std::pair<const Node*, bool>> stack{{root.node(), false}};
  while (!stack.empty()) {
    auto [n, expanded] = stack.back();
    stack.pop_back();
    if (memo_.count(n)) continue;
    if (!expanded) {
      stack.push_back({n, true});
      for (const auto& in : n->inputs)
        if (!memo_.count(in.get())) stack.push_back({in.get(), false});
    } else {
      Tensor v = compute(*n);
      if (!v.all_finite())
        throw std::runtime_error(std::string("eval: non-finite result in node #") +
                                 std::to_string(n->id) + " (" + op_name(n->op) +
                                 (n->name.empty() ? "" : ", " + n->name) + ")");
      memo_.emplace(n, std::move(v));
    }
  }
  return memo_.at(root.node());
}

Tensor Evaluator::compute(const Node& n) {
  auto in = [&](std::size_t i) -> const Tensor& { return memo_.at(n.inputs[i].get()); };
  switch (n.op) {
    case Op::constant:
      return n.payload;
    case Op::param: {
      auto it = bindings_->find(n.slot);
      if (it == bindings_->end() || it->second == nullptr)
        throw std::runtime_error("eval: unbound parameter slot '" + n.name + "' (#" +
                                 std::to_string(n.slot) + ")");
      if (it->second->shape() != n.shape)
        throw std::runtime_error("eval: binding for '" + n.name + "' has shape " +
                                 shape_str(it->second->shape()) + ", slot expects " +
                                 shape_str(n.shape));
      return *it->second;
    }
    case Op::add: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor out = Tensor::uninitialized(a.shape());
      double* __restrict o = out.data();
      const double* __restrict pa = a.data();
      const double* __restrict pb = b.data();
      if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < out.size(); ++i) o[i] = pa[i] + pb[i];
      } else {  // {m,n} + {n}
        const std::size_t m = a.rows(), c = a.cols();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < c; ++j) o[r * c + j] = pa[r * c + j] + pb[j];
      }
      return out;
    }
    case Op::sub: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor out = Tensor::uninitialized(a.shape());
      double* __restrict o = out.data();
      const double* __restrict pa = a.data();
      const double* __restrict pb = b.data();
      for (std::size_t i = 0; i < out.size(); ++i) o[i] = pa[i] - pb[i];
      return out;
    }
    case Op::mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor out = Tensor::uninitialized(a.shape());
      double* __restrict o = out.data();
      const double* __restrict pa = a.data();
      const double* __restrict pb = b.data();
      if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < out.size(); ++i) o[i] = pa[i] * pb[i];
      } else {  // {m,n} * {m}
        const std::size_t m = a.rows(), c = a.cols();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < c; ++j) o[r * c + j] = pa[r * c + j] * pb[r];
      }
      return out;
    }
    case Op::scale: {
      const Tensor& a = in(0);
      Tensor out = Tensor::uninitialized(a.shape());
      double* __restrict o = out.data();
      const double* __restrict pa = a.data();
      const double f = n.attr;
      for (std::size_t i = 0; i < out.size(); ++i) o[i] = pa[i] * f;
      return out;
    }
    case Op::matmul:
      return otmap::matmul(in(0), in(1), n.trans_a, n.trans_b);
    case Op::concat_cols: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t m = a.rows(), ca = a.cols(), cb = b.cols();
      Tensor out = Tensor::uninitialized({m, ca + cb});
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < ca; ++j) out[r * (ca + cb) + j] = a[r * ca + j];
        for (std::size_t j = 0; j < cb; ++j) out[r * (ca + cb) + ca + j] = b[r * cb + j];
      }
      return out;
    }
    case Op::leaky_relu: {
      const Tensor& a = in(0);
      Tensor out = Tensor::uninitialized(a.shape());
      double* __restrict o = out.data();
      const double* __restrict pa = a.data();
      const double slope = n.attr;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = pa[i];
        o[i] = v >= 0.0 ? v : v * slope;
      }
      return out;
    }
    case Op::tanh_fn: {
      const Tensor& a = in(0);
      Tensor out = Tensor::uninitialized(a.shape());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
      return out;
    }
    case Op::square: {
      const Tensor& a = in(0);
      Tensor out = Tensor::uninitialized(a.shape());
      double* __restrict o = out.data();
      const double* __restrict pa = a.data();
      for (std::size_t i = 0; i < out.size(); ++i) o[i] = pa[i] * pa[i];
      return out;
    }
    case Op::sqrt_fn: {
      const Tensor& a = in(0);
      Tensor out = Tensor::uninitialized(a.shape());
      double* __restrict o = out.data();
      const double* __restrict pa = a.data();
      for (std::size_t i = 0; i < out.size(); ++i) o[i] = std::sqrt(pa[i]);
      return out;
    }
    case Op::sum_all: {
      double acc = 0.0;
      const Tensor& a = in(0);
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
      return Tensor::scalar(acc);
    }
    case Op::mean_all: {
      double acc = 0.0;
      const Tensor& a = in(0);
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
      return Tensor::scalar(acc / static_cast<double>(a.size()));
    }
    case Op::l2_norm_rows: {
      const Tensor& a = in(0);
      const std::size_t m = a.rows(), c = a.cols();
      Tensor out = Tensor::uninitialized({m});
      for (std::size_t r = 0; r < m; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += a[r * c + j] * a[r * c + j];
        out[r] = std::sqrt(acc);
      }
      return out;
    }
    case Op::slice_cols: {
      const Tensor& a = in(0);
      const std::size_t m = a.rows(), c = a.cols(), w = n.col_b - n.col_a;
      Tensor out = Tensor::uninitialized({m, w});
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < w; ++j) out[r * w + j] = a[r * c + n.col_a + j];
      return out;
    }
    case Op::pad_cols: {
      const Tensor& a = in(0);
      const std::size_t m = a.rows(), c = a.cols(), total = n.shape[1];
      Tensor out({m, total});
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < c; ++j) out[r * total + n.col_a + j] = a[r * c + j];
      return out;
    }
    case Op::lrelu_gate: {
      const Tensor& a = in(0);
      Tensor out = Tensor::uninitialized(a.shape());
      double* __restrict o = out.data();
      const double* __restrict pa = a.data();
      const double slope = n.attr;
      for (std::size_t i = 0; i < out.size(); ++i) o[i] = pa[i] >= 0.0 ? 1.0 : slope;
      return out;
    }
    case Op::safe_inv: {
      const Tensor& a = in(0);
      Tensor out = Tensor::uninitialized(a.shape());
      double* __restrict o = out.data();
      const double* __restrict pa = a.data();
      for (std::size_t i = 0; i < out.size(); ++i) o[i] = pa[i] == 0.0 ? 0.0 : 1.0 / pa[i];
      return out;
    }
    case Op::sum_axis0: {
      const Tensor& a = in(0);
      const std::size_t m = a.rows(), c = a.cols();
      Tensor out({c});
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < c; ++j) out[j] += a[r * c + j];
      return out;
    }
    case Op::sum_axis1: {
      const Tensor& a = in(0);
      const std::size_t m = a.rows(), c = a.cols();
      Tensor out = Tensor::uninitialized({m});
      for (std::size_t r = 0; r < m; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += a[r * c + j];
        out[r] = acc;
      }
      return out;
    }
    case Op::broadcast_scalar:
      return Tensor::full(n.shape, in(0).value());
    case Op::broadcast_rows: {
      const Tensor& v = in(0);
      const std::size_t m = n.shape[0], c = n.shape[1];
      Tensor out = Tensor::uninitialized({m, c});
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] = v[j];
      return out;
    }
  }
  throw std::logic_error("eval: unhandled op");
}

Tensor eval(const Expr& root, const Bindings& bindings) {
  Evaluator ev(bindings);
  return ev.value(root);
}

// ---------------------------------------------------------------------------
// reverse mode

namespace {

// lrelu_gate is the one op with a non-differentiable input edge: the gate is
// piecewise constant and its derivative is defined as zero, so no adjoint
// flows through it.
bool edge_differentiable(const Node& n) { return n.op != Op::lrelu_gate; }

struct TopoWalk {
  std::vector<const Node*> order;  // inputs before users
  std::unordered_map<const Node*, NodeRef> refs;

  explicit TopoWalk(const Expr& root) {
    std::unordered_set<const Node*> done;
    std::vector<std::pair<NodeRef, bool>> stack{{root.ref(), false}};
    while (!stack.empty()) {
      auto [n, expanded] = stack.back();
      stack.pop_back();
      if (done.count(n.get())) continue;
      if (!expanded) {
        stack.push_back({n, true});
        for (const auto& in : n->inputs)
          if (!done.count(in.get())) stack.push_back({in, false});
      } else {
        done.insert(n.get());
        order.push_back(n.get());
        refs.emplace(n.get(), n);
      }
    }
  }
};

Expr zeros_like(const Shape& s) { return constant(Tensor::zeros(s)); }

void accumulate(std::unordered_map<const Node*, Expr>& adj, const Node* target, Expr contrib) {
  auto it = adj.find(target);
  if (it == adj.end())
    adj.emplace(target, std::move(contrib));
  else
    it->second = add(it->second, contrib);
}

}  // namespace

std::vector<Expr> grad(const Expr& root, std::span<const Expr> wrt) {
  if (!root.valid()) throw std::invalid_argument("grad: empty root");
  if (!root.shape().empty())
    throw std::invalid_argument("grad: root must be scalar, got " + shape_str(root.shape()));

  TopoWalk walk(root);

  std::unordered_set<const Node*> targets;
  for (const auto& w : wrt) {
    if (!w.valid()) throw std::invalid_argument("grad: empty wrt entry");
    targets.insert(w.node());
  }

  // needs[n]: some wrt node is reachable from n through differentiable edges
  std::unordered_map<const Node*, bool> needs;
  for (const Node* n : walk.order) {
    bool need = targets.count(n) > 0;
    if (!need && edge_differentiable(*n))
      for (const auto& in : n->inputs)
        if (needs[in.get()]) {
          need = true;
          break;
        }
    needs[n] = need;
  }

  std::unordered_map<const Node*, Expr> adj;
  adj.emplace(root.node(), constant_scalar(1.0));

  for (auto it = walk.order.rbegin(); it != walk.order.rend(); ++it) {
    const Node* n = *it;
    auto ait = adj.find(n);
    if (ait == adj.end() || !needs[n]) continue;
    const Expr g = ait->second;
    auto want = [&](std::size_t i) { return needs[n->inputs[i].get()]; };
    auto input = [&](std::size_t i) { return Expr(n->inputs[i]); };
    auto push = [&](std::size_t i, Expr e) { accumulate(adj, n->inputs[i].get(), std::move(e)); };
    const Expr self = Expr(walk.refs.at(n));

    switch (n->op) {
      case Op::constant:
      case Op::param:
        break;
      case Op::add: {
        if (want(0)) push(0, g);
        if (want(1)) {
          const Shape& sb = n->inputs[1]->shape;
          push(1, sb == n->shape ? g : sum_axis0(g));
        }
        break;
      }
      case Op::sub: {
        if (want(0)) push(0, g);
        if (want(1)) push(1, scale(g, -1.0));
        break;
      }
      case Op::mul: {
        const Expr a = input(0), b = input(1);
        const bool row = b.shape() != n->shape;  // {m,n} * {m}
        if (want(0)) push(0, mul(g, b));
        if (want(1)) push(1, row ? sum_axis1(mul(g, a)) : mul(g, a));
        break;
      }
      case Op::scale:
        if (want(0)) push(0, scale(g, n->attr));
        break;
      case Op::matmul: {
        const Expr a = input(0), b = input(1);
        const bool ta = n->trans_a, tb = n->trans_b;
        if (want(0)) push(0, ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb));
        if (want(1)) push(1, tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false));
        break;
      }
      case Op::concat_cols: {
        const std::size_t ca = n->inputs[0]->shape[1];
        if (want(0)) push(0, slice_cols(g, 0, ca));
        if (want(1)) push(1, slice_cols(g, ca, n->shape[1]));
        break;
      }
      case Op::leaky_relu:
        if (want(0)) push(0, mul(g, lrelu_gate(input(0), n->attr)));
        break;
      case Op::tanh_fn:
        if (want(0))
          push(0, mul(g, sub(constant(Tensor::full(n->shape, 1.0)), square(self))));
        break;
      case Op::square:
        if (want(0)) push(0, mul(g, scale(input(0), 2.0)));
        break;
      case Op::sqrt_fn:
        // derivative taken as 0 where the argument is exactly 0
        if (want(0)) push(0, mul(g, safe_inv(scale(self, 2.0))));
        break;
      case Op::sum_all:
        if (want(0)) push(0, broadcast_scalar(g, n->inputs[0]->shape));
        break;
      case Op::mean_all:
        if (want(0))
          push(0, broadcast_scalar(scale(g, 1.0 / static_cast<double>(shape_size(n->inputs[0]->shape))),
                                   n->inputs[0]->shape));
        break;
      case Op::l2_norm_rows:
        // rows with zero norm get zero gradient via safe_inv
        if (want(0)) push(0, mul(input(0), mul(g, safe_inv(self))));
        break;
      case Op::slice_cols:
        if (want(0)) push(0, pad_cols(g, n->col_a, n->inputs[0]->shape[1]));
        break;
      case Op::pad_cols:
        if (want(0)) push(0, slice_cols(g, n->col_a, n->col_b));
        break;
      case Op::lrelu_gate:
        break;  // derivative defined as zero
      case Op::safe_inv:
        if (want(0)) push(0, mul(g, scale(square(self), -1.0)));
        break;
      case Op::sum_axis0:
        if (want(0)) push(0, broadcast_rows(g, n->inputs[0]->shape[0]));
        break;
      case Op::sum_axis1:
        if (want(0)) push(0, mul(constant(Tensor::full(n->inputs[0]->shape, 1.0)), g));
        break;
      case Op::broadcast_scalar:
        if (want(0)) push(0, sum_all(g));
        break;
      case Op::broadcast_rows:
        if (want(0)) push(0, sum_axis0(g));
        break;
    }
  }

  std::vector<Expr> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = adj.find(w.node());
    out.push_back(it == adj.end() ? zeros_like(w.shape()) : it->second);
  }
  return out;
}

}  // namespace otmap::ad
