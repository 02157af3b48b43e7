#include "trajsel/autodiff/graph.hpp"

#include <string>

namespace trajsel::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::ConcatRows: return "concat_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceRows: return "slice_rows";
    case Op::SliceCols: return "slice_cols";
    case Op::Reshape: return "reshape";
    case Op::Transpose: return "transpose";
    case Op::RowSoftmax: return "row_softmax";
    case Op::GatedSoftmax: return "gated_softmax";
    case Op::LayerNorm: return "layer_norm";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Log: return "log";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::MeanPool: return "mean_pool";
    case Op::Variance: return "variance";
    case Op::MaskedFill: return "masked_fill";
    case Op::StraightThrough: return "straight_through";
    case Op::Logit: return "logit";
    case Op::SplitHeads: return "split_heads";
    case Op::MergeHeads: return "merge_heads";
    case Op::CumsumRows: return "cumsum_rows";
  }
  return "unknown";
}

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::constant(Tensor value) {
  return record(Op::Constant, {}, std::move(value), nullptr);
}

Var Graph::leaf(Tensor value) {
  nodes_.push_back(Node{Op::Leaf, {}, std::move(value), {}, true, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::record(Op op, std::vector<int> inputs, Tensor value, BackwardFn backward) {
  if (consumed_) {
    throw ContractError(std::string(op_name(op)) + ": graph already consumed by backward");
  }
  bool needs = false;
  for (int id : inputs) needs = needs || node(id).requires_grad;
  Node n{op, std::move(inputs), std::move(value), {}, needs, needs ? std::move(backward) : nullptr};
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Tensor& Graph::grad_buffer(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

const Tensor& Graph::grad(int id) const {
  const Node& n = node(id);
  if (n.grad.size() != n.value.size()) {
    // Off-path nodes have zero gradient; materialize lazily.
    auto& self = const_cast<Graph&>(*this);
    return self.grad_buffer(id);
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw ContractError("backward: loss belongs to another graph");
  if (consumed_) throw ContractError("backward: graph already consumed; run a fresh forward");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_to_string(loss.value().shape()));
  }
  consumed_ = true;
  if (!requires_grad(loss.id())) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || !n.backward) continue;
    if (n.grad.size() != n.value.size()) continue;  // no upstream gradient reached it
    n.backward(*this, n);
  }
}

namespace {

struct TallyState {
  std::uint64_t total = 0;
  bool enabled = false;
};

thread_local TallyState tally_state;

}  // namespace

FlopTally::FlopTally() : start_(tally_state.total), was_enabled_(tally_state.enabled) {
  tally_state.enabled = true;
}

FlopTally::~FlopTally() { tally_state.enabled = was_enabled_; }

std::uint64_t FlopTally::count() const { return tally_state.total - start_; }

namespace detail {
void add_flops(std::uint64_t n) {
  if (tally_state.enabled) tally_state.total += n;
}
}  // namespace detail

}  // namespace trajsel::ad
