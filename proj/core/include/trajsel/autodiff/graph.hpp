#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "trajsel/tensor.hpp"

namespace trajsel::ad {

enum class Op {
  Leaf,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  ConcatRows,
  ConcatCols,
  SliceRows,
  SliceCols,
  Reshape,
  Transpose,
  RowSoftmax,
  GatedSoftmax,
  LayerNorm,
  Sigmoid,
  Relu,
  Log,
  Sum,
  Mean,
  MeanPool,
  Variance,
  MaskedFill,
  StraightThrough,
  Logit,
  SplitHeads,
  MergeHeads,
  CumsumRows,
};

std::string_view op_name(Op op);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  /// Gradient after backward; zeros for nodes off the loss path.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Graph;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Tape of operations recorded in topological order. Single-threaded.
class Graph {
 public:
  struct Node;
  using BackwardFn = std::function<void(Graph&, const Node&)>;

  struct Node {
    Op op = Op::Constant;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);

  /// Reverse sweep from a scalar loss. A graph can only be swept once.
  void backward(Var loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  const Tensor& value(int id) const { return node(id).value; }
  const Tensor& grad(int id) const;
  bool requires_grad(int id) const { return node(id).requires_grad; }

  /// Appends a node. `backward` is dropped when no input requires grad.
  Var record(Op op, std::vector<int> inputs, Tensor value, BackwardFn backward);

  /// Gradient accumulator for `id`, allocated as zeros on first use.
  Tensor& grad_buffer(int id);

 private:
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Running tally of forward floating-point operations on this thread.
struct FlopTally {
  FlopTally();
  ~FlopTally();
  FlopTally(const FlopTally&) = delete;
  FlopTally& operator=(const FlopTally&) = delete;

  std::uint64_t count() const;

 private:
  std::uint64_t start_;
  bool was_enabled_;
};

namespace detail {
void add_flops(std::uint64_t n);
}  // namespace detail

}  // namespace trajsel::ad
