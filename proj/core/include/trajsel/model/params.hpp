#pragma once

#include <map>
#include <string>
#include <vector>

#include "trajsel/autodiff/graph.hpp"
#include "trajsel/rng.hpp"
#include "trajsel/tensor.hpp"

namespace trajsel::model {

/// Named parameter arrays with gradient slots, kept in insertion order.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  Tensor& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  void zero_grad();
  double grad_norm() const;
  bool all_finite() const;

  /// Same names, shapes and bit-identical values.
  bool same_values(const ParameterStore& other) const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Places a store's parameters on a graph on first use, as trainable
/// leaves or frozen constants.
class Binding {
 public:
  Binding(ad::Graph& graph, const ParameterStore& store, bool trainable);

  ad::Var operator()(const std::string& name);
  ad::Graph& graph() { return graph_; }

  /// Adds this graph's parameter gradients into `store` grads.
  void accumulate_grads(ParameterStore& store) const;

 private:
  ad::Graph& graph_;
  const ParameterStore& store_;
  bool trainable_;
  std::map<std::string, ad::Var> bound_;
};

/// Glorot-uniform weight (fan_in x fan_out) and zero bias under `prefix`.
void init_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                 Rng& rng, double gain = 1.0);
void init_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t width);

}  // namespace trajsel::model
