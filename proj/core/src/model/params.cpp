#include "trajsel/model/params.hpp"

#include <cmath>

namespace trajsel::model {

Tensor& ParameterStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw ContractError("parameter store: duplicate name " + name);
  index_[name] = entries_.size();
  Tensor grad(init.shape(), 0.0);
  entries_.push_back({name, std::move(init), std::move(grad)});
  return entries_.back().value;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("parameter store: unknown parameter " + name);
  return entries_[it->second].value;
}

Tensor& ParameterStore::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ParameterStore&>(*this).get(name));
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

double ParameterStore::grad_norm() const {
  double s = 0.0;
  for (const auto& e : entries_)
    for (double g : e.grad.data()) s += g * g;
  return std::sqrt(s);
}

bool ParameterStore::all_finite() const {
  for (const auto& e : entries_)
    for (double v : e.value.data())
      if (!std::isfinite(v)) return false;
  return true;
}

bool ParameterStore::same_values(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (!(entries_[i].value == other.entries_[i].value)) return false;
  }
  return true;
}

Binding::Binding(ad::Graph& graph, const ParameterStore& store, bool trainable)
    : graph_(graph), store_(store), trainable_(trainable) {}

ad::Var Binding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Tensor& value = store_.get(name);
  ad::Var v = trainable_ ? graph_.leaf(value) : graph_.constant(value);
  bound_.emplace(name, v);
  return v;
}

void Binding::accumulate_grads(ParameterStore& store) const {
  if (!trainable_) return;
  for (auto& e : store.entries()) {
    auto it = bound_.find(e.name);
    if (it == bound_.end()) continue;
    const Tensor& g = it->second.grad();
    for (std::size_t i = 0; i < g.size(); ++i) e.grad[i] += g[i];
  }
}

void init_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                 Rng& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w({in, out}, 0.0);
  for (auto& x : w.data()) x = rng.uniform(-limit, limit);
  store.add(prefix + ".weight", std::move(w));
  store.add(prefix + ".bias", Tensor({out}, 0.0));
}

void init_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t width) {
  store.add(prefix + ".gamma", Tensor({width}, 1.0));
  store.add(prefix + ".beta", Tensor({width}, 0.0));
}

}  // namespace trajsel::model
