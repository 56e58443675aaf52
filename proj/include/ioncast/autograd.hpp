#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ioncast/tensor.hpp"

namespace ioncast {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Named parameter registry. Iteration order is insertion order, which fixes the
// order of checkpoint records and optimizer updates.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Parameter<T>& add(const std::string& name, Tensor<T> init);
  Parameter<T>& get(const std::string& name);
  const Parameter<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t count() const;  // scalar parameter count
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_) out.add(p->name, p->value.template cast<U>());
    return out;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Graph;

// Handle to a recorded node.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Tape of primitive applications. Nodes are appended in execution order, so
// the recording order is a topological order and backward walks it in reverse.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  struct Node {
    const char* op = "";
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  explicit Graph(bool training = false, std::uint64_t seed = 0) : training_(training), rng_(seed) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  // Leaf bound to a parameter; backward accumulates into param.grad.
  Var<T> parameter(Parameter<T>& param);
  // Leaf that records its own gradient (used by gradient checks).
  Var<T> variable(Tensor<T> value);

  Var<T> record(const char* op, Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward);

  void backward(Var<T> loss);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, allocated as zeros on first access.
  Tensor<T>& grad(std::size_t id);
  const Tensor<T>& grad_of(Var<T> v) const { return nodes_[v.id()].grad; }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  std::size_t size() const { return nodes_.size(); }
  bool training() const { return training_; }
  void set_training(bool training) { training_ = training; }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::vector<Node> nodes_;
  bool training_;
  std::mt19937_64 rng_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace ioncast
