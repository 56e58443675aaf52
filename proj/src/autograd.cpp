#include "ioncast/autograd.hpp"

namespace ioncast {

template <typename T>
ParamStore<T>::ParamStore(const ParamStore& other) {
  for (const auto& p : other.params_) {
    auto& q = add(p->name, p->value);
    q.grad = p->grad;
  }
}

template <typename T>
ParamStore<T>& ParamStore<T>::operator=(const ParamStore& other) {
  if (this != &other) {
    ParamStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
Parameter<T>& ParamStore<T>::add(const std::string& name, Tensor<T> init) {
  if (index_.count(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  auto p = std::make_unique<Parameter<T>>();
  p->name = name;
  p->grad = Tensor<T>(init.shape());
  p->value = std::move(init);
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename T>
Parameter<T>& ParamStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

template <typename T>
const Parameter<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

template <typename T>
std::size_t ParamStore<T>::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) {
    if (p->grad.shape() != p->value.shape()) p->grad = Tensor<T>(p->value.shape());
    p->grad.fill(T{0});
  }
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::parameter(Parameter<T>& param) {
  Node n;
  n.op = "parameter";
  n.value = param.value;
  n.param = &param;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::variable(Tensor<T> value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::record(const char* op, Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (auto i : inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Tensor<T>& Graph<T>::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  if (loss.value().size() != 1) {
    throw ArgumentError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  grad(loss.id())[0] = T{1};
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.shape() != n.value.shape()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      auto& pg = n.param->grad;
      if (pg.shape() != n.value.shape()) pg = Tensor<T>(n.value.shape());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace ioncast
