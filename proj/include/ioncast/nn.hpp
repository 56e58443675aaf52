#pragma once

#include <random>
#include <string>

#include "ioncast/autograd.hpp"

// Parameterized building blocks over the tape. Parameters live in a ParamStore
// under "<name>.<suffix>" and are bound to the graph on every call.
namespace ioncast::nn {

template <typename T>
Tensor<T> gaussian(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

// w ~ N(0, 1/in), b = 0. With `zero`, w = 0 as well.
template <typename T>
void init_linear(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
                 bool zero = false);
// x [n x in] -> [n x out]
template <typename T>
Var<T> linear(Graph<T>& g, ParamStore<T>& ps, const std::string& name, Var<T> x);

// Linear -> swish -> dropout -> Linear, optionally followed by LayerNorm.
template <typename T>
void init_mlp(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
              bool layer_norm, std::mt19937_64& rng);
template <typename T>
Var<T> mlp(Graph<T>& g, ParamStore<T>& ps, const std::string& name, Var<T> x, double dropout, bool layer_norm);

// Kernel [out x in x k x k] ~ N(0, 1/(in k^2)) and per-channel bias.
template <typename T>
void init_conv(ParamStore<T>& ps, const std::string& name, std::size_t out, std::size_t in, std::size_t k,
               std::mt19937_64& rng, bool zero = false);

// Kernel [in x out x k x k] for conv2d_transposed from `in` to `out` channels.
template <typename T>
void init_conv_transposed(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                          std::size_t k, std::mt19937_64& rng, bool zero = false);

template <typename T>
Var<T> bind(Graph<T>& g, ParamStore<T>& ps, const std::string& name) {
  return g.parameter(ps.get(name));
}

}  // namespace ioncast::nn
