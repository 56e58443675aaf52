#include "ioncast/nn.hpp"

#include <cmath>

#include "ioncast/ops.hpp"

namespace ioncast::nn {

template <typename T>
void init_linear(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
                 bool zero) {
  if (zero)
    ps.add(name + ".w", Tensor<T>({in, out}));
  else
    ps.add(name + ".w", gaussian<T>({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  ps.add(name + ".b", Tensor<T>({out}));
}

template <typename T>
Var<T> linear(Graph<T>& g, ParamStore<T>& ps, const std::string& name, Var<T> x) {
  return ops::add_row(ops::matmul(x, nn::bind(g, ps, name + ".w")), nn::bind(g, ps, name + ".b"));
}

template <typename T>
void init_mlp(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
              bool layer_norm, std::mt19937_64& rng) {
  init_linear(ps, name + ".0", in, hidden, rng);
  init_linear(ps, name + ".1", hidden, out, rng);
  if (layer_norm) {
    ps.add(name + ".ln.g", Tensor<T>({out}, T{1}));
    ps.add(name + ".ln.b", Tensor<T>({out}));
  }
}

template <typename T>
Var<T> mlp(Graph<T>& g, ParamStore<T>& ps, const std::string& name, Var<T> x, double dropout, bool layer_norm) {
  auto h = ops::swish(linear(g, ps, name + ".0", x));
  h = ops::dropout(h, dropout);
  auto y = linear(g, ps, name + ".1", h);
  if (layer_norm) y = ops::layer_norm(y, nn::bind(g, ps, name + ".ln.g"), nn::bind(g, ps, name + ".ln.b"));
  return y;
}

template <typename T>
void init_conv(ParamStore<T>& ps, const std::string& name, std::size_t out, std::size_t in, std::size_t k,
               std::mt19937_64& rng, bool zero) {
  if (zero)
    ps.add(name + ".k", Tensor<T>({out, in, k, k}));
  else
    ps.add(name + ".k", gaussian<T>({out, in, k, k}, 1.0 / std::sqrt(static_cast<double>(in * k * k)), rng));
  ps.add(name + ".b", Tensor<T>({out}));
}

template <typename T>
void init_conv_transposed(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                          std::size_t k, std::mt19937_64& rng, bool zero) {
  if (zero)
    ps.add(name + ".k", Tensor<T>({in, out, k, k}));
  else
    ps.add(name + ".k", gaussian<T>({in, out, k, k}, 1.0 / std::sqrt(static_cast<double>(in * k * k)), rng));
  ps.add(name + ".b", Tensor<T>({out}));
}

#define IONCAST_NN(T)                                                                                              \
  template void init_linear<T>(ParamStore<T>&, const std::string&, std::size_t, std::size_t, std::mt19937_64&,  \
                               bool);                                                                            \
  template Var<T> linear<T>(Graph<T>&, ParamStore<T>&, const std::string&, Var<T>);                             \
  template void init_mlp<T>(ParamStore<T>&, const std::string&, std::size_t, std::size_t, std::size_t, bool,    \
                            std::mt19937_64&);                                                                   \
  template Var<T> mlp<T>(Graph<T>&, ParamStore<T>&, const std::string&, Var<T>, double, bool);                  \
  template void init_conv<T>(ParamStore<T>&, const std::string&, std::size_t, std::size_t, std::size_t,         \
                             std::mt19937_64&, bool);                                                    \
  template void init_conv_transposed<T>(ParamStore<T>&, const std::string&, std::size_t, std::size_t,         \
                                        std::size_t, std::mt19937_64&, bool);

IONCAST_NN(float)
IONCAST_NN(double)

}  // namespace ioncast::nn
