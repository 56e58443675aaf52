#include "ioncast/adam.hpp"

#include <cmath>

namespace ioncast {

template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad.shape() != p.value.shape()) {
      throw TrainingError("gradient of '" + p.name + "' has shape " + shape_str(p.grad.shape()) +
                          ", parameter is " + shape_str(p.value.shape()));
    }
    for (auto g : p.grad.data()) {
      if (!std::isfinite(static_cast<double>(g))) throw TrainingError("non-finite gradient in '" + p.name + "'");
    }
  }
  state.t += 1;
  const auto& hp = state.hyper;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    if (m.shape() != p.value.shape()) m = Tensor<T>(p.value.shape());
    if (v.shape() != p.value.shape()) v = Tensor<T>(p.value.shape());
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      const double mk = hp.beta1 * m[k] + (1.0 - hp.beta1) * g;
      const double vk = hp.beta2 * v[k] + (1.0 - hp.beta2) * g * g;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double step = hp.lr * (mk / bc1) / (std::sqrt(vk / bc2) + hp.eps);
      p.value[k] = static_cast<T>(p.value[k] - step);
    }
  }
}

template void adam_step(ParamStore<float>&, AdamState<float>&);
template void adam_step(ParamStore<double>&, AdamState<double>&);

}  // namespace ioncast
