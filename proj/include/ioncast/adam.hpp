#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>

#include "ioncast/autograd.hpp"

namespace ioncast {

struct AdamHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::int64_t t = 0;
  // Moments keyed by parameter name; created lazily with the parameter shape.
  std::unordered_map<std::string, Tensor<T>> m;
  std::unordered_map<std::string, Tensor<T>> v;
};

// Bias-corrected Adam update of every parameter from its accumulated grad.
// Throws TrainingError naming the first parameter with a non-finite gradient;
// in that case nothing is updated.
template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state);

}  // namespace ioncast
