#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ioncast/autograd.hpp"

namespace ioncast {

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool passed(double tol = 1e-4) const { return max_rel_error < tol; }
};

// Builds a scalar from leaf variables created for `inputs`.
using GradCheckFn = std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

// Compares reverse-mode gradients of `fn` against central finite differences
// with step h over every input element. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckReport check_gradients(const std::string& name, const GradCheckFn& fn, const std::vector<Tensor<double>>& inputs,
                                double h = 1e-5, double floor = 1e-4);

// Same check for a parameter store: perturbs every parameter element.
using ParamLossFn = std::function<Var<double>(Graph<double>&, ParamStore<double>&)>;
GradCheckReport check_param_gradients(const std::string& name, const ParamLossFn& fn, ParamStore<double>& params,
                                      double h = 1e-5, double floor = 1e-4, std::size_t max_per_param = 0);

// CSV with one row per report. If the IONCAST_GRADCHECK_CSV environment
// variable names a file, append_gradcheck_debug() appends there.
void write_gradcheck_csv(const std::string& path, const std::vector<GradCheckReport>& reports);
void append_gradcheck_debug(const GradCheckReport& report);

}  // namespace ioncast
