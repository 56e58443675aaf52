#include "ioncast/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace ioncast {

namespace {

void update(GradCheckReport& r, double analytic, double numeric, double floor) {
  const double abs_err = std::abs(analytic - numeric);
  const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), floor});
  r.max_abs_error = std::max(r.max_abs_error, abs_err);
  r.max_rel_error = std::max(r.max_rel_error, rel);
  ++r.checked;
}

double evaluate(const GradCheckFn& fn, const std::vector<Tensor<double>>& inputs) {
  Graph<double> g;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  return fn(g, vars).value()[0];
}

}  // namespace

GradCheckReport check_gradients(const std::string& name, const GradCheckFn& fn, const std::vector<Tensor<double>>& inputs,
                                double h, double floor) {
  GradCheckReport report{name};
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(g.variable(t));
    auto loss = fn(g, vars);
    g.backward(loss);
    for (const auto& v : vars) {
      const auto& gr = g.grad_of(v);
      analytic.push_back(gr.shape() == v.shape() ? gr : Tensor<double>(v.shape()));
    }
  }
  auto work = inputs;
  for (std::size_t k = 0; k < work.size(); ++k) {
    for (std::size_t i = 0; i < work[k].size(); ++i) {
      const double orig = work[k][i];
      work[k][i] = orig + h;
      const double up = evaluate(fn, work);
      work[k][i] = orig - h;
      const double down = evaluate(fn, work);
      work[k][i] = orig;
      update(report, analytic[k][i], (up - down) / (2.0 * h), floor);
    }
  }
  append_gradcheck_debug(report);
  return report;
}

GradCheckReport check_param_gradients(const std::string& name, const ParamLossFn& fn, ParamStore<double>& params,
                                      double h, double floor, std::size_t max_per_param) {
  GradCheckReport report{name};
  params.zero_grad();
  {
    Graph<double> g;
    auto loss = fn(g, params);
    g.backward(loss);
  }
  std::vector<Tensor<double>> analytic;
  for (std::size_t p = 0; p < params.size(); ++p) analytic.push_back(params[p].grad);
  auto eval = [&]() {
    Graph<double> g;
    return fn(g, params).value()[0];
  };
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& value = params[p].value;
    const std::size_t n = value.size();
    const std::size_t stride = (max_per_param && n > max_per_param) ? (n + max_per_param - 1) / max_per_param : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = value[i];
      value[i] = orig + h;
      const double up = eval();
      value[i] = orig - h;
      const double down = eval();
      value[i] = orig;
      update(report, analytic[p][i], (up - down) / (2.0 * h), floor);
    }
  }
  append_gradcheck_debug(report);
  return report;
}

void write_gradcheck_csv(const std::string& path, const std::vector<GradCheckReport>& reports) {
  std::ofstream out(path);
  out << "primitive,max_rel_error,max_abs_error,checked,passed\n";
  for (const auto& r : reports) {
    out << r.name << ',' << r.max_rel_error << ',' << r.max_abs_error << ',' << r.checked << ','
        << (r.passed() ? 1 : 0) << '\n';
  }
}

void append_gradcheck_debug(const GradCheckReport& r) {
  const char* path = std::getenv("IONCAST_GRADCHECK_CSV");
  if (!path || !*path) return;
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (fresh) out << "primitive,max_rel_error,max_abs_error,checked,passed\n";
  out << r.name << ',' << r.max_rel_error << ',' << r.max_abs_error << ',' << r.checked << ','
      << (r.passed() ? 1 : 0) << '\n';
}

}  // namespace ioncast
