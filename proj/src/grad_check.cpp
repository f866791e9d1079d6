#include "vnt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "vnt/errors.hpp"

namespace vnt {

bool GradCheckReport::passed() const {
  return std::all_of(params.begin(), params.end(),
                     [this](const ParamGradError& p) { return p.max_rel_error <= tolerance; });
}

double GradCheckReport::max_error() const {
  double m = 0.0;
  for (const auto& p : params) m = std::max(m, p.max_rel_error);
  return m;
}

GradCheckReport grad_check(const ScalarProgram& f, const ParamStore& params, double h, double tol) {
  if (precision() != Precision::Float64) throw ContractError("grad_check requires 64-bit mode");

  ParamStore analytic = params;
  analytic.zero_grad();
  {
    Tape tape;
    const Bindings bound = analytic.bind(tape);
    tape.backward(f(tape, bound));
    analytic.accumulate_grads(tape, bound);
  }

  std::map<std::string, Tensor> base;
  for (const auto& [name, entry] : params.entries()) base.emplace(name, Tensor(entry.shape, entry.value));
  auto evaluate = [&](const std::string& name, const Tensor& perturbed) {
    Tape tape(false);
    Bindings bound;
    for (const auto& [n, t] : base) bound.emplace(n, tape.leaf(n == name ? perturbed : t, false));
    return f(tape, bound).value().item();
  };

  GradCheckReport report;
  report.tolerance = tol;
  for (const auto& [name, entry] : params.entries()) {
    ParamGradError err{name};
    const auto& grad = analytic.entry(name).grad;
    auto work = std::make_shared<std::vector<double>>(entry.value);
    const Tensor perturbed(entry.shape, work);
    for (std::size_t i = 0; i < work->size(); ++i) {
      double& x = (*work)[i];
      const double original = x;
      x = original + h;
      const double plus = evaluate(name, perturbed);
      x = original - h;
      const double minus = evaluate(name, perturbed);
      x = original;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = grad[i];
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      if (i == 0 || rel > err.max_rel_error) {
        err.max_rel_error = rel;
        err.worst_index = i;
        err.analytic = a;
        err.numeric = numeric;
      }
    }
    report.params.push_back(err);
  }
  return report;
}

}  // namespace vnt
