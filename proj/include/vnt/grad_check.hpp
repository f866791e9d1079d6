#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "vnt/param_store.hpp"

namespace vnt {

/// Scalar-valued program over bound parameters.
using ScalarProgram = std::function<Var(Tape&, const Bindings&)>;

struct ParamGradError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  double tolerance = 0.0;

  bool passed() const;
  double max_error() const;
};

/// Compares tape gradients with central differences of step `h` for every
/// scalar of every parameter. Error per entry is |a-n| / (|a|+|n|+1e-12);
/// a parameter fails when its worst entry exceeds `tol`. 64-bit mode only.
GradCheckReport grad_check(const ScalarProgram& f, const ParamStore& params, double h, double tol);

}  // namespace vnt
