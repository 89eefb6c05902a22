#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ddunet/engine/tape.hpp"

namespace ddunet {

struct GradCheckResult {
  bool passed = true;
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;  // which input tensor held the worst element
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;  // number of elements compared
};

// Scalar-valued function of several inputs, built from differentiable ops.
using MultiScalarFn = std::function<Var<double>(const std::vector<Var<double>>&)>;
using ScalarFn = std::function<Var<double>(const Var<double>&)>;

/// Compares reverse-mode gradients with central differences.
///
/// Each element i of each input is perturbed by h_i = h * max(1, |x_i|);
/// the relative error is |a - b| / max(|a|, |b|, r / tol), where
/// r = 16 eps (|f+| + |f-|) / (2 h_i) bounds the rounding error of the
/// difference quotient. Failures are reported in the result, never thrown.
GradCheckResult finite_diff_check(const MultiScalarFn& f, const std::vector<Tensor<double>>& inputs,
                                  double h = 1e-4, double tol = 1e-4);

GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor<double>& x, double h = 1e-4, double tol = 1e-4);

}  // namespace ddunet
