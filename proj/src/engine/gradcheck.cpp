#include "ddunet/engine/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

namespace ddunet {
namespace {

double evaluate(const MultiScalarFn& f, const std::vector<Tensor<double>>& inputs) {
  std::vector<Var<double>> vars;
  vars.reserve(inputs.size());
  for (const Tensor<double>& t : inputs) vars.emplace_back(t);
  const Var<double> out = f(vars);
  return out.value()[0];
}

}  // namespace

GradCheckResult finite_diff_check(const MultiScalarFn& f, const std::vector<Tensor<double>>& inputs, double h,
                                  double tol) {
  GradCheckResult result;
  std::vector<Tensor<double>> analytic;
  try {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const Tensor<double>& t : inputs) leaves.push_back(tape.leaf(t));
    const Var<double> loss = f(leaves);
    const Gradients<double> grads = backward(tape, loss);
    for (const Var<double>& leaf : leaves) analytic.push_back(grads.of(leaf));
  } catch (const std::exception&) {
    result.passed = false;
    result.max_rel_error = INFINITY;
    return result;
  }

  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double x0 = inputs[k][i];
      const double step = h * std::max(1.0, std::abs(x0));
      probe[k][i] = x0 + step;
      const double up = evaluate(f, probe);
      probe[k][i] = x0 - step;
      const double down = evaluate(f, probe);
      probe[k][i] = x0;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double roundoff = 16.0 * std::numeric_limits<double>::epsilon() * (std::abs(up) + std::abs(down)) /
                              (2.0 * step);
      const double denom = std::max({std::abs(a), std::abs(numeric), roundoff / tol, 1e-12});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (!(rel <= result.max_rel_error) || std::isnan(rel)) {
        result.max_rel_error = std::isnan(rel) ? INFINITY : rel;
        result.worst_input = k;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  result.passed = result.max_rel_error <= tol;
  return result;
}

GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor<double>& x, double h, double tol) {
  return finite_diff_check([&f](const std::vector<Var<double>>& v) { return f(v[0]); },
                           std::vector<Tensor<double>>{x}, h, tol);
}

}  // namespace ddunet
