#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hbmp/tensor.hpp"

namespace hbmp {

struct GradCheckResult {
  double max_error = 0.0;
  std::vector<double> per_input;  // max error per input tensor, same order
};

/// Relative discrepancy used by grad_check.
inline double grad_relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
}

/// Compares tape gradients of the scalar function `f` against central
/// differences (f(x+eps) − f(x−eps)) / 2eps, coordinate by coordinate.
///
/// `f` must build its graph from `inputs` on the tape it is handed. Numeric
/// evaluations run on a disabled tape.
inline GradCheckResult grad_check(const std::function<Tensor(Tape&)>& f, std::vector<Tensor> inputs,
                                  double eps = 1e-5) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tape tape;
  Tensor out = f(tape);
  if (out.numel() != 1)
    throw DimensionError("grad_check: function must be scalar-valued, got " + shape_str(out.shape()));
  tape.backward(out);

  GradCheckResult result;
  for (auto& in : inputs) {
    std::vector<double> analytic(in.numel(), 0.0);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    double worst = 0.0;
    auto data = in.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      Tape off(false);
      const double plus = f(off).item();
      data[i] = saved - eps;
      const double minus = f(off).item();
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      worst = std::max(worst, grad_relative_error(analytic[i], numeric));
    }
    result.per_input.push_back(worst);
    result.max_error = std::max(result.max_error, worst);
  }
  return result;
}

}  // namespace hbmp
