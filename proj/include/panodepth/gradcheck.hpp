#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "panodepth/tensor.hpp"

namespace pano {

template <typename Scalar>
struct Evaluation {
  // Must hold exactly one element. Kept in double so that reductions over
  // float outputs do not round the probe values.
  Tensor<double> value;
  std::vector<Tensor<Scalar>> grads;  // d value / d input, one per input
};

// `need_grads` is false for the finite-difference probes.
template <typename Scalar>
using DifferentiableFn =
    std::function<Evaluation<Scalar>(const std::vector<Tensor<Scalar>>&, bool need_grads)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  Eigen::Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// |a - n| / max(1e-8, |a| + |n|) for analytic a and central difference n.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace detail {
template <typename Scalar>
double scalar_value(const Evaluation<Scalar>& e) {
  if (e.value.size() != 1)
    throw std::invalid_argument("grad_check: function output is not a scalar (" +
                                std::to_string(e.value.size()) + " elements)");
  return e.value.data()(0);
}
}  // namespace detail

namespace detail {
// Compares `analytic` against central differences of `probe` taken at
// `inputs` (converted to the probe's precision). The step actually taken is
// measured after rounding, so low-precision inputs do not bias the quotient.
template <typename Scalar, typename ProbeScalar>
GradCheckReport compare(const std::vector<Tensor<Scalar>>& analytic,
                        const DifferentiableFn<ProbeScalar>& probe,
                        const std::vector<Tensor<Scalar>>& inputs, double eps) {
  if (analytic.size() != inputs.size())
    throw std::invalid_argument("grad_check: expected one gradient per input");
  std::vector<Tensor<ProbeScalar>> x;
  for (const auto& t : inputs) x.push_back(t.template cast<ProbeScalar>());
  GradCheckReport report;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!analytic[k].same_shape(inputs[k]))
      throw std::invalid_argument("grad_check: gradient shape differs from its input");
    for (Eigen::Index i = 0; i < x[k].size(); ++i) {
      ProbeScalar& v = x[k].data()(i);
      const ProbeScalar original = v;
      const ProbeScalar plus = original + static_cast<ProbeScalar>(eps);
      const ProbeScalar minus = original - static_cast<ProbeScalar>(eps);
      v = plus;
      const double f_plus = scalar_value(probe(x, false));
      v = minus;
      const double f_minus = scalar_value(probe(x, false));
      v = original;
      const double numeric =
          (f_plus - f_minus) / (static_cast<double>(plus) - static_cast<double>(minus));
      const double a = static_cast<double>(analytic[k].data()(i));
      const double err = relative_error(a, numeric);
      ++report.coordinates;
      if (report.coordinates == 1 || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_input = k;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}
}  // namespace detail

// Central differences on every coordinate of every input.
template <typename Scalar>
GradCheckReport grad_check(const DifferentiableFn<Scalar>& fn,
                           const std::vector<Tensor<Scalar>>& inputs, double eps = 1e-3) {
  const Evaluation<Scalar> base = fn(inputs, true);
  detail::scalar_value(base);
  return detail::compare(base.grads, fn, inputs, eps);
}

// Analytic gradients of `fn` checked against central differences of
// `reference`, a double-precision evaluation of the same function. This
// isolates the error of a low-precision backward pass from the rounding
// noise of low-precision finite differences.
template <typename Scalar>
GradCheckReport grad_check_against(const DifferentiableFn<Scalar>& fn,
                                   const DifferentiableFn<double>& reference,
                                   const std::vector<Tensor<Scalar>>& inputs, double eps) {
  const Evaluation<Scalar> base = fn(inputs, true);
  detail::scalar_value(base);
  return detail::compare(base.grads, reference, inputs, eps);
}

}  // namespace pano
