#pragma once

#include <functional>
#include <vector>

#include "upcr/autodiff/tensor.hpp"

namespace upcr::ad {

struct GradCheckReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  /// Per coordinate: |a − n| / max(|a|, |n|), or the absolute difference
  /// when both magnitudes are below `abs_floor`.
  std::vector<double> error;
  double max_error = 0.0;
  bool passed = false;
};

/// Scalar-valued function built on the supplied tape from the leaf `x`.
using TapeFunction = std::function<Tensor(Tape&, const Tensor& x)>;

/// Compares the reverse-mode gradient of `f` at `x` against central
/// differences with step `h`.
GradCheckReport grad_check(const TapeFunction& f, const Array& x, double h, double tol,
                           double abs_floor = 1e-6);

}  // namespace upcr::ad
