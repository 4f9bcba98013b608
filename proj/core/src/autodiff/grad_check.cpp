#include "upcr/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace upcr::ad {
namespace {

double evaluate(const TapeFunction& f, const Array& x) {
  Tape tape;
  auto leaf = tape.constant(x);
  auto y = f(tape, leaf);
  if (y.size() != 1) throw ShapeError("grad_check needs a scalar-valued function, got " + to_string(y.shape()));
  return y.item();
}

}  // namespace

GradCheckReport grad_check(const TapeFunction& f, const Array& x, double h, double tol,
                           double abs_floor) {
  GradCheckReport report;
  {
    Tape tape;
    auto leaf = tape.variable(x);
    auto y = f(tape, leaf);
    if (y.size() != 1) {
      throw ShapeError("grad_check needs a scalar-valued function, got " + to_string(y.shape()));
    }
    tape.backward(y);
    report.analytic = tape.grad(leaf);
  }
  report.numeric.resize(x.size());
  report.error.resize(x.size());
  Array probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + h;
    const double up = evaluate(f, probe);
    probe.data[i] = orig - h;
    const double down = evaluate(f, probe);
    probe.data[i] = orig;
    report.numeric[i] = (up - down) / (2.0 * h);
    const double a = report.analytic[i], n = report.numeric[i];
    const double scale = std::max(std::abs(a), std::abs(n));
    report.error[i] = scale > abs_floor ? std::abs(a - n) / scale : std::abs(a - n);
  }
  report.max_error =
      report.error.empty() ? 0.0 : *std::max_element(report.error.begin(), report.error.end());
  report.passed = report.max_error <= tol;
  return report;
}

}  // namespace upcr::ad
