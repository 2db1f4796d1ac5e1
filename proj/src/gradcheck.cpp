#include "mdme/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mdme/errors.hpp"

namespace mdme {

namespace {

double eval_scalar(const std::function<DiffTensor()>& f) {
  DiffTensor y = f();
  double v = y.item();
  if (!std::isfinite(v)) throw NumericError("check_gradients: function value is not finite");
  return v;
}

}  // namespace

GradCheckResult check_gradients(const std::function<DiffTensor()>& f, std::span<DiffTensor> inputs, double step) {
  std::vector<std::vector<double>> analytic;
  {
    GradientTape tape;
    for (auto& t : inputs) tape.watch(t);
    DiffTensor y = f();
    if (!std::isfinite(y.item())) throw NumericError("check_gradients: function value is not finite");
    tape.backward(y);
    for (auto& t : inputs) analytic.push_back(t.grad());
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      const double h = step * std::max(1.0, std::abs(orig));
      values[i] = orig + h;
      const double fp = eval_scalar(f);
      values[i] = orig - h;
      const double fm = eval_scalar(f);
      values[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      if (err > result.max_relative_error) result = {err, k, i, a, numeric};
    }
  }
  return result;
}

double check_gradients(const std::function<DiffTensor(const DiffTensor&)>& f, const DiffTensor& x, double step) {
  DiffTensor leaf = x.detach();
  std::vector<DiffTensor> inputs{leaf};
  return check_gradients([&] { return f(leaf); }, inputs, step).max_relative_error;
}

}  // namespace mdme
