#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mdme/tensor.hpp"

namespace mdme {

/// Relative step for central differences: h_i = step * max(1, |x_i|).
inline constexpr double kDefaultFdStep = 1e-4;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the reverse-mode gradient of a scalar function with central
/// differences. Relative error per element is
/// |a - n| / max(|a|, |n|, 1e-8). Throws NumericError when f(x) is not finite.
double check_gradients(const std::function<DiffTensor(const DiffTensor&)>& f, const DiffTensor& x,
                       double step = kDefaultFdStep);

/// Same check over several tensors that `f` reads by capture (model
/// parameters). Values are perturbed in place and restored.
GradCheckResult check_gradients(const std::function<DiffTensor()>& f, std::span<DiffTensor> inputs,
                                double step = kDefaultFdStep);

}  // namespace mdme
