#pragma once

#include <cmath>
#include <vector>

#include "mdme/embedding.hpp"
#include "mdme/rng.hpp"
#include "mdme/tensor.hpp"

namespace mdme::testing {

inline DiffTensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return DiffTensor(std::move(shape), std::move(v));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double energy(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

/// Decoder weights that copy the latest goal frame to the output: every
/// hidden layer carries it shifted by +10 so the ELU stays linear.
inline void make_pass_through(MdmeModel& model) {
  const auto& cfg = model.config();
  const std::size_t n = cfg.goal_dim;
  const std::size_t offset = model.structured_width() + (model.uses_latent() ? cfg.latent : 0);
  auto& p = model.params();
  const double shift = 10.0;
  std::size_t in_offset = offset;
  double carried = 0.0;
  for (auto& layer : p.decoder) {
    auto w = layer.w.mutable_data();
    auto b = layer.b.mutable_data();
    const std::size_t out = layer.w.dim(1);
    std::fill(w.begin(), w.end(), 0.0);
    std::fill(b.begin(), b.end(), 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      w[(in_offset + c) * out + c] = 1.0;
      b[c] = shift - carried;
    }
    carried = shift;
    in_offset = 0;
  }
  auto w = p.output.w.mutable_data();
  auto b = p.output.b.mutable_data();
  const std::size_t out = p.output.w.dim(1);
  std::fill(w.begin(), w.end(), 0.0);
  std::fill(b.begin(), b.end(), 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    w[(in_offset + c) * out + c] = 1.0;
    b[c] = -carried;
  }
}

}  // namespace mdme::testing
