#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "mdme/tensor.hpp"

namespace mdme {

/// Orthogonal length-4 analysis/synthesis filter bank.
struct WaveletFilters {
  std::array<double, 4> lowpass;   // h
  std::array<double, 4> highpass;  // g[n] = (-1)^n h[3 - n]
};

/// Daubechies-2 filters (two vanishing moments).
WaveletFilters db2_filters();

/// Coefficients per axis after one level: floor((n + 3) / 2).
constexpr std::size_t dwt_length(std::size_t n) { return (n + 3) / 2; }

/// One analysis level along a 1D signal. Full zero-padded convolution with
/// the filter, keeping the odd-indexed outputs 1, 3, ..., 2m - 1. Every
/// nonzero coefficient of the infinite transform is kept, so the map is an
/// isometry and its transpose is the inverse.
struct Dwt1d {
  std::vector<double> approx;
  std::vector<double> detail;
};
Dwt1d dwt1d(std::span<const double> x, const WaveletFilters& filters);
/// Inverse of dwt1d for an original signal of length n.
std::vector<double> idwt1d(std::span<const double> approx, std::span<const double> detail, std::size_t n,
                           const WaveletFilters& filters);

/// Differentiable single-filter analysis along `axis` (0 = down columns,
/// 1 = along rows) of a rank-2 tensor.
DiffTensor dwt_axis(const DiffTensor& x, const std::array<double, 4>& filter, int axis);

struct Subbands {
  DiffTensor ll, lh, hl, hh;
};

/// One separable 2D level: rows (axis 1) first, then columns (axis 0).
/// LH is low-pass along rows and high-pass along columns; HL the reverse.
Subbands dwt2d_level(const DiffTensor& x, const WaveletFilters& filters);

/// Multi-level decomposition {LL_J, (LH_l, HL_l, HH_l) for l = 1..J}.
struct WaveletPyramid {
  DiffTensor ll;                               // LL_J
  std::vector<std::array<DiffTensor, 3>> details;  // index l - 1 holds (LH_l, HL_l, HH_l)
  // Input shape of every level; input_shapes[0] is the original matrix.
  // Empty when the pyramid was assembled without a shape record.
  std::vector<std::pair<std::size_t, std::size_t>> input_shapes;

  std::size_t levels() const { return details.size(); }
  std::size_t coefficient_count() const;
  /// Canonical order: LL_J, then for l = 1..J: LH_l, HL_l, HH_l.
  std::vector<DiffTensor> subbands() const;
  /// All coefficients flattened in canonical subband order, row-major within each.
  DiffTensor flatten() const;
};

/// Throws ConfigError when levels == 0 and DimensionError naming the level
/// when a level's input is shorter than the filter along both axes.
WaveletPyramid dwt2d_multilevel(const DiffTensor& x, std::size_t levels, const WaveletFilters& filters);

/// Reconstructs the input of dwt2d_multilevel (values only, untracked).
DiffTensor idwt2d_multilevel(const WaveletPyramid& pyramid, const WaveletFilters& filters);

/// Coefficient count of a J-level pyramid over a rows x cols input.
std::size_t pyramid_coefficient_count(std::size_t rows, std::size_t cols, std::size_t levels);

}  // namespace mdme
