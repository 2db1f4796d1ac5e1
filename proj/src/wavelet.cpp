#include "mdme/wavelet.hpp"

#include <cmath>
#include <string>

#include "mdme/errors.hpp"
#include "mdme/ops.hpp"

namespace mdme {

namespace {

constexpr std::size_t kTaps = 4;

// y[k] = sum_j f[j] * x[2k + 1 - j], zero outside [0, n).
void analyze_line(const double* x, std::size_t n, std::size_t x_stride, const std::array<double, 4>& f, double* y,
                  std::size_t y_stride) {
  const std::size_t m = dwt_length(n);
  for (std::size_t k = 0; k < m; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < kTaps; ++j) {
      const long idx = static_cast<long>(2 * k + 1) - static_cast<long>(j);
      if (idx >= 0 && idx < static_cast<long>(n)) acc += f[j] * x[static_cast<std::size_t>(idx) * x_stride];
    }
    y[k * y_stride] = acc;
  }
}

// Transpose of analyze_line, accumulated into x.
void adjoint_line(const double* y, std::size_t n, std::size_t y_stride, const std::array<double, 4>& f, double* x,
                  std::size_t x_stride) {
  const std::size_t m = dwt_length(n);
  for (std::size_t k = 0; k < m; ++k) {
    const double yk = y[k * y_stride];
    for (std::size_t j = 0; j < kTaps; ++j) {
      const long idx = static_cast<long>(2 * k + 1) - static_cast<long>(j);
      if (idx >= 0 && idx < static_cast<long>(n)) x[static_cast<std::size_t>(idx) * x_stride] += f[j] * yk;
    }
  }
}

// Applies analyze_line along one axis of a rows x cols matrix.
std::vector<double> analyze_axis(std::span<const double> x, std::size_t rows, std::size_t cols,
                                 const std::array<double, 4>& f, int axis) {
  if (axis == 1) {
    const std::size_t mc = dwt_length(cols);
    std::vector<double> out(rows * mc);
    for (std::size_t r = 0; r < rows; ++r) analyze_line(&x[r * cols], cols, 1, f, &out[r * mc], 1);
    return out;
  }
  const std::size_t mr = dwt_length(rows);
  std::vector<double> out(mr * cols);
  for (std::size_t c = 0; c < cols; ++c) analyze_line(&x[c], rows, cols, f, &out[c], cols);
  return out;
}

// Transpose of analyze_axis: maps coefficients back onto a rows x cols input.
void adjoint_axis(std::span<const double> y, std::size_t rows, std::size_t cols, const std::array<double, 4>& f,
                  int axis, std::vector<double>& x) {
  if (axis == 1) {
    const std::size_t mc = dwt_length(cols);
    for (std::size_t r = 0; r < rows; ++r) adjoint_line(&y[r * mc], cols, 1, f, &x[r * cols], 1);
    return;
  }
  for (std::size_t c = 0; c < cols; ++c) adjoint_line(&y[c], rows, cols, f, &x[c], cols);
}

}  // namespace

WaveletFilters db2_filters() {
  const double s3 = std::sqrt(3.0);
  const double norm = 4.0 * std::sqrt(2.0);
  WaveletFilters f;
  f.lowpass = {(1.0 + s3) / norm, (3.0 + s3) / norm, (3.0 - s3) / norm, (1.0 - s3) / norm};
  for (std::size_t n = 0; n < kTaps; ++n) {
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    f.highpass[n] = sign * f.lowpass[kTaps - 1 - n];
  }
  return f;
}

Dwt1d dwt1d(std::span<const double> x, const WaveletFilters& filters) {
  if (x.empty()) throw DimensionError("dwt1d: empty signal");
  const std::size_t m = dwt_length(x.size());
  Dwt1d out{std::vector<double>(m), std::vector<double>(m)};
  analyze_line(x.data(), x.size(), 1, filters.lowpass, out.approx.data(), 1);
  analyze_line(x.data(), x.size(), 1, filters.highpass, out.detail.data(), 1);
  return out;
}

std::vector<double> idwt1d(std::span<const double> approx, std::span<const double> detail, std::size_t n,
                           const WaveletFilters& filters) {
  const std::size_t m = dwt_length(n);
  if (approx.size() != m || detail.size() != m) {
    throw DimensionError("idwt1d: expected " + std::to_string(m) + " coefficients per band for length " +
                         std::to_string(n));
  }
  std::vector<double> x(n, 0.0);
  adjoint_line(approx.data(), n, 1, filters.lowpass, x.data(), 1);
  adjoint_line(detail.data(), n, 1, filters.highpass, x.data(), 1);
  return x;
}

DiffTensor dwt_axis(const DiffTensor& x, const std::array<double, 4>& filter, int axis) {
  if (x.rank() != 2) throw DimensionError("dwt_axis: expected a matrix, got " + shape_str(x.shape()));
  if (axis != 0 && axis != 1) throw ConfigError("dwt_axis: axis must be 0 or 1");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (rows == 0 || cols == 0) throw DimensionError("dwt_axis: empty input " + shape_str(x.shape()));
  std::vector<double> out = analyze_axis(x.data(), rows, cols, filter, axis);
  Shape shape = axis == 1 ? Shape{rows, dwt_length(cols)} : Shape{dwt_length(rows), cols};
  return make_op(std::move(shape), std::move(out), {x}, [x, filter, rows, cols, axis](const detail::Node& self) {
    std::vector<double> g(rows * cols, 0.0);
    adjoint_axis(self.grad, rows, cols, filter, axis, g);
    accumulate_grad(x, g);
  });
}

Subbands dwt2d_level(const DiffTensor& x, const WaveletFilters& filters) {
  DiffTensor low = dwt_axis(x, filters.lowpass, 1);
  DiffTensor high = dwt_axis(x, filters.highpass, 1);
  return {dwt_axis(low, filters.lowpass, 0), dwt_axis(low, filters.highpass, 0), dwt_axis(high, filters.lowpass, 0),
          dwt_axis(high, filters.highpass, 0)};
}

std::size_t WaveletPyramid::coefficient_count() const {
  std::size_t n = ll.numel();
  for (const auto& d : details)
    for (const auto& band : d) n += band.numel();
  return n;
}

std::vector<DiffTensor> WaveletPyramid::subbands() const {
  std::vector<DiffTensor> out;
  out.reserve(1 + 3 * details.size());
  out.push_back(ll);
  for (const auto& d : details)
    for (const auto& band : d) out.push_back(band);
  return out;
}

DiffTensor WaveletPyramid::flatten() const {
  std::vector<DiffTensor> parts;
  for (const auto& band : subbands()) parts.push_back(reshape(band, {1, band.numel()}));
  return reshape(concat_cols(parts), {coefficient_count()});
}

WaveletPyramid dwt2d_multilevel(const DiffTensor& x, std::size_t levels, const WaveletFilters& filters) {
  if (levels == 0) throw ConfigError("dwt2d_multilevel: level count must be at least 1");
  if (x.rank() != 2) throw DimensionError("dwt2d_multilevel: expected a matrix, got " + shape_str(x.shape()));
  WaveletPyramid p;
  DiffTensor current = x;
  for (std::size_t l = 1; l <= levels; ++l) {
    const std::size_t r = current.dim(0), c = current.dim(1);
    if (r == 0 || c == 0 || (r < kTaps && c < kTaps)) {
      throw DimensionError("dwt2d_multilevel: level " + std::to_string(l) + " input " + shape_str(current.shape()) +
                           " is too small to decompose (level overflow, requested " + std::to_string(levels) +
                           " levels)");
    }
    p.input_shapes.emplace_back(r, c);
    Subbands s = dwt2d_level(current, filters);
    p.details.push_back({s.lh, s.hl, s.hh});
    current = s.ll;
  }
  p.ll = current;
  return p;
}

DiffTensor idwt2d_multilevel(const WaveletPyramid& pyramid, const WaveletFilters& filters) {
  const std::size_t levels = pyramid.levels();
  if (levels == 0 || pyramid.input_shapes.size() != levels) {
    throw ConfigError("idwt2d_multilevel: pyramid has no original-shape record");
  }
  std::vector<double> approx(pyramid.ll.data().begin(), pyramid.ll.data().end());
  for (std::size_t l = levels; l >= 1; --l) {
    const auto [rows, cols] = pyramid.input_shapes[l - 1];
    const std::size_t mr = dwt_length(rows), mc = dwt_length(cols);
    const auto& [lh, hl, hh] = pyramid.details[l - 1];
    if (approx.size() != mr * mc || lh.numel() != mr * mc || hl.numel() != mr * mc || hh.numel() != mr * mc) {
      throw DimensionError("idwt2d_multilevel: subband sizes at level " + std::to_string(l) +
                           " do not match the shape record");
    }
    // Undo the column stage, then the row stage.
    std::vector<double> low(rows * mc, 0.0), high(rows * mc, 0.0);
    adjoint_axis(approx, rows, mc, filters.lowpass, 0, low);
    adjoint_axis(lh.data(), rows, mc, filters.highpass, 0, low);
    adjoint_axis(hl.data(), rows, mc, filters.lowpass, 0, high);
    adjoint_axis(hh.data(), rows, mc, filters.highpass, 0, high);
    std::vector<double> x(rows * cols, 0.0);
    adjoint_axis(low, rows, cols, filters.lowpass, 1, x);
    adjoint_axis(high, rows, cols, filters.highpass, 1, x);
    approx = std::move(x);
  }
  const auto [rows, cols] = pyramid.input_shapes[0];
  return DiffTensor::matrix(rows, cols, std::move(approx));
}

std::size_t pyramid_coefficient_count(std::size_t rows, std::size_t cols, std::size_t levels) {
  std::size_t total = 0;
  for (std::size_t l = 1; l <= levels; ++l) {
    rows = dwt_length(rows);
    cols = dwt_length(cols);
    total += 3 * rows * cols;
  }
  return total + rows * cols;
}

}  // namespace mdme
