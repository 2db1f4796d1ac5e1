#pragma once

#include <span>

#include "mdme/tensor.hpp"

namespace mdme {

/// Arguments of log() are clamped to at least this value.
inline constexpr double kLogFloor = 1e-12;

// Elementwise binary ops take equal shapes, or one operand with a single
// element which is broadcast. No other broadcasting is supported.
DiffTensor add(const DiffTensor& a, const DiffTensor& b);
DiffTensor sub(const DiffTensor& a, const DiffTensor& b);
DiffTensor mul(const DiffTensor& a, const DiffTensor& b);
DiffTensor div(const DiffTensor& a, const DiffTensor& b);

DiffTensor scale(const DiffTensor& x, double factor);
DiffTensor add_scalar(const DiffTensor& x, double value);
DiffTensor neg(const DiffTensor& x);

DiffTensor exp(const DiffTensor& x);
/// Natural log of max(x, kLogFloor); zero gradient where clamped.
DiffTensor log(const DiffTensor& x);
DiffTensor square(const DiffTensor& x);
/// sqrt(x + floor), so the gradient stays finite at zero.
DiffTensor sqrt(const DiffTensor& x, double floor = 0.0);
DiffTensor elu(const DiffTensor& x, double alpha = 1.0);
/// Zero gradient outside [lo, hi].
DiffTensor clamp(const DiffTensor& x, double lo, double hi);

DiffTensor sum(const DiffTensor& x);
DiffTensor mean(const DiffTensor& x);
/// Euclidean norm over all elements; gradient is zero at the origin.
DiffTensor l2norm(const DiffTensor& x);

/// [m x k] * [k x n] -> [m x n].
DiffTensor matmul(const DiffTensor& a, const DiffTensor& b);
/// Adds a length-n bias to every row of an [m x n] matrix.
DiffTensor add_rowwise(const DiffTensor& x, const DiffTensor& bias);

DiffTensor reshape(const DiffTensor& x, Shape shape);
DiffTensor flatten(const DiffTensor& x);
/// Concatenates rank-2 tensors with equal row counts along columns.
DiffTensor concat_cols(std::span<const DiffTensor> parts);
DiffTensor slice_cols(const DiffTensor& x, std::size_t begin, std::size_t count);
/// Stacks tensors of equal element count as rows of a matrix.
DiffTensor stack_rows(std::span<const DiffTensor> rows);
DiffTensor slice_rows(const DiffTensor& x, std::size_t begin, std::size_t count);

/// Same-length 1D convolution (cross-correlation) with zero padding.
/// x: [C_in x T], w: [C_out x C_in x K] with K odd, b: [C_out] or undefined.
DiffTensor conv1d(const DiffTensor& x, const DiffTensor& w, const DiffTensor& b);

enum class NormMode { train, eval };

/// Running statistics owned by one batch-norm layer.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Per-channel normalisation of x: [C x N] over its N columns.
/// Train mode uses batch statistics and updates `state`; eval mode uses the
/// running statistics.
DiffTensor batchnorm1d(const DiffTensor& x, const DiffTensor& gamma, const DiffTensor& beta,
                       BatchNormState& state, NormMode mode);

}  // namespace mdme
