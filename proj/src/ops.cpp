#include "mdme/ops.hpp"

#include <algorithm>
#include <cmath>

#include "mdme/errors.hpp"

namespace mdme {

namespace {

// Binary elementwise op with single-element broadcast on either side.
// df_da/df_db return the partial derivatives at (a_i, b_i).
template <typename F, typename DA, typename DB>
DiffTensor binary(const char* name, const DiffTensor& a, const DiffTensor& b, F f, DA df_da, DB df_db) {
  const std::size_t na = a.numel(), nb = b.numel();
  const bool same = a.shape() == b.shape();
  if (!same && na != 1 && nb != 1) {
    throw DimensionError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " are incompatible");
  }
  const bool a_small = !same && na == 1;
  const bool b_small = !same && nb == 1;
  Shape shape = a_small ? b.shape() : a.shape();
  const std::size_t n = std::max(na, nb);
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[a_small ? 0 : i], bd[b_small ? 0 : i]);

  return make_op(std::move(shape), std::move(out), {a, b},
                 [a, b, a_small, b_small, n, df_da, df_db](const detail::Node& self) {
                   auto ad = a.data();
                   auto bd = b.data();
                   if (a.tracked()) {
                     std::vector<double> ga(a.numel(), 0.0);
                     for (std::size_t i = 0; i < n; ++i) {
                       double x = ad[a_small ? 0 : i], y = bd[b_small ? 0 : i];
                       ga[a_small ? 0 : i] += self.grad[i] * df_da(x, y);
                     }
                     accumulate_grad(a, ga);
                   }
                   if (b.tracked()) {
                     std::vector<double> gb(b.numel(), 0.0);
                     for (std::size_t i = 0; i < n; ++i) {
                       double x = ad[a_small ? 0 : i], y = bd[b_small ? 0 : i];
                       gb[b_small ? 0 : i] += self.grad[i] * df_db(x, y);
                     }
                     accumulate_grad(b, gb);
                   }
                 });
}

// Unary elementwise op; df(x, y) is the derivative given input x and output y.
template <typename F, typename DF>
DiffTensor unary(const DiffTensor& x, F f, DF df) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  return make_op(x.shape(), std::move(out), {x}, [x, df](const detail::Node& self) {
    auto xd = x.data();
    std::vector<double> g(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) g[i] = self.grad[i] * df(xd[i], self.data[i]);
    accumulate_grad(x, g);
  });
}

void require_rank(const char* name, const DiffTensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(name) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(x.shape()));
  }
}

}  // namespace

DiffTensor add(const DiffTensor& a, const DiffTensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

DiffTensor sub(const DiffTensor& a, const DiffTensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

DiffTensor mul(const DiffTensor& a, const DiffTensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

DiffTensor div(const DiffTensor& a, const DiffTensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

DiffTensor scale(const DiffTensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

DiffTensor add_scalar(const DiffTensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

DiffTensor neg(const DiffTensor& x) { return scale(x, -1.0); }

DiffTensor exp(const DiffTensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

DiffTensor log(const DiffTensor& x) {
  return unary(
      x, [](double v) { return std::log(std::max(v, kLogFloor)); },
      [](double v, double) { return v >= kLogFloor ? 1.0 / v : 0.0; });
}

DiffTensor square(const DiffTensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

DiffTensor sqrt(const DiffTensor& x, double floor) {
  return unary(
      x, [floor](double v) { return std::sqrt(v + floor); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

DiffTensor elu(const DiffTensor& x, double alpha) {
  return unary(
      x, [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); },
      [alpha](double v, double y) { return v > 0.0 ? 1.0 : y + alpha; });
}

DiffTensor clamp(const DiffTensor& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

DiffTensor sum(const DiffTensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op({1}, {s}, {x}, [x](const detail::Node& self) {
    std::vector<double> g(x.numel(), self.grad[0]);
    accumulate_grad(x, g);
  });
}

DiffTensor mean(const DiffTensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

DiffTensor l2norm(const DiffTensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  double norm = std::sqrt(s);
  return make_op({1}, {norm}, {x}, [x](const detail::Node& self) {
    double n = self.data[0];
    std::vector<double> g(x.numel(), 0.0);
    if (n > 0.0) {
      auto xd = x.data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[0] * xd[i] / n;
    }
    accumulate_grad(x, g);
  });
}

DiffTensor matmul(const DiffTensor& a, const DiffTensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " are incompatible");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bd[p * n];
      double* crow = &c[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return make_op({m, n}, std::move(c), {a, b}, [a, b, m, k, n](const detail::Node& self) {
    const auto& dc = self.grad;
    auto ad = a.data();
    auto bd = b.data();
    if (a.tracked()) {
      // dA = dC * B^T
      std::vector<double> da(m * k, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += dc[i * n + j] * bd[p * n + j];
          da[i * k + p] = s;
        }
      }
      accumulate_grad(a, da);
    }
    if (b.tracked()) {
      // dB = A^T * dC
      std::vector<double> db(k * n, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = ad[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * dc[i * n + j];
        }
      }
      accumulate_grad(b, db);
    }
  });
}

DiffTensor add_rowwise(const DiffTensor& x, const DiffTensor& bias) {
  require_rank("add_rowwise", x, 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw DimensionError("add_rowwise: bias " + shape_str(bias.shape()) + " does not fit rows of " +
                         shape_str(x.shape()));
  }
  auto xd = x.data();
  auto bd = bias.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] + bd[j];
  return make_op({m, n}, std::move(out), {x, bias}, [x, bias, m, n](const detail::Node& self) {
    accumulate_grad(x, self.grad);
    if (bias.tracked()) {
      std::vector<double> gb(n, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
      accumulate_grad(bias, gb);
    }
  });
}

DiffTensor reshape(const DiffTensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op(std::move(shape), std::move(out), {x},
                 [x](const detail::Node& self) { accumulate_grad(x, self.grad); });
}

DiffTensor flatten(const DiffTensor& x) { return reshape(x, {x.numel()}); }

DiffTensor concat_cols(std::span<const DiffTensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rank() == 2 ? parts[0].dim(0) : 1;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    std::size_t r = p.rank() == 2 ? p.dim(0) : 1;
    if (p.rank() > 2 || r != rows) {
      throw DimensionError("concat_cols: part of shape " + shape_str(p.shape()) + " does not have " +
                           std::to_string(rows) + " rows");
    }
    widths.push_back(p.numel() / rows);
    total += widths.back();
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto d = parts[k].data();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + offset + j] = d[i * widths[k] + j];
    offset += widths[k];
  }
  std::vector<DiffTensor> inputs(parts.begin(), parts.end());
  auto backward = [inputs, widths, rows, total](const detail::Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (inputs[k].tracked()) {
        std::vector<double> g(rows * widths[k]);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] = self.grad[i * total + offset + j];
        accumulate_grad(inputs[k], g);
      }
      offset += widths[k];
    }
  };
  return make_op({rows, total}, std::move(out), std::span<const DiffTensor>(inputs), backward);
}

DiffTensor slice_cols(const DiffTensor& x, std::size_t begin, std::size_t count) {
  require_rank("slice_cols", x, 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (begin + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(x.shape()));
  }
  auto xd = x.data();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = xd[i * n + begin + j];
  return make_op({m, count}, std::move(out), {x}, [x, m, n, begin, count](const detail::Node& self) {
    std::vector<double> g(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] = self.grad[i * count + j];
    accumulate_grad(x, g);
  });
}

DiffTensor stack_rows(std::span<const DiffTensor> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no inputs");
  std::vector<DiffTensor> flat;
  flat.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.numel() != rows[0].numel()) {
      throw DimensionError("stack_rows: row of shape " + shape_str(r.shape()) + " differs from " +
                           shape_str(rows[0].shape()));
    }
    flat.push_back(reshape(r, {1, r.numel()}));
  }
  // [1 x n] pieces laid side by side are already the row-major [B x n] layout.
  DiffTensor wide = concat_cols(flat);
  return reshape(wide, {rows.size(), rows[0].numel()});
}

DiffTensor slice_rows(const DiffTensor& x, std::size_t begin, std::size_t count) {
  require_rank("slice_rows", x, 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (begin + count > m) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(x.shape()));
  }
  auto xd = x.data();
  std::vector<double> out(xd.begin() + begin * n, xd.begin() + (begin + count) * n);
  return make_op({count, n}, std::move(out), {x}, [x, m, n, begin, count](const detail::Node& self) {
    std::vector<double> g(m * n, 0.0);
    std::copy(self.grad.begin(), self.grad.end(), g.begin() + begin * n);
    accumulate_grad(x, g);
  });
}

DiffTensor conv1d(const DiffTensor& x, const DiffTensor& w, const DiffTensor& b) {
  require_rank("conv1d input", x, 2);
  require_rank("conv1d kernel", w, 3);
  const std::size_t cin = x.dim(0), t_len = x.dim(1);
  const std::size_t cout = w.dim(0), k_len = w.dim(2);
  if (w.dim(1) != cin) {
    throw DimensionError("conv1d: kernel " + shape_str(w.shape()) + " does not match input " + shape_str(x.shape()));
  }
  if (k_len % 2 == 0) throw ConfigError("conv1d: kernel size " + std::to_string(k_len) + " is even");
  if (t_len == 0) throw DimensionError("conv1d: empty input");
  if (b.defined() && b.numel() != cout) {
    throw DimensionError("conv1d: bias " + shape_str(b.shape()) + " does not match " + std::to_string(cout) +
                         " output channels");
  }
  const long pad = static_cast<long>(k_len / 2);
  const long tl = static_cast<long>(t_len);
  auto xd = x.data();
  auto wd = w.data();
  std::vector<double> out(cout * t_len, 0.0);
  for (std::size_t o = 0; o < cout; ++o) {
    double bias = b.defined() ? b.data()[o] : 0.0;
    for (std::size_t t = 0; t < t_len; ++t) out[o * t_len + t] = bias;
    for (std::size_t i = 0; i < cin; ++i) {
      for (std::size_t k = 0; k < k_len; ++k) {
        const double wv = wd[(o * cin + i) * k_len + k];
        const long shift = static_cast<long>(k) - pad;
        const long t0 = std::max(0L, -shift), t1 = std::min(tl, tl - shift);
        for (long t = t0; t < t1; ++t) out[o * t_len + t] += wv * xd[i * t_len + t + shift];
      }
    }
  }
  DiffTensor bias_in = b.defined() ? b : DiffTensor();
  auto backward = [x, w, bias_in, cin, cout, t_len, k_len, pad, tl](const detail::Node& self) {
    auto xd = x.data();
    auto wd = w.data();
    const auto& dy = self.grad;
    std::vector<double> dx(x.tracked() ? cin * t_len : 0, 0.0);
    std::vector<double> dw(w.tracked() ? cout * cin * k_len : 0, 0.0);
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t i = 0; i < cin; ++i) {
        for (std::size_t k = 0; k < k_len; ++k) {
          const long shift = static_cast<long>(k) - pad;
          const long t0 = std::max(0L, -shift), t1 = std::min(tl, tl - shift);
          const std::size_t widx = (o * cin + i) * k_len + k;
          double acc = 0.0;
          for (long t = t0; t < t1; ++t) {
            const double g = dy[o * t_len + t];
            if (!dx.empty()) dx[i * t_len + t + shift] += wd[widx] * g;
            acc += g * xd[i * t_len + t + shift];
          }
          if (!dw.empty()) dw[widx] += acc;
        }
      }
    }
    if (!dx.empty()) accumulate_grad(x, dx);
    if (!dw.empty()) accumulate_grad(w, dw);
    if (bias_in.defined() && bias_in.tracked()) {
      std::vector<double> db(cout, 0.0);
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t t = 0; t < t_len; ++t) db[o] += dy[o * t_len + t];
      accumulate_grad(bias_in, db);
    }
  };
  if (bias_in.defined()) return make_op({cout, t_len}, std::move(out), {x, w, bias_in}, backward);
  return make_op({cout, t_len}, std::move(out), {x, w}, backward);
}

DiffTensor batchnorm1d(const DiffTensor& x, const DiffTensor& gamma, const DiffTensor& beta, BatchNormState& state,
                       NormMode mode) {
  require_rank("batchnorm1d", x, 2);
  const std::size_t c = x.dim(0), n = x.dim(1);
  if (gamma.numel() != c || beta.numel() != c || state.running_mean.size() != c || state.running_var.size() != c) {
    throw DimensionError("batchnorm1d: affine/state sizes do not match " + std::to_string(c) + " channels");
  }
  if (mode == NormMode::train && n < 2) {
    throw DimensionError("batchnorm1d: train mode needs at least 2 samples per channel, got " + std::to_string(n));
  }
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<double> xhat(c * n), inv_std(c), out(c * n);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* row = &xd[ch * n];
    double mu, var;
    if (mode == NormMode::train) {
      mu = 0.0;
      for (std::size_t j = 0; j < n; ++j) mu += row[j];
      mu /= static_cast<double>(n);
      var = 0.0;
      for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= static_cast<double>(n);
      const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
      state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mu;
      state.running_var[ch] = (1.0 - state.momentum) * state.running_var[ch] + state.momentum * unbiased;
    } else {
      mu = state.running_mean[ch];
      var = state.running_var[ch];
    }
    inv_std[ch] = 1.0 / std::sqrt(var + state.eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[ch * n + j] = (row[j] - mu) * inv_std[ch];
      out[ch * n + j] = gd[ch] * xhat[ch * n + j] + bd[ch];
    }
  }
  const bool train = mode == NormMode::train;
  return make_op({c, n}, std::move(out), {x, gamma, beta},
                 [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), c, n,
                  train](const detail::Node& self) {
                   const auto& dy = self.grad;
                   auto gd = gamma.data();
                   std::vector<double> dg(c, 0.0), dbeta(c, 0.0), dx(c * n, 0.0);
                   for (std::size_t ch = 0; ch < c; ++ch) {
                     double sum_dy = 0.0, sum_dy_xhat = 0.0;
                     for (std::size_t j = 0; j < n; ++j) {
                       sum_dy += dy[ch * n + j];
                       sum_dy_xhat += dy[ch * n + j] * xhat[ch * n + j];
                     }
                     dg[ch] = sum_dy_xhat;
                     dbeta[ch] = sum_dy;
                     const double scale_ = gd[ch] * inv_std[ch];
                     const double nn = static_cast<double>(n);
                     for (std::size_t j = 0; j < n; ++j) {
                       if (train) {
                         dx[ch * n + j] =
                             scale_ * (dy[ch * n + j] - sum_dy / nn - xhat[ch * n + j] * sum_dy_xhat / nn);
                       } else {
                         dx[ch * n + j] = scale_ * dy[ch * n + j];
                       }
                     }
                   }
                   accumulate_grad(x, dx);
                   accumulate_grad(gamma, dg);
                   accumulate_grad(beta, dbeta);
                 });
}

}  // namespace mdme
