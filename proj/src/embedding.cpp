#include "mdme/embedding.hpp"

#include <cmath>
#include <numbers>

#include "mdme/errors.hpp"

namespace mdme {

namespace {

const std::vector<std::string> kAblationNames = {
    "full", "no-entropy", "no-history", "no-latest-frame", "wavelet-only", "vae-only", "fft-instead-of-dwt"};

DiffTensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return DiffTensor(std::move(shape), std::move(v));
}

Dense make_dense(std::size_t in, std::size_t out, Rng& rng) {
  return {he_uniform({in, out}, in, rng), DiffTensor::zeros({out})};
}

void check_windows(const std::vector<GoalWindow>& windows, const MdmeConfig& cfg) {
  if (windows.empty()) throw ConfigError("encoder: empty batch");
  for (const auto& w : windows) {
    if (w.history != cfg.history || w.goal_dim != cfg.goal_dim || w.values.size() != cfg.history * cfg.goal_dim) {
      throw ConfigError("encoder: window is " + std::to_string(w.history) + " frames x " + std::to_string(w.goal_dim) +
                        " channels, config expects " + std::to_string(cfg.history) + " x " +
                        std::to_string(cfg.goal_dim));
    }
  }
}

// [n_g x H] channels-by-time view of a window.
DiffTensor channels_by_time(const GoalWindow& w) {
  std::vector<double> v(w.values.size());
  for (std::size_t t = 0; t < w.history; ++t)
    for (std::size_t c = 0; c < w.goal_dim; ++c) v[c * w.history + t] = w.at(t, c);
  return DiffTensor::matrix(w.goal_dim, w.history, std::move(v));
}

void check_finite(const DiffTensor& t, const std::string& layer) {
  for (double v : t.data())
    if (!std::isfinite(v)) throw NumericError("non-finite output from layer '" + layer + "'");
}

DiffTensor as_row(const DiffTensor& x) { return reshape(x, {1, x.numel()}); }

}  // namespace

void MdmeConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (history == 0) fail("history must be at least 1");
  if (goal_dim == 0) fail("goal_dim must be at least 1");
  if (conv_channels.empty()) fail("conv_channels must not be empty");
  for (auto c : conv_channels)
    if (c == 0) fail("conv_channels entries must be positive");
  if (kernel % 2 == 0) fail("kernel must be odd");
  if (levels == 0) fail("levels must be at least 1");
  if (latent == 0) fail("latent must be at least 1");
  for (auto d : encoder_hidden)
    if (d == 0) fail("encoder_hidden entries must be positive");
  for (auto d : decoder_hidden)
    if (d == 0) fail("decoder_hidden entries must be positive");
  if (decoder_output() == 0) fail("action_dim must be at least 1");
  if (!(log_sigma_min < log_sigma_max)) fail("log_sigma_min must be below log_sigma_max");
  if (!(elu_alpha > 0.0)) fail("elu_alpha must be positive");
}

const std::vector<std::string>& ablation_names() { return kAblationNames; }

std::string ablation_name(Ablation a) { return kAblationNames[static_cast<std::size_t>(a)]; }

Ablation parse_ablation(const std::string& name) {
  for (std::size_t i = 0; i < kAblationNames.size(); ++i)
    if (kAblationNames[i] == name) return static_cast<Ablation>(i);
  std::string valid;
  for (const auto& n : kAblationNames) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown ablation '" + name + "'; valid keys: " + valid);
}

DiffTensor Dense::operator()(const DiffTensor& x) const { return add_rowwise(matmul(x, w), b); }

DiffTensor subband_entropy(const DiffTensor& coeffs) {
  const DiffTensor sq = square(coeffs);
  const DiffTensor total = sum(sq);
  if (total.item() == 0.0) return scale(sum(coeffs), 0.0);
  const DiffTensor p = div(sq, total);
  const DiffTensor s = scale(sum(mul(p, log(p))), -1.0 / std::numbers::ln2);
  return clamp(s, 0.0, std::log2(static_cast<double>(coeffs.numel())));
}

DiffTensor entropy_vector(const WaveletPyramid& pyramid) {
  std::vector<DiffTensor> parts;
  for (const auto& band : pyramid.subbands()) parts.push_back(reshape(subband_entropy(band), {1, 1}));
  return concat_cols(parts);
}

DiffTensor fft_magnitude(const DiffTensor& x) {
  if (x.rank() != 2) throw DimensionError("fft_magnitude: expected a matrix, got " + shape_str(x.shape()));
  const std::size_t h = x.dim(1);
  const std::size_t k = h / 2 + 1;
  std::vector<double> c(h * k), s(h * k);
  for (std::size_t t = 0; t < h; ++t)
    for (std::size_t f = 0; f < k; ++f) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(f * t) / static_cast<double>(h);
      c[t * k + f] = std::cos(angle);
      s[t * k + f] = -std::sin(angle);
    }
  const DiffTensor re = matmul(x, DiffTensor::matrix(h, k, std::move(c)));
  const DiffTensor im = matmul(x, DiffTensor::matrix(h, k, std::move(s)));
  return as_row(sqrt(add(square(re), square(im)), 1e-12));
}

std::vector<DiffTensor> conv_front_end(const std::vector<GoalWindow>& windows, MdmeParams& params,
                                       const MdmeConfig& cfg, NormMode mode) {
  check_windows(windows, cfg);
  if (params.conv.size() != cfg.conv_channels.size()) throw ConfigError("conv_front_end: parameters do not match config");
  const std::size_t h = cfg.history;
  std::vector<DiffTensor> xs;
  for (const auto& w : windows) xs.push_back(channels_by_time(w));
  for (auto& stage : params.conv) {
    std::vector<DiffTensor> ys;
    ys.reserve(xs.size());
    for (const auto& x : xs) ys.push_back(conv1d(x, stage.w, DiffTensor()));
    const DiffTensor joined = ys.size() == 1 ? ys[0] : concat_cols(ys);
    const DiffTensor act = elu(batchnorm1d(joined, stage.gamma, stage.beta, stage.stats, mode), cfg.elu_alpha);
    xs.clear();
    if (windows.size() == 1) {
      xs.push_back(act);
    } else {
      for (std::size_t b = 0; b < windows.size(); ++b) xs.push_back(slice_cols(act, b * h, h));
    }
  }
  return xs;
}

DiffTensor encode_structured(const std::vector<GoalWindow>& windows, MdmeParams& params, const MdmeConfig& cfg,
                             const WaveletFilters& filters, NormMode mode) {
  std::vector<DiffTensor> rows;
  for (const auto& x : conv_front_end(windows, params, cfg, mode))
    rows.push_back(entropy_vector(dwt2d_multilevel(x, cfg.levels, filters)));
  return rows.size() == 1 ? rows[0] : stack_rows(rows);
}

StochasticLatent encode_unstructured(const std::vector<GoalWindow>& windows, const MdmeParams& params,
                                     const MdmeConfig& cfg, Rng& rng, LatentMode mode) {
  check_windows(windows, cfg);
  const std::size_t width = cfg.history * cfg.goal_dim;
  std::vector<double> flat;
  flat.reserve(windows.size() * width);
  for (const auto& w : windows) flat.insert(flat.end(), w.values.begin(), w.values.end());
  DiffTensor h = DiffTensor::matrix(windows.size(), width, std::move(flat));
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    h = elu(params.encoder[l](h), cfg.elu_alpha);
    check_finite(h, "encoder." + std::to_string(l));
  }
  StochasticLatent out;
  out.mu = params.mu_head(h);
  check_finite(out.mu, "encoder.mu");
  out.log_sigma = clamp(params.log_sigma_head(h), cfg.log_sigma_min, cfg.log_sigma_max);
  check_finite(out.log_sigma, "encoder.log_sigma");
  if (mode == LatentMode::mean) {
    out.z = out.mu;
    return out;
  }
  std::vector<double> eps(out.mu.numel());
  for (auto& e : eps) e = rng.normal();
  out.z = add(out.mu, mul(exp(out.log_sigma), DiffTensor(out.mu.shape(), std::move(eps))));
  return out;
}

DiffTensor kl_to_standard_normal(const StochasticLatent& latent) {
  const double rows = latent.mu.rank() == 2 ? static_cast<double>(latent.mu.dim(0)) : 1.0;
  const DiffTensor two_log_sigma = scale(latent.log_sigma, 2.0);
  const DiffTensor terms = sub(add(square(latent.mu), exp(two_log_sigma)), add_scalar(two_log_sigma, 1.0));
  return scale(sum(terms), 0.5 / rows);
}

DiffTensor decode(const DiffTensor& zw, const DiffTensor& zv, const DiffTensor& latest_goal, const DiffTensor& proprio,
                  const DiffTensor& prev_action, const MdmeParams& params, const MdmeConfig& cfg) {
  std::vector<DiffTensor> parts;
  std::size_t rows = 0;
  for (const auto* p : {&zw, &zv, &latest_goal, &proprio, &prev_action}) {
    if (!p->defined() || p->numel() == 0) continue;
    DiffTensor part = p->rank() == 1 ? as_row(*p) : *p;
    if (part.rank() != 2) throw ConfigError("decode: inputs must be vectors or [B x n] matrices");
    if (rows && part.dim(0) != rows) throw ConfigError("decode: inputs disagree on batch size");
    rows = part.dim(0);
    parts.push_back(part);
  }
  if (parts.empty()) throw ConfigError("decode: no inputs");
  for (const auto& p : parts)
    for (double v : p.data())
      if (!std::isfinite(v)) throw NumericError("decode: non-finite input");
  DiffTensor h = parts.size() == 1 ? parts[0] : concat_cols(parts);
  const std::size_t expected = params.decoder.empty() ? params.output.w.dim(0) : params.decoder[0].w.dim(0);
  if (h.dim(1) != expected) {
    throw ConfigError("decode: input width " + std::to_string(h.dim(1)) + " does not match decoder width " +
                      std::to_string(expected));
  }
  for (const auto& layer : params.decoder) h = elu(layer(h), cfg.elu_alpha);
  return params.output(h);
}

MdmeModel::MdmeModel(const MdmeConfig& cfg, Ablation ablation, std::uint64_t seed)
    : cfg_(cfg), ablation_(ablation), filters_(db2_filters()) {
  cfg_.validate();
  if (ablation_ == Ablation::no_history) cfg_.history = 1;
  Rng rng(seed);
  if (uses_structured()) {
    std::size_t in = cfg_.goal_dim;
    for (auto out : cfg_.conv_channels) {
      ConvStage s;
      s.w = he_uniform({out, in, cfg_.kernel}, in * cfg_.kernel, rng);
      s.gamma = DiffTensor::filled({out}, 1.0);
      s.beta = DiffTensor::zeros({out});
      s.stats = BatchNormState(out);
      params_.conv.push_back(std::move(s));
      in = out;
    }
    if (ablation_ != Ablation::no_entropy && ablation_ != Ablation::fft_instead_of_dwt) {
      // Fail early on a pyramid that would overflow.
      dwt2d_multilevel(DiffTensor::zeros({cfg_.phase_channels(), cfg_.history}), cfg_.levels, filters_);
    }
  }
  if (uses_latent()) {
    std::size_t in = cfg_.history * cfg_.goal_dim;
    for (auto d : cfg_.encoder_hidden) {
      params_.encoder.push_back(make_dense(in, d, rng));
      in = d;
    }
    params_.mu_head = make_dense(in, cfg_.latent, rng);
    params_.log_sigma_head = make_dense(in, cfg_.latent, rng);
  }
  std::size_t in = decoder_input_width();
  for (auto d : cfg_.decoder_hidden) {
    params_.decoder.push_back(make_dense(in, d, rng));
    in = d;
  }
  params_.output = make_dense(in, cfg_.decoder_output(), rng);
}

std::size_t MdmeModel::structured_width() const {
  switch (ablation_) {
    case Ablation::vae_only:
      return 0;
    case Ablation::no_entropy:
      return pyramid_coefficient_count(cfg_.phase_channels(), cfg_.history, cfg_.levels);
    case Ablation::fft_instead_of_dwt:
      return cfg_.phase_channels() * (cfg_.history / 2 + 1);
    default:
      return 1 + 3 * cfg_.levels;
  }
}

std::size_t MdmeModel::decoder_input_width() const {
  return structured_width() + (uses_latent() ? cfg_.latent : 0) + (uses_latest_frame() ? cfg_.goal_dim : 0) +
         cfg_.proprio_dim + cfg_.action_dim;
}

std::vector<std::pair<std::string, DiffTensor>> MdmeModel::named_parameters() const {
  std::vector<std::pair<std::string, DiffTensor>> out;
  for (std::size_t l = 0; l < params_.conv.size(); ++l) {
    const std::string p = "conv" + std::to_string(l);
    out.emplace_back(p + ".w", params_.conv[l].w);
    out.emplace_back(p + ".gamma", params_.conv[l].gamma);
    out.emplace_back(p + ".beta", params_.conv[l].beta);
  }
  auto dense = [&](const std::string& p, const Dense& d) {
    out.emplace_back(p + ".w", d.w);
    out.emplace_back(p + ".b", d.b);
  };
  if (uses_latent()) {
    for (std::size_t l = 0; l < params_.encoder.size(); ++l) dense("encoder" + std::to_string(l), params_.encoder[l]);
    dense("mu", params_.mu_head);
    dense("log_sigma", params_.log_sigma_head);
  }
  for (std::size_t l = 0; l < params_.decoder.size(); ++l) dense("decoder" + std::to_string(l), params_.decoder[l]);
  dense("output", params_.output);
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> MdmeModel::named_buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  for (std::size_t l = 0; l < params_.conv.size(); ++l) {
    const std::string p = "conv" + std::to_string(l);
    out.emplace_back(p + ".running_mean", &params_.conv[l].stats.running_mean);
    out.emplace_back(p + ".running_var", &params_.conv[l].stats.running_var);
  }
  return out;
}

DiffTensor MdmeModel::structured_features(const std::vector<GoalWindow>& windows, NormMode mode) {
  if (!uses_structured()) return DiffTensor();
  if (ablation_ != Ablation::no_entropy && ablation_ != Ablation::fft_instead_of_dwt)
    return encode_structured(windows, params_, cfg_, filters_, mode);
  std::vector<DiffTensor> rows;
  for (const auto& x : conv_front_end(windows, params_, cfg_, mode)) {
    if (ablation_ == Ablation::no_entropy)
      rows.push_back(as_row(dwt2d_multilevel(x, cfg_.levels, filters_).flatten()));
    else
      rows.push_back(fft_magnitude(x));
  }
  return rows.size() == 1 ? rows[0] : stack_rows(rows);
}

MdmeModel::Output MdmeModel::forward(const std::vector<GoalWindow>& windows, const DiffTensor& proprio,
                                     const DiffTensor& prev_action, Rng& rng, LatentMode latent_mode,
                                     NormMode norm_mode) {
  check_windows(windows, cfg_);
  const std::size_t b = windows.size();
  Output out;
  out.structured = structured_features(windows, norm_mode);
  if (uses_latent()) out.latent = encode_unstructured(windows, params_, cfg_, rng, latent_mode);

  DiffTensor latest;
  if (uses_latest_frame()) {
    std::vector<double> v;
    v.reserve(b * cfg_.goal_dim);
    for (const auto& w : windows) {
      auto f = w.latest();
      v.insert(v.end(), f.begin(), f.end());
    }
    latest = DiffTensor::matrix(b, cfg_.goal_dim, std::move(v));
  }
  auto or_zeros = [b](const DiffTensor& t, std::size_t width, const char* what) {
    if (width == 0) return DiffTensor();
    if (!t.defined()) return DiffTensor::zeros({b, width});
    if (t.numel() != b * width) {
      throw ConfigError(std::string("forward: ") + what + " has " + std::to_string(t.numel()) + " values, expected " +
                        std::to_string(b * width));
    }
    return t.rank() == 2 ? t : reshape(t, {b, width});
  };
  out.action = decode(out.structured, out.latent.z, latest, or_zeros(proprio, cfg_.proprio_dim, "proprio"),
                      or_zeros(prev_action, cfg_.action_dim, "prev_action"), params_, cfg_);
  return out;
}

}  // namespace mdme
