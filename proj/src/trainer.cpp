#include "mdme/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "mdme/csv.hpp"
#include "mdme/errors.hpp"

namespace mdme {

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot take_snapshot(MdmeModel& model) {
  Snapshot s;
  for (const auto& [name, t] : model.named_parameters()) s.emplace_back(t.data().begin(), t.data().end());
  for (const auto& [name, buf] : model.named_buffers()) s.push_back(*buf);
  return s;
}

void restore_snapshot(MdmeModel& model, const Snapshot& s) {
  std::size_t i = 0;
  for (auto& [name, t] : model.named_parameters()) {
    auto d = t.mutable_data();
    std::copy(s[i].begin(), s[i].end(), d.begin());
    ++i;
  }
  for (auto& [name, buf] : model.named_buffers()) *buf = s[i++];
}

void check_compatible(const MdmeModel& model, const SupervisedPair& pair) {
  const auto& cfg = model.config();
  if (pair.input.channel_count() != cfg.goal_dim) {
    throw ConfigError("motion '" + pair.name + "' has " + std::to_string(pair.input.channel_count()) +
                      " channels but the model expects goal_dim " + std::to_string(cfg.goal_dim));
  }
  if (static_cast<std::size_t>(pair.target.cols()) != cfg.decoder_output()) {
    throw ConfigError("motion '" + pair.name + "' has " + std::to_string(pair.target.cols()) +
                      " target channels but the model outputs " + std::to_string(cfg.decoder_output()));
  }
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw ConfigError("Adam: learning rate must be positive");
}

void Adam::step(std::span<DiffTensor> params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ConfigError("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = params[i].grad();
    auto d = params[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < d.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      d[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

Batch make_batch(const std::vector<SupervisedPair>& pairs, std::span<const Sample> samples, std::size_t history) {
  if (samples.empty()) throw ConfigError("make_batch: empty batch");
  Batch b;
  const std::size_t width = static_cast<std::size_t>(pairs[samples[0].pair].target.cols());
  std::vector<double> target;
  target.reserve(samples.size() * width);
  for (const auto& s : samples) {
    const auto& p = pairs.at(s.pair);
    b.windows.push_back(window(p.input, s.frame, history));
    for (std::size_t c = 0; c < width; ++c) target.push_back(p.target(static_cast<Eigen::Index>(s.frame), c));
  }
  b.target = DiffTensor::matrix(samples.size(), width, std::move(target));
  return b;
}

double train_step(MdmeModel& model, Adam& opt, const std::vector<SupervisedPair>& pairs,
                  std::span<const Sample> samples, const TrainConfig& cfg, Rng& rng) {
  Batch batch = make_batch(pairs, samples, model.config().history);
  const auto named = model.named_parameters();
  std::vector<DiffTensor> params;
  for (const auto& [name, t] : named) params.push_back(t);

  GradientTape tape;
  tape.watch(params);
  const auto out = model.forward(batch.windows, DiffTensor(), DiffTensor(), rng, LatentMode::sample, NormMode::train);
  const DiffTensor loss = imitation_loss(out.action, batch.target, out.latent, cfg.beta);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    for (const auto& [name, t] : named)
      if (!all_finite(t.data())) throw NumericError("non-finite loss; first non-finite tensor: parameter '" + name + "'");
    if (out.structured.defined() && !all_finite(out.structured.data()))
      throw NumericError("non-finite loss; first non-finite tensor: structured features");
    if (out.latent.z.defined() && !all_finite(out.latent.z.data()))
      throw NumericError("non-finite loss; first non-finite tensor: latent z");
    throw NumericError("non-finite loss; first non-finite tensor: decoder output");
  }
  tape.backward(loss);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!all_finite(params[i].grad())) {
      throw NumericError("non-finite gradient for parameter '" + named[i].first + "'");
    }
  }
  opt.step(params);
  return value;
}

std::string LearningCurve::to_csv() const {
  std::string out = "iteration[count],loss[mse],val_error[smape]\n";
  for (const auto& p : points) {
    out += std::to_string(p.iteration) + "," + (p.loss ? format_number(*p.loss) : "") + "," +
           (p.val_error ? format_number(*p.val_error) : "") + "\n";
  }
  return out;
}

FrameMatrix predict(MdmeModel& model, const MotionSequence& input, std::size_t chunk) {
  const auto& cfg = model.config();
  if (input.channel_count() != cfg.goal_dim) {
    throw ConfigError("predict: motion '" + input.name + "' has " + std::to_string(input.channel_count()) +
                      " channels, model expects " + std::to_string(cfg.goal_dim));
  }
  const std::size_t frames = input.frames();
  const std::size_t width = cfg.decoder_output();
  FrameMatrix out(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(width));
  Rng unused(0);
  for (std::size_t start = 0; start < frames; start += chunk) {
    const std::size_t end = std::min(frames, start + chunk);
    std::vector<GoalWindow> windows;
    for (std::size_t t = start; t < end; ++t) windows.push_back(window(input, t, cfg.history));
    const auto res = model.forward(windows, DiffTensor(), DiffTensor(), unused, LatentMode::mean, NormMode::eval);
    const auto d = res.action.data();
    for (std::size_t t = start; t < end; ++t)
      for (std::size_t c = 0; c < width; ++c) out(static_cast<Eigen::Index>(t), c) = d[(t - start) * width + c];
  }
  return out;
}

double validation_error(MdmeModel& model, const std::vector<SupervisedPair>& pairs) {
  if (pairs.empty()) throw ConfigError("validation_error: no motions");
  double total = 0.0;
  for (const auto& p : pairs) {
    check_compatible(model, p);
    total += smape(p.target, predict(model, p.input));
  }
  return total / static_cast<double>(pairs.size());
}

void split_dataset(const std::vector<SupervisedPair>& all, std::size_t validation_count, std::uint64_t seed,
                   std::vector<SupervisedPair>& train_set, std::vector<SupervisedPair>& validation) {
  if (validation_count >= all.size()) {
    throw ConfigError("split_dataset: " + std::to_string(all.size()) + " motions cannot hold out " +
                      std::to_string(validation_count) + " for validation and still train");
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix64(seed ^ 0x5eedULL));
  rng.shuffle(order);
  train_set.clear();
  validation.clear();
  std::vector<bool> held(all.size(), false);
  for (std::size_t i = 0; i < validation_count; ++i) held[order[i]] = true;
  for (std::size_t i = 0; i < all.size(); ++i) (held[i] ? validation : train_set).push_back(all[i]);
}

TrainResult train(MdmeModel& model, const std::vector<SupervisedPair>& train_set,
                  const std::vector<SupervisedPair>& validation_set, const TrainConfig& cfg,
                  const ProgressFn& progress) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("train: empty dataset");
  for (const auto& p : train_set) check_compatible(model, p);
  for (const auto& p : validation_set) check_compatible(model, p);
  const auto& val = validation_set.empty() ? train_set : validation_set;

  const auto started = std::chrono::steady_clock::now();
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < train_set.size(); ++i)
    for (std::size_t t = 0; t < train_set[i].input.frames(); ++t) samples.push_back({i, t});
  if (samples.empty()) throw ConfigError("train: training motions have no frames");

  Rng root(cfg.seed);
  Rng order_rng = root.split();
  Rng noise_rng = root.split();
  Adam opt(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  TrainResult result;
  result.initial_val = validation_error(model, val);
  result.best_val = result.initial_val;
  result.final_val = result.initial_val;
  Snapshot best = take_snapshot(model);
  result.curve.points.push_back({0, std::nullopt, result.initial_val});
  if (progress) progress(result.curve.points.back());

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  order_rng.shuffle(order);
  std::size_t cursor = 0;
  std::vector<Sample> batch;
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    batch.clear();
    while (batch.size() < std::min(cfg.batch_size, samples.size())) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(samples[order[cursor++]]);
    }
    for (const auto& s : batch) result.batch_motions.insert(train_set[s.pair].name);
    CurvePoint point{it, train_step(model, opt, train_set, batch, cfg, noise_rng), std::nullopt};
    if (it % cfg.validate_every == 0 || it == cfg.max_iterations) {
      const double v = validation_error(model, val);
      point.val_error = v;
      result.final_val = v;
      if (v < result.best_val) {
        result.best_val = v;
        result.best_iteration = it;
        best = take_snapshot(model);
      }
    }
    result.curve.points.push_back(point);
    if (progress) progress(point);
  }
  restore_snapshot(model, best);
  result.curve.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

MdmeModel build_ablation(Ablation key, const MdmeConfig& cfg, std::uint64_t seed) { return MdmeModel(cfg, key, seed); }

MetricReport evaluate(MdmeModel& model, const std::vector<SupervisedPair>& pairs, const EvalOptions& opts) {
  if (pairs.empty()) throw ConfigError("evaluate: no motions");
  if (opts.runs == 0 || opts.seeds == 0) throw ConfigError("evaluate: runs and seeds must be at least 1");
  for (const auto& p : pairs) check_compatible(model, p);
  MetricReport report;
  report.runs = opts.runs;
  report.seeds = opts.seeds;
  std::vector<std::vector<ComponentErrors>> per_motion(pairs.size());
  // Fixed (seed, run) order keeps the report reproducible.
  for (std::size_t s = 0; s < opts.seeds; ++s) {
    for (std::size_t r = 0; r < opts.runs; ++r) {
      Rng rng(mix64(opts.base_seed + s) ^ mix64(r + 1));
      for (std::size_t m = 0; m < pairs.size(); ++m) {
        const auto& p = pairs[m];
        const MotionSequence input = opts.noise.rules.empty() ? p.input : perturb(p.input, opts.noise, rng);
        per_motion[m].push_back(component_errors(p.target, predict(model, input), p.layout));
      }
    }
  }
  std::vector<ComponentErrors> everything;
  for (std::size_t m = 0; m < pairs.size(); ++m) {
    MotionMetrics row;
    row.motion = pairs[m].name;
    row.executions = per_motion[m].size();
    aggregate(per_motion[m], row.mean, row.std);
    report.motions.push_back(row);
    everything.insert(everything.end(), per_motion[m].begin(), per_motion[m].end());
  }
  aggregate(everything, report.mean, report.std);
  return report;
}

}  // namespace mdme
