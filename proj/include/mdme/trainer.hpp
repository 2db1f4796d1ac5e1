#pragma once

#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mdme/embedding.hpp"
#include "mdme/motion.hpp"
#include "mdme/objectives.hpp"
#include "mdme/presets.hpp"

namespace mdme {

/// Adaptive moment estimation with bias correction.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Updates every tensor in place from its accumulated gradient.
  void step(std::span<DiffTensor> params);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// One training example: frame `frame` of pair `pair`.
struct Sample {
  std::size_t pair = 0;
  std::size_t frame = 0;
};

/// Windows, target rows and zero proprio / previous action for a batch.
struct Batch {
  std::vector<GoalWindow> windows;
  DiffTensor target;  // [B x target channels]
};
Batch make_batch(const std::vector<SupervisedPair>& pairs, std::span<const Sample> samples, std::size_t history);

/// One optimiser step on a batch; returns the loss before the update.
/// Throws NumericError naming the first non-finite tensor.
double train_step(MdmeModel& model, Adam& opt, const std::vector<SupervisedPair>& pairs,
                  std::span<const Sample> samples, const TrainConfig& cfg, Rng& rng);

struct CurvePoint {
  std::size_t iteration = 0;
  std::optional<double> loss;       // absent for the iteration-0 baseline row
  std::optional<double> val_error;  // present on validation iterations
};

struct LearningCurve {
  std::vector<CurvePoint> points;
  double wall_seconds = 0.0;

  /// iteration[count],loss[mse],val_error[smape]; empty cells for absent values.
  std::string to_csv() const;
};

struct TrainResult {
  LearningCurve curve;
  double initial_val = 0.0;
  double final_val = 0.0;
  double best_val = 0.0;
  std::size_t best_iteration = 0;
  std::set<std::string> batch_motions;  // every motion that appeared in a batch
};

/// Predicted target trajectory for one motion: mean latent, eval-mode
/// normalisation, zero proprio and previous action.
FrameMatrix predict(MdmeModel& model, const MotionSequence& input, std::size_t chunk = 128);

/// Mean total SMAPE over the motions.
double validation_error(MdmeModel& model, const std::vector<SupervisedPair>& pairs);

/// Splits by a seeded shuffle; the first `validation_count` motions are held out.
void split_dataset(const std::vector<SupervisedPair>& all, std::size_t validation_count, std::uint64_t seed,
                   std::vector<SupervisedPair>& train, std::vector<SupervisedPair>& validation);

using ProgressFn = std::function<void(const CurvePoint&)>;

/// Shuffled mini-batches over every frame of every training motion,
/// validation every cfg.validate_every iterations. On return `model` holds
/// the best-validation parameters.
TrainResult train(MdmeModel& model, const std::vector<SupervisedPair>& train_set,
                  const std::vector<SupervisedPair>& validation_set, const TrainConfig& cfg,
                  const ProgressFn& progress = {});

MdmeModel build_ablation(Ablation key, const MdmeConfig& cfg, std::uint64_t seed);

struct EvalOptions {
  std::size_t runs = 5;
  std::size_t seeds = 5;
  std::uint64_t base_seed = 1;
  NoiseSpec noise;  // applied to the input only; targets stay clean
};

/// runs x seeds perturbed playbacks of every motion; one report row per motion.
MetricReport evaluate(MdmeModel& model, const std::vector<SupervisedPair>& pairs, const EvalOptions& opts);

}  // namespace mdme
