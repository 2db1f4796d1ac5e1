#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdme/embedding.hpp"
#include "mdme/motion.hpp"
#include "mdme/tensor.hpp"

namespace mdme {

inline constexpr double kSmapeEps = 1e-8;
inline constexpr double kDefaultBeta = 1e-3;

/// One row of a reward table. Tracking terms carry a scale; plain penalty
/// weights do not.
struct RewardTerm {
  std::string name;
  double weight = 0.0;
  std::optional<double> scale;
  std::string group;  // "tracking" or "other"

  bool operator==(const RewardTerm&) const = default;
};

/// w * exp(-||target - actual||_2 / sigma).
double gaussian_tracking_reward(std::span<const double> target, std::span<const double> actual, double weight,
                                double sigma);

struct PenaltyWeights {
  double torque = 0.0;
  double acceleration = 0.0;
  double action_rate = 0.0;
  double termination = 0.0;
};

struct PenaltyState {
  std::vector<double> torque;
  std::vector<double> joint_acceleration;
  bool terminated = false;
};

/// Weighted quadratic penalties; weights are signed as in the reward tables.
double penalty_terms(const PenaltyState& state, std::span<const double> action, std::span<const double> prev_action,
                     const PenaltyWeights& weights);

/// Looks up "Joint Torques", "Joint Acceleration", "Joint Action Rate" and
/// "Termination" in a reward table.
PenaltyWeights penalty_weights(const std::vector<RewardTerm>& table);

/// Mean over all elements of |a - b| / ((|a| + |b| + eps) / 2).
double smape(std::span<const double> target, std::span<const double> actual, double eps = kSmapeEps);
double smape(const FrameMatrix& target, const FrameMatrix& actual, double eps = kSmapeEps);

/// Mean squared error + beta * KL. `latent` may have undefined members, in
/// which case the KL term is dropped.
DiffTensor imitation_loss(const DiffTensor& pred, const DiffTensor& target, const StochasticLatent& latent,
                          double beta = kDefaultBeta);

struct ComponentErrors {
  double joint = 0.0;
  double pose = 0.0;
  double twist = 0.0;
  double total = 0.0;

  bool operator==(const ComponentErrors&) const = default;
};

/// SMAPE restricted to each component group and over every channel.
ComponentErrors component_errors(const FrameMatrix& target, const FrameMatrix& actual,
                                 const std::vector<Component>& layout, double eps = kSmapeEps);

struct MotionMetrics {
  std::string motion;
  ComponentErrors mean;
  ComponentErrors std;
  std::size_t executions = 0;

  bool operator==(const MotionMetrics&) const = default;
};

struct MetricReport {
  std::vector<MotionMetrics> motions;
  ComponentErrors mean;  // over every execution of every motion
  ComponentErrors std;
  std::size_t runs = 0;
  std::size_t seeds = 0;

  bool operator==(const MetricReport&) const = default;

  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
  /// motion,joint,pose,twist,total (+ _std columns), one row per motion.
  std::string to_csv() const;
};

/// Mean and population standard deviation of each field.
void aggregate(const std::vector<ComponentErrors>& samples, ComponentErrors& mean, ComponentErrors& std);

}  // namespace mdme
