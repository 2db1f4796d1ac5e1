#include "mdme/objectives.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "mdme/errors.hpp"
#include "mdme/ops.hpp"

namespace mdme {

using nlohmann::json;

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

json errors_json(const ComponentErrors& e) {
  return {{"joint", e.joint}, {"pose", e.pose}, {"twist", e.twist}, {"total", e.total}};
}

ComponentErrors errors_from(const json& j) {
  return {j.at("joint").get<double>(), j.at("pose").get<double>(), j.at("twist").get<double>(),
          j.at("total").get<double>()};
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double gaussian_tracking_reward(std::span<const double> target, std::span<const double> actual, double weight,
                                double sigma) {
  if (target.size() != actual.size()) {
    throw DimensionError("gaussian_tracking_reward: target has " + std::to_string(target.size()) +
                         " values, actual has " + std::to_string(actual.size()));
  }
  if (!(sigma > 0.0)) throw ConfigError("gaussian_tracking_reward: sigma must be positive");
  double d2 = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) d2 += (target[i] - actual[i]) * (target[i] - actual[i]);
  return weight * std::exp(-std::sqrt(d2) / sigma);
}

double penalty_terms(const PenaltyState& state, std::span<const double> action, std::span<const double> prev_action,
                     const PenaltyWeights& weights) {
  if (action.size() != prev_action.size()) throw DimensionError("penalty_terms: action sizes differ");
  double rate = 0.0;
  for (std::size_t i = 0; i < action.size(); ++i) rate += (action[i] - prev_action[i]) * (action[i] - prev_action[i]);
  return weights.torque * squared_norm(state.torque) + weights.acceleration * squared_norm(state.joint_acceleration) +
         weights.action_rate * rate + (state.terminated ? weights.termination : 0.0);
}

PenaltyWeights penalty_weights(const std::vector<RewardTerm>& table) {
  PenaltyWeights w;
  for (const auto& t : table) {
    if (t.name == "Joint Torques") w.torque = t.weight;
    else if (t.name == "Joint Acceleration") w.acceleration = t.weight;
    else if (t.name == "Joint Action Rate") w.action_rate = t.weight;
    else if (t.name == "Termination") w.termination = t.weight;
  }
  return w;
}

double smape(std::span<const double> target, std::span<const double> actual, double eps) {
  if (target.size() != actual.size()) {
    throw DimensionError("smape: target has " + std::to_string(target.size()) + " values, actual has " +
                         std::to_string(actual.size()));
  }
  if (!(eps > 0.0)) throw ConfigError("smape: eps must be positive");
  if (target.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i)
    s += std::abs(target[i] - actual[i]) / ((std::abs(target[i]) + std::abs(actual[i]) + eps) / 2.0);
  return s / static_cast<double>(target.size());
}

double smape(const FrameMatrix& target, const FrameMatrix& actual, double eps) {
  if (target.rows() != actual.rows() || target.cols() != actual.cols()) {
    throw DimensionError("smape: trajectory shapes differ");
  }
  return smape(std::span<const double>(target.data(), static_cast<std::size_t>(target.size())),
               std::span<const double>(actual.data(), static_cast<std::size_t>(actual.size())), eps);
}

DiffTensor imitation_loss(const DiffTensor& pred, const DiffTensor& target, const StochasticLatent& latent,
                          double beta) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("imitation_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  DiffTensor loss = mean(square(sub(pred, target)));
  if (beta != 0.0 && latent.mu.defined()) loss = add(loss, scale(kl_to_standard_normal(latent), beta));
  return loss;
}

ComponentErrors component_errors(const FrameMatrix& target, const FrameMatrix& actual,
                                 const std::vector<Component>& layout, double eps) {
  if (target.rows() != actual.rows() || target.cols() != actual.cols()) {
    throw DimensionError("component_errors: trajectory shapes differ");
  }
  if (layout.size() != static_cast<std::size_t>(target.cols())) {
    throw ConfigError("component_errors: layout has " + std::to_string(layout.size()) + " entries for " +
                      std::to_string(target.cols()) + " channels");
  }
  std::vector<double> t[3], a[3];
  for (std::size_t c = 0; c < layout.size(); ++c) {
    if (layout[c] == Component::none) {
      throw ConfigError("component_errors: channel " + std::to_string(c) + " is not mapped to joint, pose or twist");
    }
    const auto g = static_cast<std::size_t>(layout[c]);
    for (Eigen::Index r = 0; r < target.rows(); ++r) {
      t[g].push_back(target(r, c));
      a[g].push_back(actual(r, c));
    }
  }
  ComponentErrors e;
  e.joint = smape(t[0], a[0], eps);
  e.pose = smape(t[1], a[1], eps);
  e.twist = smape(t[2], a[2], eps);
  e.total = smape(target, actual, eps);
  return e;
}

void aggregate(const std::vector<ComponentErrors>& samples, ComponentErrors& mean, ComponentErrors& std) {
  mean = {};
  std = {};
  if (samples.empty()) return;
  const double n = static_cast<double>(samples.size());
  for (const auto& s : samples) {
    mean.joint += s.joint / n;
    mean.pose += s.pose / n;
    mean.twist += s.twist / n;
    mean.total += s.total / n;
  }
  for (const auto& s : samples) {
    std.joint += (s.joint - mean.joint) * (s.joint - mean.joint) / n;
    std.pose += (s.pose - mean.pose) * (s.pose - mean.pose) / n;
    std.twist += (s.twist - mean.twist) * (s.twist - mean.twist) / n;
    std.total += (s.total - mean.total) * (s.total - mean.total) / n;
  }
  std.joint = std::sqrt(std.joint);
  std.pose = std::sqrt(std.pose);
  std.twist = std::sqrt(std.twist);
  std.total = std::sqrt(std.total);
}

std::string MetricReport::to_json() const {
  json j;
  j["runs"] = runs;
  j["seeds"] = seeds;
  j["mean"] = errors_json(mean);
  j["std"] = errors_json(std);
  j["motions"] = json::array();
  for (const auto& m : motions) {
    j["motions"].push_back(
        {{"motion", m.motion}, {"executions", m.executions}, {"mean", errors_json(m.mean)}, {"std", errors_json(m.std)}});
  }
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  MetricReport r;
  try {
    const json j = json::parse(text);
    r.runs = j.at("runs").get<std::size_t>();
    r.seeds = j.at("seeds").get<std::size_t>();
    r.mean = errors_from(j.at("mean"));
    r.std = errors_from(j.at("std"));
    for (const auto& m : j.at("motions")) {
      r.motions.push_back({m.at("motion").get<std::string>(), errors_from(m.at("mean")), errors_from(m.at("std")),
                           m.at("executions").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("metric report: ") + e.what());
  }
  return r;
}

std::string MetricReport::to_csv() const {
  std::string out =
      "motion[id],joint[smape],pose[smape],twist[smape],total[smape],joint_std[smape],pose_std[smape],"
      "twist_std[smape],total_std[smape]\n";
  for (const auto& m : motions) {
    out += m.motion + "," + num(m.mean.joint) + "," + num(m.mean.pose) + "," + num(m.mean.twist) + "," +
           num(m.mean.total) + "," + num(m.std.joint) + "," + num(m.std.pose) + "," + num(m.std.twist) + "," +
           num(m.std.total) + "\n";
  }
  return out;
}

}  // namespace mdme
