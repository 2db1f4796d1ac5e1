#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mdme/embedding.hpp"
#include "mdme/motion.hpp"
#include "mdme/objectives.hpp"
#include "mdme/rng.hpp"

namespace mdme {

inline constexpr std::uint64_t kFrozenFeatureSeed = 20240611;

struct FeatureMatrix {
  std::vector<std::string> ids;
  std::vector<std::string> columns;  // s<i>_mean then s<i>_std
  Eigen::MatrixXd values;            // motions x 2(1 + 3J)
  std::vector<std::string> skipped;  // motions shorter than H
};

/// Entropy features per motion: windows at stride max(1, H / 2), mean and
/// standard deviation of each of the 1 + 3J entropies over the windows.
/// `model` supplies the conv front end and must use the entropy branch.
FeatureMatrix extract_features(const std::vector<MotionSequence>& motions, MdmeModel& model);
/// Same with an untrained front end initialised from `seed`.
FeatureMatrix extract_features(const std::vector<MotionSequence>& motions, const MdmeConfig& cfg,
                               std::uint64_t seed = kFrozenFeatureSeed);

struct PcaResult {
  Eigen::MatrixXd coords;           // rows x dims
  Eigen::MatrixXd components;       // features x dims, unit columns
  Eigen::RowVectorXd mean;
  Eigen::VectorXd eigenvalues;      // all, descending
  Eigen::VectorXd explained_ratio;  // first dims
};

/// Principal components of the centred data. Each component's largest
/// magnitude loading is made positive.
PcaResult pca(const Eigen::MatrixXd& x, std::size_t dims = 2);

struct KMeansResult {
  std::vector<std::size_t> labels;
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after every Lloyd iteration
  std::size_t iterations = 0;
};

/// Farthest-point seeding from a random first point, then Lloyd iterations
/// until the assignment stops changing or `max_iterations`.
KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, Rng& rng, std::size_t max_iterations = 100);

struct ClusterReport {
  std::vector<std::string> ids;
  Eigen::MatrixXd coords;
  std::vector<std::size_t> labels;
  Eigen::VectorXd explained_ratio;
  std::vector<std::string> skipped;
};

ClusterReport cluster_motions(const FeatureMatrix& features, std::size_t k, std::uint64_t seed, std::size_t dims = 2);

/// motion,pc1,pc2,cluster,mean_error joined on motion id, in report order.
/// Throws ConfigError listing every unmatched id.
std::string error_overlay(const ClusterReport& report, const MetricReport& eval);
/// motion,pc1,pc2,cluster without errors.
std::string cluster_csv(const ClusterReport& report);

}  // namespace mdme
