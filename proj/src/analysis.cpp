#include "mdme/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "mdme/csv.hpp"
#include "mdme/errors.hpp"

namespace mdme {

namespace {

double squared_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

}  // namespace

FeatureMatrix extract_features(const std::vector<MotionSequence>& motions, MdmeModel& model) {
  if (model.ablation() == Ablation::vae_only || model.ablation() == Ablation::no_entropy ||
      model.ablation() == Ablation::fft_instead_of_dwt) {
    throw ConfigError("extract_features: model '" + ablation_name(model.ablation()) + "' has no entropy branch");
  }
  const auto& cfg = model.config();
  const std::size_t h = cfg.history;
  const std::size_t s = 1 + 3 * cfg.levels;
  const std::size_t stride = std::max<std::size_t>(1, h / 2);
  FeatureMatrix fm;
  for (std::size_t i = 0; i < s; ++i) fm.columns.push_back("s" + std::to_string(i) + "_mean");
  for (std::size_t i = 0; i < s; ++i) fm.columns.push_back("s" + std::to_string(i) + "_std");
  std::vector<std::vector<double>> rows;
  const WaveletFilters filters = db2_filters();
  for (const auto& m : motions) {
    if (m.channel_count() != cfg.goal_dim) {
      throw ConfigError("extract_features: motion '" + m.name + "' has " + std::to_string(m.channel_count()) +
                        " channels, config expects " + std::to_string(cfg.goal_dim));
    }
    if (m.frames() < h) {
      fm.skipped.push_back(m.name);
      continue;
    }
    std::vector<GoalWindow> windows;
    for (std::size_t t = h - 1; t < m.frames(); t += stride) windows.push_back(window(m, t, h));
    const DiffTensor e = encode_structured(windows, model.params(), cfg, filters, NormMode::eval);
    const auto d = e.data();
    const double n = static_cast<double>(windows.size());
    std::vector<double> row(2 * s, 0.0);
    for (std::size_t w = 0; w < windows.size(); ++w)
      for (std::size_t c = 0; c < s; ++c) row[c] += d[w * s + c] / n;
    for (std::size_t w = 0; w < windows.size(); ++w)
      for (std::size_t c = 0; c < s; ++c) row[s + c] += (d[w * s + c] - row[c]) * (d[w * s + c] - row[c]) / n;
    for (std::size_t c = 0; c < s; ++c) row[s + c] = std::sqrt(row[s + c]);
    for (double v : row)
      if (!std::isfinite(v)) throw NumericError("extract_features: non-finite feature for '" + m.name + "'");
    fm.ids.push_back(m.name);
    rows.push_back(std::move(row));
  }
  fm.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(2 * s));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < 2 * s; ++c) fm.values(r, c) = rows[r][c];
  return fm;
}

FeatureMatrix extract_features(const std::vector<MotionSequence>& motions, const MdmeConfig& cfg, std::uint64_t seed) {
  MdmeModel model(cfg, Ablation::full, seed);
  return extract_features(motions, model);
}

PcaResult pca(const Eigen::MatrixXd& x, std::size_t dims) {
  const auto rows = static_cast<std::size_t>(x.rows());
  const auto cols = static_cast<std::size_t>(x.cols());
  if (dims == 0 || dims > cols) throw ConfigError("pca: dims must lie in [1, feature count]");
  if (rows < dims) throw ConfigError("pca: need at least " + std::to_string(dims) + " rows");
  PcaResult r;
  r.mean = x.colwise().mean();
  const Eigen::MatrixXd centred = x.rowwise() - r.mean;
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(std::max<std::size_t>(1, rows - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("pca: eigendecomposition failed");
  // Eigen sorts ascending.
  r.eigenvalues = solver.eigenvalues().reverse();
  for (Eigen::Index i = 0; i < r.eigenvalues.size(); ++i) r.eigenvalues(i) = std::max(0.0, r.eigenvalues(i));
  const double total = r.eigenvalues.sum();
  const double top = r.eigenvalues(0);
  if (!(top > 0.0) || r.eigenvalues(static_cast<Eigen::Index>(dims) - 1) <= 1e-12 * top) {
    throw NumericError("pca: data rank is below " + std::to_string(dims) + " (degenerate rank)");
  }
  r.components.resize(static_cast<Eigen::Index>(cols), static_cast<Eigen::Index>(dims));
  r.explained_ratio.resize(static_cast<Eigen::Index>(dims));
  for (std::size_t d = 0; d < dims; ++d) {
    Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(cols - 1 - d));
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    r.components.col(static_cast<Eigen::Index>(d)) = v;
    r.explained_ratio(static_cast<Eigen::Index>(d)) = r.eigenvalues(static_cast<Eigen::Index>(d)) / total;
  }
  r.coords = centred * r.components;
  return r;
}

KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, Rng& rng, std::size_t max_iterations) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k == 0) throw ConfigError("kmeans: k must be at least 1");
  if (n < k) throw ConfigError("kmeans: " + std::to_string(n) + " points cannot form " + std::to_string(k) + " clusters");
  {
    std::set<std::vector<double>> distinct;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(points.cols());
      for (Eigen::Index c = 0; c < points.cols(); ++c) row[c] = points(i, c);
      distinct.insert(row);
    }
    if (distinct.size() < k) {
      throw NumericError("kmeans: only " + std::to_string(distinct.size()) + " distinct points for " +
                         std::to_string(k) + " clusters (degenerate cluster)");
    }
  }
  KMeansResult r;
  r.centroids.resize(static_cast<Eigen::Index>(k), points.cols());
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    r.centroids.row(c) = points.row(pick);
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points, i, r.centroids, c));
      if (nearest[i] > far) {
        far = nearest[i];
        pick = i;
      }
    }
  }

  r.labels.assign(n, k);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points, i, r.centroids, c);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (r.labels[i] != best) changed = true;
      r.labels[i] = best;
      inertia += bd;
    }
    r.inertia_history.push_back(inertia);
    r.iterations = it + 1;
    if (!changed) break;
    // An empty cluster keeps its centroid.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(r.labels[i]) += points.row(i);
      ++counts[r.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c]) r.centroids.row(c) = sums.row(c) / static_cast<double>(counts[c]);
  }
  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) r.inertia += squared_distance(points, i, r.centroids, r.labels[i]);
  return r;
}

ClusterReport cluster_motions(const FeatureMatrix& features, std::size_t k, std::uint64_t seed, std::size_t dims) {
  const PcaResult p = pca(features.values, dims);
  Rng rng(seed);
  const KMeansResult km = kmeans(p.coords, k, rng);
  return {features.ids, p.coords, km.labels, p.explained_ratio, features.skipped};
}

std::string cluster_csv(const ClusterReport& report) {
  std::string out = "motion[id],pc1[unitless],pc2[unitless],cluster[label]\n";
  for (std::size_t i = 0; i < report.ids.size(); ++i) {
    const double pc2 = report.coords.cols() > 1 ? report.coords(i, 1) : 0.0;
    out += report.ids[i] + "," + format_number(report.coords(i, 0)) + "," + format_number(pc2) + "," +
           std::to_string(report.labels[i]) + "\n";
  }
  return out;
}

std::string error_overlay(const ClusterReport& report, const MetricReport& eval) {
  std::map<std::string, double> errors;
  for (const auto& m : eval.motions) errors[m.motion] = m.mean.total;
  std::set<std::string> in_report(report.ids.begin(), report.ids.end());
  std::vector<std::string> unmatched;
  for (const auto& id : report.ids)
    if (!errors.count(id)) unmatched.push_back(id);
  for (const auto& [id, e] : errors)
    if (!in_report.count(id)) unmatched.push_back(id);
  if (!unmatched.empty()) {
    std::sort(unmatched.begin(), unmatched.end());
    std::string list;
    for (const auto& u : unmatched) list += (list.empty() ? "" : ", ") + u;
    throw ConfigError("error_overlay: unmatched motion ids: " + list);
  }
  std::string out = "motion[id],pc1[unitless],pc2[unitless],cluster[label],mean_error[smape]\n";
  for (std::size_t i = 0; i < report.ids.size(); ++i) {
    const double pc2 = report.coords.cols() > 1 ? report.coords(i, 1) : 0.0;
    out += report.ids[i] + "," + format_number(report.coords(i, 0)) + "," + format_number(pc2) + "," +
           std::to_string(report.labels[i]) + "," + format_number(errors.at(report.ids[i])) + "\n";
  }
  return out;
}

}  // namespace mdme
