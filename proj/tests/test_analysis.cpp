#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mdme/analysis.hpp"
#include "mdme/errors.hpp"
#include "mdme/presets.hpp"

using namespace mdme;

namespace {

struct Blobs {
  Eigen::MatrixXd points;
  std::vector<std::size_t> truth;
};

// Four blobs of spread 1 with centres at least 10 apart.
Blobs make_blobs(Rng& rng, std::size_t per_blob, std::size_t dims) {
  std::vector<Eigen::VectorXd> centres;
  while (centres.size() < 4) {
    Eigen::VectorXd c(dims);
    for (std::size_t d = 0; d < dims; ++d) c[d] = rng.uniform(-40.0, 40.0);
    bool far = true;
    for (const auto& o : centres) far = far && (c - o).norm() >= 10.0 * 2.0 * std::sqrt(double(dims));
    if (far) centres.push_back(c);
  }
  Blobs b;
  b.points.resize(4 * per_blob, dims);
  for (std::size_t i = 0; i < 4 * per_blob; ++i) {
    const std::size_t blob = i % 4;
    b.truth.push_back(blob);
    for (std::size_t d = 0; d < dims; ++d) b.points(i, d) = centres[blob][d] + rng.uniform(-1.0, 1.0);
  }
  return b;
}

bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::map<std::size_t, std::size_t> fwd, back;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (fwd.count(a[i]) && fwd[a[i]] != b[i]) return false;
    if (back.count(b[i]) && back[b[i]] != a[i]) return false;
    fwd[a[i]] = b[i];
    back[b[i]] = a[i];
  }
  return true;
}

MotionSequence constant_motion(const std::string& name, std::size_t frames) {
  const auto layout = quadruped_layout();
  MotionSequence m;
  m.name = name;
  m.channels = layout.channels;
  m.data.resize(frames, layout.channels.size());
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < layout.rest.size(); ++c) m.data(t, c) = layout.rest[c];
  return m;
}

double reconstruction_error(const Eigen::MatrixXd& x, std::size_t dims) {
  const auto p = pca(x, dims);
  const Eigen::MatrixXd centred = x.rowwise() - p.mean;
  const Eigen::MatrixXd approx = p.coords * p.components.transpose();
  return (centred - approx).squaredNorm();
}

}  // namespace

TEST_CASE("kmeans recovers separated blobs exactly") {
  Rng gen(100);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = make_blobs(gen, 5 + gen.below(20), 2 + gen.below(3));
    Rng rng(trial);
    const auto r = kmeans(b.points, 4, rng);
    REQUIRE(same_partition(r.labels, b.truth));
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      REQUIRE(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-9);
    std::set<std::size_t> used(r.labels.begin(), r.labels.end());
    REQUIRE(used.size() == 4);
    REQUIRE(*used.rbegin() == 3);
  }
}

TEST_CASE("kmeans inertia never rises on unstructured data") {
  Rng gen(7);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::MatrixXd pts(40, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = gen.normal();
    Rng rng(trial);
    const auto r = kmeans(pts, 2 + gen.below(5), rng);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      REQUIRE(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-9);
    Rng again(trial);
    REQUIRE(kmeans(pts, r.centroids.rows(), again).labels == r.labels);
  }
}

TEST_CASE("kmeans with one cluster returns the mean") {
  Eigen::MatrixXd pts(3, 2);
  pts << 0, 0, 2, 0, 1, 3;
  Rng rng(1);
  const auto r = kmeans(pts, 1, rng);
  CHECK(r.labels == std::vector<std::size_t>{0, 0, 0});
  CHECK(r.centroids(0, 0) == doctest::Approx(1.0));
  CHECK(r.centroids(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("kmeans degenerate inputs") {
  Eigen::MatrixXd dup(5, 2);
  dup << 1, 1, 1, 1, 1, 1, 2, 2, 2, 2;
  Rng rng(1);
  CHECK_THROWS_AS(kmeans(dup, 3, rng), NumericError);
  CHECK_THROWS_AS(kmeans(dup, 6, rng), ConfigError);
  CHECK_THROWS_AS(kmeans(dup, 0, rng), ConfigError);
}

TEST_CASE("pca on constructed data") {
  Rng gen(3);
  Eigen::MatrixXd line(50, 3);
  for (Eigen::Index i = 0; i < 50; ++i) {
    const double t = gen.uniform(-5, 5);
    line.row(i) << 1 + 2 * t, -1 + t + 1e-4 * gen.normal(), 3 - t;
  }
  const auto p = pca(line, 2);
  CHECK(p.explained_ratio[0] > 0.999);
  CHECK(p.explained_ratio[0] >= p.explained_ratio[1]);

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 5 + gen.below(20), cols = 2 + gen.below(5);
    Eigen::MatrixXd x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gen.normal() * (1 + (i % cols));
    const auto r = pca(x, 2);
    for (Eigen::Index i = 1; i < r.eigenvalues.size(); ++i) REQUIRE(r.eigenvalues[i] <= r.eigenvalues[i - 1]);
    REQUIRE(r.explained_ratio.sum() <= 1.0 + 1e-12);
    // Projection of the mean is the origin.
    const Eigen::RowVectorXd origin = (r.mean - r.mean) * r.components;
    REQUIRE(origin.norm() == 0.0);
    REQUIRE(r.coords.colwise().sum().norm() < 1e-9 * (1 + x.norm()));
    // Sign convention.
    for (Eigen::Index c = 0; c < r.components.cols(); ++c) {
      Eigen::Index at;
      r.components.col(c).cwiseAbs().maxCoeff(&at);
      REQUIRE(r.components(at, c) > 0.0);
      REQUIRE(std::abs(r.components.col(c).norm() - 1.0) < 1e-12);
    }
    REQUIRE(reconstruction_error(x, 2) <= reconstruction_error(x, 1) + 1e-9);
    // Invariance under column shifts.
    Eigen::RowVectorXd shift(cols);
    for (std::size_t c = 0; c < cols; ++c) shift[c] = gen.uniform(-100, 100);
    const Eigen::MatrixXd moved = x.rowwise() + shift;
    const auto s = pca(moved, 2);
    REQUIRE((s.coords - r.coords).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("pca rejects degenerate rank") {
  Eigen::MatrixXd x(4, 3);
  x << 1, 2, 3, 2, 4, 6, 3, 6, 9, 4, 8, 12;
  CHECK_THROWS_AS(pca(x, 2), NumericError);
  CHECK_THROWS_AS(pca(x, 4), ConfigError);
  CHECK_THROWS_AS(pca(x.topRows(1), 2), ConfigError);
}

TEST_CASE("feature extraction") {
  const auto cfg = load_run_config("quadruped").model;
  auto motions = synth_corpus(quadruped_layout(), 3, 120, 9);
  motions.push_back(constant_motion("still", 100));
  motions.push_back(constant_motion("short", 10));
  auto twin = motions[0];
  twin.name = "twin";
  motions.push_back(twin);
  const auto f = extract_features(motions, cfg);
  const std::size_t width = 2 * (1 + 3 * cfg.levels);
  CHECK(f.values.cols() == static_cast<Eigen::Index>(width));
  CHECK(f.columns.size() == width);
  CHECK(f.columns.front() == "s0_mean");
  CHECK(f.columns.back() == "s12_std");
  CHECK(f.skipped == std::vector<std::string>{"short"});
  REQUIRE(f.ids.size() == 5);
  CHECK(f.values.rows() == 5);
  CHECK(f.values.allFinite());
  CHECK(f.values.row(0) == f.values.row(4));
  const Eigen::Index still = 3;
  CHECK(f.ids[still] == "still");
  for (std::size_t c = width / 2; c < width; ++c) CHECK(f.values(still, c) < 1e-9);
  const auto again = extract_features(motions, cfg);
  CHECK(again.values == f.values);
  MdmeModel no_entropy_branch(cfg, Ablation::vae_only, 1);
  CHECK_THROWS_AS(extract_features(motions, no_entropy_branch), ConfigError);
}

TEST_CASE("error overlay") {
  ClusterReport r;
  r.ids = {"a", "b", "c"};
  r.coords.resize(3, 2);
  r.coords << 1, 2, 3, 4, 5, 6;
  r.labels = {0, 1, 0};
  MetricReport e;
  for (const auto* id : {"c", "a", "b"}) {
    MotionMetrics m;
    m.motion = id;
    m.mean.total = id[0] == 'a' ? 0.5 : 0.25;
    e.motions.push_back(m);
  }
  const auto csv = error_overlay(r, e);
  CHECK(csv ==
        "motion[id],pc1[unitless],pc2[unitless],cluster[label],mean_error[smape]\n"
        "a,1,2,0,0.5\nb,3,4,1,0.25\nc,5,6,0,0.25\n");
  std::reverse(e.motions.begin(), e.motions.end());
  CHECK(error_overlay(r, e) == csv);

  MetricReport other;
  for (const auto* id : {"x", "y"}) other.motions.push_back({id, {}, {}, 1});
  try {
    error_overlay(r, other);
    FAIL("expected ConfigError");
  } catch (const ConfigError& err) {
    const std::string msg = err.what();
    for (const auto* id : {"a", "b", "c", "x", "y"}) CHECK(msg.find(std::string(" ") + id) != std::string::npos);
  }
}

TEST_CASE("cluster pipeline on the synthetic corpus") {
  const auto cfg = load_run_config("quadruped").model;
  const auto motions = synth_corpus(quadruped_layout(), 10, 200, 7);
  const auto report = cluster_motions(extract_features(motions, cfg), 4, 1);
  CHECK(report.ids.size() == 10);
  std::set<std::size_t> labels(report.labels.begin(), report.labels.end());
  CHECK(labels.size() == 4);
  CHECK(*labels.rbegin() == 3);
  CHECK(report.explained_ratio[0] >= report.explained_ratio[1]);
  CHECK(report.explained_ratio.sum() <= 1.0);
  std::istringstream csv(cluster_csv(report));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "motion[id],pc1[unitless],pc2[unitless],cluster[label]");
  int rows = 0;
  while (std::getline(csv, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 3);
    ++rows;
  }
  CHECK(rows == 10);
}
