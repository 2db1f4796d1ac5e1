#include "mdme/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mdme/analysis.hpp"
#include "mdme/checkpoint.hpp"
#include "mdme/csv.hpp"
#include "mdme/errors.hpp"
#include "mdme/presets.hpp"
#include "mdme/trainer.hpp"

namespace mdme {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(RunManifest m, const std::string& path) {
  m.timestamp = utc_timestamp();
  write_text(path, m.to_json().dump(2) + "\n");
}

std::vector<SupervisedPair> make_pairs(const std::vector<MotionSequence>& motions, const RetargetConfig& cfg) {
  std::vector<SupervisedPair> pairs;
  for (const auto& m : motions) pairs.push_back(synth_retarget(m, cfg));
  return pairs;
}

RetargetConfig retarget_from(const json& run_config) {
  if (run_config.is_object() && run_config.contains("retarget")) {
    return run_config_from_json(json{{"retarget", run_config.at("retarget")}}).retarget;
  }
  return {};
}

std::vector<double> parse_doubles(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || *end) throw ConfigError("'" + cell + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> split_list(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data, config, manifest, out, ablation;
  std::size_t iterations = 0;
  std::int64_t seed = -1;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg;
  std::string data = a.data;
  if (!a.manifest.empty()) {
    const auto m = RunManifest::from_json(json::parse(read_text(a.manifest)));
    if (m.subcommand != "train") throw ConfigError("manifest '" + a.manifest + "' is not a train manifest");
    cfg = run_config_from_json(m.config);
    if (data.empty()) data = m.inputs.value("data", "");
  } else {
    if (a.config.empty()) throw ConfigError("train: --config or --manifest is required");
    cfg = load_run_config(a.config);
  }
  if (data.empty()) throw ConfigError("train: --data is required");
  if (!a.ablation.empty()) cfg.train.ablation = parse_ablation(a.ablation);
  if (a.iterations) cfg.train.max_iterations = a.iterations;
  if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
  cfg.validate();

  const auto motions = load_motion_dir(data);
  if (motions.empty()) throw ConfigError("train: no .motion files in '" + data + "'");
  const auto pairs = make_pairs(motions, cfg.retarget);
  const auto width = static_cast<std::size_t>(pairs[0].target.cols());
  if (cfg.model.output_dim == 0 && cfg.model.action_dim != width) cfg.model.output_dim = width;
  std::vector<SupervisedPair> train_set, val_set;
  split_dataset(pairs, cfg.train.validation_motions, cfg.train.seed, train_set, val_set);
  MdmeModel model = build_ablation(cfg.train.ablation, cfg.model, cfg.train.seed);
  for (const auto& p : pairs) {
    if (p.input.channel_count() != model.config().goal_dim)
      throw ConfigError("motion '" + p.name + "' does not match model goal_dim " + std::to_string(cfg.model.goal_dim));
  }

  fs::create_directories(a.out);
  const auto result = train(model, train_set, val_set, cfg.train, [&](const CurvePoint& p) {
    if (!a.quiet && p.val_error) out << "iteration " << p.iteration << " val_error " << format_number(*p.val_error) << "\n";
  });
  const std::string stem = (fs::path(a.out) / "checkpoint").string();
  const json resolved = to_json(cfg);
  save_checkpoint(stem, model, resolved);
  write_text((fs::path(a.out) / "curve.csv").string(), result.curve.to_csv());
  json summary{{"initial_val", result.initial_val},
               {"final_val", result.final_val},
               {"best_val", result.best_val},
               {"best_iteration", result.best_iteration},
               {"iterations", cfg.train.max_iterations},
               {"wall_seconds", result.curve.wall_seconds},
               {"validation_motions", json::array()},
               {"training_motions", json::array()}};
  for (const auto& p : val_set) summary["validation_motions"].push_back(p.name);
  for (const auto& p : train_set) summary["training_motions"].push_back(p.name);
  write_text((fs::path(a.out) / "summary.json").string(), summary.dump(2) + "\n");

  RunManifest m;
  m.subcommand = "train";
  m.config = resolved;
  m.seed = cfg.train.seed;
  m.inputs = {{"data", data}};
  m.outputs = {{"checkpoint", stem}, {"curve", (fs::path(a.out) / "curve.csv").string()},
               {"summary", (fs::path(a.out) / "summary.json").string()}};
  m.options = {{"ablation", ablation_name(cfg.train.ablation)}, {"iterations", cfg.train.max_iterations}};
  write_manifest(m, (fs::path(a.out) / "manifest.json").string());
  out << "trained " << ablation_name(cfg.train.ablation) << ": val_error " << format_number(result.initial_val)
      << " -> " << format_number(result.final_val) << " (best " << format_number(result.best_val) << ")\n";
  return 0;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string data, checkpoint, out, noise = "preset";
  std::size_t runs = 5, seeds = 5;
  std::uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  auto ck = load_checkpoint(a.checkpoint);
  const RetargetConfig retarget = retarget_from(ck.run_config);
  EvalOptions opts;
  opts.runs = a.runs;
  opts.seeds = a.seeds;
  opts.base_seed = a.seed;
  if (a.noise == "preset" && ck.run_config.contains("noise")) {
    opts.noise = run_config_from_json(json{{"noise", ck.run_config.at("noise")}}).noise;
  }
  const auto motions = load_motion_dir(a.data);
  if (motions.empty()) throw ConfigError("eval: no .motion files in '" + a.data + "'");
  const auto report = evaluate(ck.model, make_pairs(motions, retarget), opts);
  const auto json_path = (fs::path(a.out) / "report.json").string();
  const auto csv_path = (fs::path(a.out) / "report.csv").string();
  write_text(json_path, report.to_json() + "\n");
  write_text(csv_path, report.to_csv());
  RunManifest m;
  m.subcommand = "eval";
  m.config = ck.run_config;
  m.seed = a.seed;
  m.inputs = {{"data", a.data}, {"checkpoint", a.checkpoint}};
  m.outputs = {{"report_json", json_path}, {"report_csv", csv_path}};
  m.options = {{"noise", a.noise}, {"runs", a.runs}, {"seeds", a.seeds}};
  write_manifest(m, (fs::path(a.out) / "manifest.json").string());
  out << "total error " << format_number(report.mean.total) << " +- " << format_number(report.std.total) << " over "
      << report.motions.size() << " motions\n";
  return 0;
}

// --- embed -----------------------------------------------------------------

struct EmbedArgs {
  std::string motion, preset = "quadruped", out, checkpoint;
  std::uint64_t seed = kFrozenFeatureSeed;
};

int cmd_embed(const EmbedArgs& a, std::ostream& out) {
  const MotionSequence seq = load_motion(a.motion);
  json config;
  std::optional<MdmeModel> model;
  if (!a.checkpoint.empty()) {
    auto ck = load_checkpoint(a.checkpoint);
    config = ck.run_config;
    model.emplace(std::move(ck.model));
  } else {
    const RunConfig cfg = load_run_config(a.preset);
    config = to_json(cfg);
    MdmeConfig mc = cfg.model;
    model.emplace(mc, Ablation::full, a.seed);
  }
  const auto& mc = model->config();
  if (seq.channel_count() != mc.goal_dim) {
    throw ConfigError("embed: motion '" + a.motion + "' has " + std::to_string(seq.channel_count()) +
                      " channels, preset expects " + std::to_string(mc.goal_dim));
  }
  if (model->ablation() == Ablation::vae_only || model->ablation() == Ablation::no_entropy ||
      model->ablation() == Ablation::fft_instead_of_dwt) {
    throw ConfigError("embed: checkpoint ablation '" + ablation_name(model->ablation()) + "' has no entropy branch");
  }
  const std::size_t s = 1 + 3 * mc.levels;
  const bool latent = !a.checkpoint.empty() && model->uses_latent();
  std::string csv = "frame[count]";
  for (std::size_t i = 0; i < s; ++i) csv += ",s" + std::to_string(i) + "[bits]";
  if (latent)
    for (std::size_t i = 0; i < mc.latent; ++i) csv += ",mu" + std::to_string(i) + "[unitless]";
  csv += "\n";
  const WaveletFilters filters = db2_filters();
  Rng unused(0);
  const std::size_t chunk = 128;
  for (std::size_t start = 0; start < seq.frames(); start += chunk) {
    const std::size_t end = std::min(seq.frames(), start + chunk);
    std::vector<GoalWindow> windows;
    for (std::size_t t = start; t < end; ++t) windows.push_back(window(seq, t, mc.history));
    const DiffTensor zw = encode_structured(windows, model->params(), mc, filters, NormMode::eval);
    DiffTensor mu;
    if (latent) mu = encode_unstructured(windows, model->params(), mc, unused, LatentMode::mean).mu;
    for (std::size_t t = start; t < end; ++t) {
      csv += std::to_string(t);
      for (std::size_t i = 0; i < s; ++i) csv += "," + format_number(zw.at((t - start) * s + i));
      if (latent)
        for (std::size_t i = 0; i < mc.latent; ++i) csv += "," + format_number(mu.at((t - start) * mc.latent + i));
      csv += "\n";
    }
  }
  write_text(a.out, csv);
  RunManifest m;
  m.subcommand = "embed";
  m.config = config;
  m.seed = a.seed;
  m.inputs = {{"motion", a.motion}, {"preset", a.preset}, {"checkpoint", a.checkpoint}};
  m.outputs = {{"trace", a.out}};
  write_manifest(m, a.out + ".manifest.json");
  out << "wrote " << seq.frames() << " frames x " << s << " entropies to " << a.out << "\n";
  return 0;
}

// --- augment ---------------------------------------------------------------

struct AugmentArgs {
  std::string data, out, reflections = "none,x,y,xy", scales = "0.9,1,1.1";
};

int cmd_augment(const AugmentArgs& a, std::ostream& out) {
  AugmentSpec spec;
  spec.reflections.clear();
  for (const auto& r : split_list(a.reflections)) spec.reflections.push_back(parse_reflection(r));
  spec.scales = parse_doubles(a.scales);
  for (double s : spec.scales)
    if (!(s > 0.0)) throw ConfigError("augment: scales must be positive");
  const auto motions = load_motion_dir(a.data);
  if (motions.empty()) throw ConfigError("augment: no .motion files in '" + a.data + "'");
  const auto augmented = augment(motions, spec);
  fs::create_directories(a.out);
  json files = json::array();
  for (const auto& m : augmented) {
    const auto path = (fs::path(a.out) / (m.name + ".motion")).string();
    save_motion(m, path);
    files.push_back(path);
  }
  RunManifest mf;
  mf.subcommand = "augment";
  mf.inputs = {{"data", a.data}};
  mf.outputs = {{"motions", files}};
  mf.options = {{"reflections", a.reflections}, {"scales", spec.scales}};
  write_manifest(mf, (fs::path(a.out) / "manifest.json").string());
  out << "augmented " << motions.size() << " motions into " << augmented.size() << "\n";
  return 0;
}

// --- cluster ---------------------------------------------------------------

struct ClusterArgs {
  std::string data, out, preset = "quadruped", weights, eval;
  std::size_t k = 4;
  std::uint64_t seed = 1;
};

int cmd_cluster(const ClusterArgs& a, std::ostream& out) {
  const auto motions = load_motion_dir(a.data);
  if (motions.empty()) throw ConfigError("cluster: no .motion files in '" + a.data + "'");
  json config;
  FeatureMatrix features;
  if (!a.weights.empty()) {
    auto ck = load_checkpoint(a.weights);
    config = ck.run_config;
    features = extract_features(motions, ck.model);
  } else {
    const RunConfig cfg = load_run_config(a.preset);
    config = to_json(cfg);
    features = extract_features(motions, cfg.model);
  }
  for (const auto& s : features.skipped) out << "warning: skipped '" << s << "' (shorter than the window)\n";
  const ClusterReport report = cluster_motions(features, a.k, a.seed);

  std::string fcsv = "motion[id]";
  for (const auto& c : features.columns) fcsv += "," + c + "[bits]";
  fcsv += "\n";
  for (Eigen::Index r = 0; r < features.values.rows(); ++r) {
    fcsv += features.ids[r];
    for (Eigen::Index c = 0; c < features.values.cols(); ++c) fcsv += "," + format_number(features.values(r, c));
    fcsv += "\n";
  }
  const auto features_path = (fs::path(a.out) / "features.csv").string();
  const auto clusters_path = (fs::path(a.out) / "clusters.csv").string();
  write_text(features_path, fcsv);
  write_text(clusters_path, cluster_csv(report));
  json outputs{{"features", features_path}, {"clusters", clusters_path}};
  if (!a.eval.empty()) {
    const auto overlay_path = (fs::path(a.out) / "overlay.csv").string();
    write_text(overlay_path, error_overlay(report, MetricReport::from_json(read_text(a.eval))));
    outputs["overlay"] = overlay_path;
  }
  RunManifest m;
  m.subcommand = "cluster";
  m.config = config;
  m.seed = a.seed;
  m.inputs = {{"data", a.data}, {"weights", a.weights}, {"eval", a.eval}};
  m.outputs = outputs;
  json ratios = json::array();
  for (Eigen::Index i = 0; i < report.explained_ratio.size(); ++i) ratios.push_back(report.explained_ratio(i));
  m.options = {{"k", a.k}, {"preset", a.preset}, {"explained_variance_ratio", ratios},
               {"skipped", features.skipped}};
  write_manifest(m, (fs::path(a.out) / "manifest.json").string());
  std::set<std::size_t> labels(report.labels.begin(), report.labels.end());
  out << "clustered " << report.ids.size() << " motions into " << labels.size() << " clusters\n";
  return 0;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out, layout = "quadruped";
  std::size_t count = 10, frames = 300;
  std::uint64_t seed = 7;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto corpus = synth_corpus(layout_by_name(a.layout), a.count, a.frames, a.seed);
  fs::create_directories(a.out);
  json files = json::array();
  for (const auto& m : corpus) {
    const auto path = (fs::path(a.out) / (m.name + ".motion")).string();
    save_motion(m, path);
    files.push_back(path);
  }
  RunManifest mf;
  mf.subcommand = "synth";
  mf.seed = a.seed;
  mf.outputs = {{"motions", files}};
  mf.options = {{"layout", a.layout}, {"count", a.count}, {"frames", a.frames}};
  write_manifest(mf, (fs::path(a.out) / "manifest.json").string());
  out << "wrote " << corpus.size() << " motions to " << a.out << "\n";
  return 0;
}

}  // namespace

json RunManifest::to_json() const {
  return {{"subcommand", subcommand}, {"config", config},   {"seed", seed},       {"inputs", inputs},
          {"outputs", outputs},       {"options", options}, {"version", version}, {"timestamp", timestamp}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.value("config", json::object());
    m.seed = j.value("seed", std::uint64_t{0});
    m.inputs = j.value("inputs", json::object());
    m.outputs = j.value("outputs", json::object());
    m.options = j.value("options", json::object());
    m.version = j.value("version", "");
    m.timestamp = j.value("timestamp", "");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-domain motion embedding toolkit", "mdme"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kArtifactVersion);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train the imitation surrogate and write a checkpoint");
  train_cmd->add_option("--data", ta.data, "Directory of .motion files");
  train_cmd->add_option("--config", ta.config, "Config file, run manifest or preset name");
  train_cmd->add_option("--manifest", ta.manifest, "Re-run from a train manifest");
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--ablation", ta.ablation, "Ablation key");
  train_cmd->add_option("--iterations", ta.iterations, "Override max iterations");
  train_cmd->add_option("--seed", ta.seed, "Override the training seed");
  train_cmd->add_flag("--quiet", ta.quiet, "No per-validation progress lines");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint over runs x seeds playbacks");
  eval_cmd->add_option("--data", ea.data, "Directory of .motion files")->required();
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "Checkpoint stem")->required();
  eval_cmd->add_option("--out", ea.out, "Output directory")->required();
  eval_cmd->add_option("--noise", ea.noise, "Input noise: none or preset")->check(CLI::IsMember({"none", "preset"}));
  eval_cmd->add_option("--runs", ea.runs, "Runs per seed");
  eval_cmd->add_option("--seeds", ea.seeds, "Seed count");
  eval_cmd->add_option("--seed", ea.seed, "Base seed");

  EmbedArgs ma;
  auto* embed_cmd = app.add_subcommand("embed", "Write per-frame entropy (and latent mean) traces");
  embed_cmd->add_option("--motion", ma.motion, "Motion file")->required();
  embed_cmd->add_option("--preset", ma.preset, "Preset name or config file");
  embed_cmd->add_option("--checkpoint", ma.checkpoint, "Checkpoint stem; adds latent means");
  embed_cmd->add_option("--out", ma.out, "Output CSV")->required();
  embed_cmd->add_option("--seed", ma.seed, "Seed of the untrained front end");

  AugmentArgs aa;
  auto* augment_cmd = app.add_subcommand("augment", "Materialise reflected and height-scaled motions");
  augment_cmd->add_option("--data", aa.data, "Directory of .motion files")->required();
  augment_cmd->add_option("--out", aa.out, "Output directory")->required();
  augment_cmd->add_option("--reflections", aa.reflections, "Comma list of none,x,y,xy");
  augment_cmd->add_option("--scales", aa.scales, "Comma list of height scales");

  ClusterArgs ca;
  auto* cluster_cmd = app.add_subcommand("cluster", "Entropy features, PCA and k-means over motions");
  cluster_cmd->add_option("--data", ca.data, "Directory of .motion files")->required();
  cluster_cmd->add_option("--out", ca.out, "Output directory")->required();
  cluster_cmd->add_option("--preset", ca.preset, "Preset name or config file");
  cluster_cmd->add_option("--weights", ca.weights, "Checkpoint stem for the conv front end");
  cluster_cmd->add_option("--eval", ca.eval, "Metric report JSON to overlay");
  cluster_cmd->add_option("--k", ca.k, "Cluster count");
  cluster_cmd->add_option("--seed", ca.seed, "k-means seed");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic motion corpus");
  synth_cmd->add_option("--out", sa.out, "Output directory")->required();
  synth_cmd->add_option("--layout", sa.layout, "quadruped or humanoid");
  synth_cmd->add_option("--count", sa.count, "Number of motions");
  synth_cmd->add_option("--frames", sa.frames, "Frames per motion");
  synth_cmd->add_option("--seed", sa.seed, "Corpus seed");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(ta, out);
    if (*eval_cmd) return cmd_eval(ea, out);
    if (*embed_cmd) return cmd_embed(ma, out);
    if (*augment_cmd) return cmd_augment(aa, out);
    if (*cluster_cmd) return cmd_cluster(ca, out);
    if (*synth_cmd) return cmd_synth(sa, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace mdme
