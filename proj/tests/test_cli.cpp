#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mdme/checkpoint.hpp"
#include "mdme/cli.hpp"
#include "mdme/csv.hpp"
#include "mdme/presets.hpp"
#include "mdme/trainer.hpp"
#include "test_util.hpp"

using namespace mdme;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

// Runs the installed binary and returns its exit status.
int cli_process(const std::string& args) {
  const std::string cmd = std::string(MDME_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mdme_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string corpus_dir() {
  static const std::string dir = [] {
    const auto d = scratch("corpus");
    const auto r = cli({"synth", "--out", d.string(), "--count", "5", "--frames", "80", "--seed", "3"});
    REQUIRE(r.code == 0);
    return d.string();
  }();
  return dir;
}

json read_json(const fs::path& p) { return json::parse(read_text(p.string())); }

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("synth writes motions and a manifest") {
  const fs::path dir = corpus_dir();
  std::size_t motions = 0;
  for (const auto& e : fs::directory_iterator(dir)) motions += e.path().extension() == ".motion";
  CHECK(motions == 5);
  const auto m = RunManifest::from_json(read_json(dir / "manifest.json"));
  CHECK(m.subcommand == "synth");
  CHECK(m.version == kArtifactVersion);
  CHECK(!m.timestamp.empty());
  CHECK(m.outputs.at("motions").size() == 5);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"train", "--data", corpus_dir()}).code == 2);
  CHECK(cli({"--version"}).code == 0);
  CHECK(cli({"--help"}).code == 0);

  const auto out = scratch("bad_ablation");
  const auto r = cli({"train", "--data", corpus_dir(), "--config", "desk", "--out", out.string(), "--ablation", "nope"});
  CHECK(r.code == 2);
  for (const auto& key : ablation_names()) CHECK(r.err.find(key) != std::string::npos);
  CHECK(!fs::exists(out / "curve.csv"));

  const auto missing = cli({"embed", "--motion", "/no/such/file.motion", "--out", (out / "x.csv").string()});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("/no/such/file.motion") != std::string::npos);

  CHECK(cli({"train", "--data", corpus_dir(), "--config", "no-such-preset", "--out", out.string()}).code == 2);
  CHECK(cli({"augment", "--data", corpus_dir(), "--out", out.string(), "--scales", "1,abc"}).code == 2);
}

TEST_CASE("the binary follows the exit code convention") {
  CHECK(cli_process("--version") == 0);
  CHECK(cli_process("train --out /tmp/x") == 2);
  CHECK(cli_process("embed --motion /no/such/file.motion --out /tmp/x.csv") == 2);
  const auto dir = scratch("process");
  CHECK(cli_process("synth --out " + dir.string() + " --count 2 --frames 40") == 0);
}

TEST_CASE("embed writes one entropy column per subband") {
  const auto dir = scratch("embed");
  const auto motion = (fs::path(corpus_dir()) / "quadruped_00.motion").string();
  const auto csv = (dir / "q.csv").string();
  REQUIRE(cli({"embed", "--motion", motion, "--preset", "quadruped", "--out", csv}).code == 0);
  const auto table = read_text(csv);
  const std::string header = table.substr(0, table.find('\n'));
  CHECK(std::count(header.begin(), header.end(), ',') == 13);
  CHECK(header.rfind("frame[count],s0[bits]", 0) == 0);
  CHECK(count_lines(table) == 81);
  CHECK(fs::exists(csv + ".manifest.json"));

  const auto hdir = scratch("embed_h");
  const auto h1 = load_run_config("humanoid-h1");
  const auto hlayout = humanoid_layout((h1.model.goal_dim - 9) / 3);
  REQUIRE(hlayout.channels.size() == h1.model.goal_dim);
  const auto hmotion = (hdir / "h.motion").string();
  save_motion(synth_corpus(hlayout, 1, 30, 2)[0], hmotion);
  const auto hcsv = (hdir / "h.csv").string();
  REQUIRE(cli({"embed", "--motion", hmotion, "--preset", "humanoid-h1", "--out", hcsv}).code == 0);
  const auto ht = read_text(hcsv);
  const std::string hh = ht.substr(0, ht.find('\n'));
  CHECK(std::count(hh.begin(), hh.end(), ',') == 7);
  CHECK(cli({"embed", "--motion", hmotion, "--preset", "quadruped", "--out", hcsv}).code == 2);

  const auto again = (dir / "q2.csv").string();
  REQUIRE(cli({"embed", "--motion", motion, "--preset", "quadruped", "--out", again}).code == 0);
  CHECK(read_text(again) == table);
}

TEST_CASE("train, rerun from manifest, eval and cluster") {
  const auto dir = scratch("train");
  const auto a = dir / "a";
  auto r = cli({"train", "--data", corpus_dir(), "--config", "desk", "--out", a.string(), "--iterations", "30",
                "--ablation", "fft-instead-of-dwt", "--quiet"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  for (const auto* f : {"checkpoint.json", "checkpoint.bin", "curve.csv", "summary.json", "manifest.json"})
    CHECK(fs::exists(a / f));
  const auto manifest = read_json(a / "manifest.json");
  CHECK(manifest.at("options").at("ablation") == "fft-instead-of-dwt");
  CHECK(manifest.at("config").at("train").at("ablation") == "fft-instead-of-dwt");
  const auto curve = read_text((a / "curve.csv").string());
  CHECK(count_lines(curve) == 32);
  const auto summary = read_json(a / "summary.json");
  CHECK(summary.at("validation_motions").size() == 2);
  CHECK(summary.at("training_motions").size() == 3);

  const auto b = dir / "b";
  r = cli({"train", "--manifest", (a / "manifest.json").string(), "--out", b.string(), "--quiet"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(read_text((b / "curve.csv").string()) == curve);
  CHECK(read_text((b / "checkpoint.bin").string()) == read_text((a / "checkpoint.bin").string()));

  const auto e1 = dir / "eval1";
  const auto e2 = dir / "eval2";
  fs::create_directories(e1);
  fs::create_directories(e2);
  for (const auto& e : {e1, e2}) {
    r = cli({"eval", "--data", corpus_dir(), "--checkpoint", (a / "checkpoint").string(), "--out", e.string(),
             "--runs", "2", "--seeds", "2"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  CHECK(read_text((e1 / "report.csv").string()) == read_text((e2 / "report.csv").string()));
  const auto report = MetricReport::from_json(read_text((e1 / "report.json").string()));
  CHECK(report.motions.size() == 5);
  CHECK(report.motions[0].executions == 4);
  CHECK(RunManifest::from_json(read_json(e1 / "manifest.json")).subcommand == "eval");

  const auto c = dir / "cluster";
  fs::create_directories(c);
  r = cli({"cluster", "--data", corpus_dir(), "--out", c.string(), "--k", "4", "--eval",
           (e1 / "report.json").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto overlay = read_text((c / "overlay.csv").string());
  CHECK(overlay.rfind("motion[id],pc1[unitless],pc2[unitless],cluster[label],mean_error[smape]\n", 0) == 0);
  CHECK(count_lines(overlay) == 6);
  std::set<std::string> labels;
  std::istringstream rows(read_text((c / "clusters.csv").string()));
  std::string line;
  std::getline(rows, line);
  while (std::getline(rows, line)) labels.insert(line.substr(line.rfind(',') + 1));
  CHECK(labels.size() == 4);
  const auto cm = read_json(c / "manifest.json");
  CHECK(cm.at("options").at("explained_variance_ratio").size() == 2);
}

TEST_CASE("eval of a perfect oracle checkpoint") {
  const auto dir = scratch("oracle");
  RunConfig cfg = load_run_config("desk");
  cfg.retarget.identity = true;
  cfg.model.output_dim = cfg.model.goal_dim;
  MdmeModel model(cfg.model, Ablation::full, 1);
  mdme::testing::make_pass_through(model);
  save_checkpoint((dir / "oracle").string(), model, to_json(cfg));
  const auto r = cli({"eval", "--data", corpus_dir(), "--checkpoint", (dir / "oracle").string(), "--out",
                      dir.string(), "--noise", "none"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto report = MetricReport::from_json(read_text((dir / "report.json").string()));
  CHECK(report.mean.total < 1e-6);
  CHECK(report.motions.size() == 5);
}

TEST_CASE("augment multiplies the corpus") {
  const auto dir = scratch("augment");
  const auto r = cli({"augment", "--data", corpus_dir(), "--out", dir.string(), "--reflections", "none,x,y,xy",
                      "--scales", "0.9,1,1.1"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::size_t motions = 0;
  for (const auto& e : fs::directory_iterator(dir)) motions += e.path().extension() == ".motion";
  CHECK(motions == 12 * 5);
  CHECK(read_json(dir / "manifest.json").at("outputs").at("motions").size() == 60);
}
